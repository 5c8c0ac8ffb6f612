"""Calibrated one-vs-rest linear SVMs and class-balancing ensembles.

Each binary problem is an L2-regularized L1-hinge SVM solved in the dual by
coordinate descent, visiting examples in a freshly shuffled order every
epoch. The bias is learned as the weight of a constant-1 feature. Decision
values are mapped to probabilities by a Platt sigmoid fitted on the training
margins, and the per-class probabilities are normalized to sum to one.
"""

import csv
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numba
import numpy as np

from ._io import check_version, dump_json, fmt, load_json, to_list, write_text
from .dataset import FeatureTable
from .errors import AlignmentError, DataError, FormatError, ParameterError

C_GRID = (1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0)
DEFAULT_REPEATS = 100
SOLVER_TOL = 1e-4
MAX_EPOCHS = 1000


@numba.njit(cache=True, nogil=True)
def _dual_cd(X, y, C, tol, max_epochs, seed):
    n, d = X.shape
    alpha = np.zeros(n)
    w = np.zeros(d)
    qd = np.empty(n)
    for i in range(n):
        qd[i] = X[i] @ X[i]
    order = np.arange(n)
    # xorshift64* stream for the per-epoch shuffles
    state = np.uint64(seed) | np.uint64(1)
    epochs = 0
    for epoch in range(max_epochs):
        epochs = epoch + 1
        for i in range(n - 1, 0, -1):
            state ^= state >> np.uint64(12)
            state ^= state << np.uint64(25)
            state ^= state >> np.uint64(27)
            r = state * np.uint64(2685821657736338717)
            j = np.int64(r % np.uint64(i + 1))
            tmp = order[i]
            order[i] = order[j]
            order[j] = tmp
        pg_max = -np.inf
        pg_min = np.inf
        for s in range(n):
            i = order[s]
            g = y[i] * (w @ X[i]) - 1.0
            a = alpha[i]
            if a == 0.0:
                pg = min(g, 0.0)
            elif a == C:
                pg = max(g, 0.0)
            else:
                pg = g
            if pg > pg_max:
                pg_max = pg
            if pg < pg_min:
                pg_min = pg
            if pg != 0.0 and qd[i] > 0.0:
                new_a = min(max(a - g / qd[i], 0.0), C)
                step = (new_a - a) * y[i]
                if step != 0.0:
                    for k in range(d):
                        w[k] += step * X[i, k]
                alpha[i] = new_a
        if pg_max - pg_min < tol:
            break
    return w, epochs


def train_binary_svm(x, y, c, seed=0, tol=SOLVER_TOL, max_epochs=MAX_EPOCHS):
    """Weights and bias of a +1/-1 linear SVM trained by dual coordinate descent."""
    xa = np.ascontiguousarray(np.hstack([x, np.ones((x.shape[0], 1))]), dtype=np.float64)
    w, _ = _dual_cd(xa, np.asarray(y, dtype=np.float64), float(c), float(tol), int(max_epochs), int(seed))
    return w[:-1], float(w[-1])


def _sigmoid_prob(fab):
    # 1 / (1 + exp(fab)) without overflow
    out = np.empty_like(fab)
    pos = fab >= 0
    e = np.exp(-fab[pos])
    out[pos] = e / (1.0 + e)
    out[~pos] = 1.0 / (1.0 + np.exp(fab[~pos]))
    return out


def fit_platt(decision, positive, max_iter=100, min_step=1e-10, sigma=1e-12, eps=1e-5):
    """Platt sigmoid P(pos|f) = 1/(1+exp(A f + B)) by Newton's method with backtracking.

    Uses the smoothed targets (N+ + 1)/(N+ + 2) and 1/(N- + 2).
    """
    f = np.asarray(decision, dtype=float)
    positive = np.asarray(positive, dtype=bool)
    n_pos = int(positive.sum())
    n_neg = positive.size - n_pos
    t = np.where(positive, (n_pos + 1.0) / (n_pos + 2.0), 1.0 / (n_neg + 2.0))

    def objective(a, b):
        fab = f * a + b
        return np.sum(np.where(fab >= 0, t * fab + np.log1p(np.exp(-np.abs(fab))),
                               (t - 1.0) * fab + np.log1p(np.exp(-np.abs(fab)))))

    a, b = 0.0, float(np.log((n_neg + 1.0) / (n_pos + 1.0)))
    fval = objective(a, b)
    for _ in range(max_iter):
        p = _sigmoid_prob(f * a + b)
        q = 1.0 - p
        pq = p * q
        h11 = sigma + np.sum(f * f * pq)
        h22 = sigma + np.sum(pq)
        h21 = np.sum(f * pq)
        g1 = np.sum(f * (t - p))
        g2 = np.sum(t - p)
        if abs(g1) < eps and abs(g2) < eps:
            break
        det = h11 * h22 - h21 * h21
        da = -(h22 * g1 - h21 * g2) / det
        db = -(-h21 * g1 + h11 * g2) / det
        gd = g1 * da + g2 * db
        step = 1.0
        while step >= min_step:
            na, nb = a + step * da, b + step * db
            nf = objective(na, nb)
            if nf < fval + 1e-4 * step * gd:
                a, b, fval = na, nb, nf
                break
            step /= 2.0
        if step < min_step:
            break
    return float(a), float(b)


@dataclass(frozen=True)
class PosteriorMatrix:
    utterance_ids: list
    class_names: list
    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float).reshape(len(self.utterance_ids), len(self.class_names))
        if p.size and (np.any(p < 0) or np.any(p > 1) or np.any(np.abs(p.sum(axis=1) - 1.0) > 1e-9)):
            raise DataError("posterior rows must lie in [0, 1] and sum to 1")
        object.__setattr__(self, "utterance_ids", list(self.utterance_ids))
        object.__setattr__(self, "class_names", list(self.class_names))
        object.__setattr__(self, "probs", p)

    def __len__(self):
        return len(self.utterance_ids)

    def predicted(self):
        """Argmax class names; ties go to the earlier class."""
        if not len(self):
            return []
        return [self.class_names[i] for i in np.argmax(self.probs, axis=1)]

    def select(self, ids):
        index = {u: i for i, u in enumerate(self.utterance_ids)}
        missing = [u for u in ids if u not in index]
        if missing:
            raise AlignmentError(f"posteriors missing utterance {missing[0]!r}")
        return PosteriorMatrix(list(ids), self.class_names, self.probs[[index[u] for u in ids]])


def save_posteriors(p, path):
    lines = [",".join(["utterance_id"] + p.class_names)]
    lines += [",".join([u] + [fmt(v) for v in row]) for u, row in zip(p.utterance_ids, p.probs)]
    write_text(path, "\n".join(lines) + "\n")


def load_posteriors(path):
    if not os.path.exists(path):
        raise FileNotFoundError(path)
    with open(path, encoding="utf-8", newline="") as f:
        rows = [r for r in csv.reader(f) if r]
    if not rows or rows[0][0] != "utterance_id" or len(rows[0]) < 2:
        raise FormatError(f"{path}: header must be utterance_id followed by class names")
    classes = rows[0][1:]
    ids, probs = [], []
    for i, row in enumerate(rows[1:], start=2):
        if len(row) != len(classes) + 1:
            raise FormatError(f"{path}: ragged row {i}")
        ids.append(row[0])
        try:
            probs.append([float(v) for v in row[1:]])
        except ValueError:
            raise FormatError(f"{path}: non-numeric cell in row {i}") from None
    try:
        return PosteriorMatrix(ids, classes, np.array(probs).reshape(len(ids), len(classes)))
    except DataError as exc:
        raise FormatError(f"{path}: {exc}") from exc


@dataclass(frozen=True)
class LinearModel:
    class_names: list
    weights: np.ndarray  # K x F
    biases: np.ndarray  # K
    platt: np.ndarray  # K x 2, columns (A, B)
    c_value: float

    @property
    def dim(self):
        return self.weights.shape[1]

    def decision(self, x):
        return x @ self.weights.T + self.biases

    def to_json(self):
        return {
            "format_version": 1,
            "class_names": list(self.class_names),
            "c_value": float(self.c_value),
            "weights": to_list(self.weights),
            "biases": to_list(self.biases),
            "platt": [{"A": float(a), "B": float(b)} for a, b in self.platt],
        }

    @classmethod
    def from_json(cls, obj, path="<json>"):
        check_version(obj, path)
        try:
            return cls(
                list(obj["class_names"]),
                np.asarray(obj["weights"], float).reshape(len(obj["class_names"]), -1),
                np.asarray(obj["biases"], float),
                np.array([[d["A"], d["B"]] for d in obj["platt"]], float),
                float(obj["c_value"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"{path}: malformed model ({exc})") from exc


def _xy(x, y=None):
    if isinstance(x, FeatureTable):
        ids, arr = x.utterance_ids, x.vectors
    else:
        arr = np.asarray(x, dtype=float)
        arr = arr.reshape(len(arr), -1) if arr.ndim == 1 else arr
        ids = [str(i) for i in range(arr.shape[0])]
    if not np.all(np.isfinite(arr)):
        raise DataError("non-finite feature value")
    if y is not None and len(y) != arr.shape[0]:
        raise AlignmentError(f"{arr.shape[0]} feature rows but {len(y)} labels")
    return ids, arr


def train_linear_svm(x, y, c, seed=0):
    """One-vs-rest calibrated linear SVM over the sorted set of labels in ``y``."""
    _, arr = _xy(x, y)
    if not c > 0:
        raise ParameterError(f"C must be positive, got {c}")
    y = np.asarray([str(v) for v in y])
    classes = sorted(set(y.tolist()))
    if len(classes) < 2:
        raise ParameterError(f"need at least 2 classes, got {classes}")
    seeds = np.random.default_rng(seed).integers(1, 2**62, size=len(classes))
    W, b, platt = [], [], []
    for k, cls in enumerate(classes):
        pos = y == cls
        wk, bk = train_binary_svm(arr, np.where(pos, 1.0, -1.0), c, seed=int(seeds[k]))
        W.append(wk)
        b.append(bk)
        platt.append(fit_platt(arr @ wk + bk, pos))
    return LinearModel(classes, np.array(W), np.array(b), np.array(platt), float(c))


def _posterior_probs(model, arr):
    f = model.decision(arr)
    p = _sigmoid_prob(f * model.platt[:, 0] + model.platt[:, 1])
    # keep every class strictly positive so rows never degenerate to 0/0
    p = np.maximum(p, 1e-300)
    return p / p.sum(axis=1, keepdims=True)


def predict_posteriors(model, x):
    ids, arr = _xy(x)
    if arr.shape[0] == 0:
        return PosteriorMatrix([], model.class_names, np.zeros((0, len(model.class_names))))
    if arr.shape[1] != model.dim:
        raise AlignmentError(f"feature dimension {arr.shape[1]} does not match model dimension {model.dim}")
    return PosteriorMatrix(ids, model.class_names, _posterior_probs(model, arr))


@dataclass(frozen=True)
class EnsembleModel:
    members: list
    repeats: int
    seed: int

    @property
    def class_names(self):
        return self.members[0].class_names

    def to_json(self):
        return {
            "format_version": 1,
            "repeats": int(self.repeats),
            "seed": int(self.seed),
            "members": [m.to_json() for m in self.members],
        }

    @classmethod
    def from_json(cls, obj, path="<json>"):
        check_version(obj, path)
        try:
            members = [LinearModel.from_json(m, path) for m in obj["members"]]
            return cls(members, int(obj["repeats"]), int(obj["seed"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"{path}: malformed ensemble ({exc})") from exc

    def save(self, path):
        dump_json(self.to_json(), path)

    @classmethod
    def load(cls, path):
        return cls.from_json(load_json(path), path)


def balanced_subsample(y, seed, repeat):
    """Sorted row indices with every class cut down to the minority count.

    Drawn without replacement from a stream keyed by (seed, repeat).
    """
    y = np.asarray([str(v) for v in y])
    classes = sorted(set(y.tolist()))
    n_min = min(int(np.sum(y == c)) for c in classes)
    rng = np.random.default_rng([int(seed), int(repeat)])
    picked = [rng.choice(np.flatnonzero(y == c), size=n_min, replace=False) for c in classes]
    return np.sort(np.concatenate(picked))


def train_downsampled_ensemble(x, y, c, repeats=DEFAULT_REPEATS, seed=0, jobs=1):
    """``repeats`` calibrated SVMs, each on its own class-balanced subsample."""
    _, arr = _xy(x, y)
    if int(repeats) != repeats or repeats < 1:
        raise ParameterError(f"repeats must be a positive integer, got {repeats}")
    y = [str(v) for v in y]
    if len(set(y)) < 2:
        raise ParameterError("need at least 2 classes")

    def member(r):
        idx = balanced_subsample(y, seed, r)
        member_seed = int(np.random.default_rng([int(seed), int(r), 1]).integers(2**62))
        return train_linear_svm(arr[idx], [y[i] for i in idx], c, seed=member_seed)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            members = list(pool.map(member, range(int(repeats))))
    else:
        members = [member(r) for r in range(int(repeats))]
    return EnsembleModel(members, int(repeats), int(seed))


def predict_ensemble(e, x):
    """Unweighted mean of the member posteriors."""
    ids, arr = _xy(x)
    k = len(e.class_names)
    if arr.shape[0] == 0:
        return PosteriorMatrix([], e.class_names, np.zeros((0, k)))
    if arr.shape[1] != e.members[0].dim:
        raise AlignmentError(f"feature dimension {arr.shape[1]} does not match model dimension {e.members[0].dim}")
    total = np.zeros((arr.shape[0], k))
    for m in e.members:
        total += _posterior_probs(m, arr)
    return PosteriorMatrix(ids, e.class_names, total / len(e.members))


def fold_feature_scaling(model, mean, std):
    """Model taking raw features that equals ``model`` applied to z-scored ones.

    Dimensions with zero std get weight 0, matching their z-score of 0.
    """
    mean, std = np.asarray(mean, float), np.asarray(std, float)
    inv = np.where(std > 0, 1.0 / np.where(std > 0, std, 1.0), 0.0)
    w = model.weights * inv
    b = model.biases - w @ mean
    return LinearModel(model.class_names, w, b, model.platt, model.c_value)
