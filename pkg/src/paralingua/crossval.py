"""Speaker-independent cross-validation and the train/dev protocol.

Both drivers train one downsampled SVM ensemble per (system, C), pick the C
with the best held-out UAR for each system separately, and then search fusion
weights over the selected systems' held-out posteriors.
"""

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .classify import C_GRID, PosteriorMatrix, predict_ensemble, train_downsampled_ensemble
from .errors import AlignmentError, ParameterError
from .evaluation import DEFAULT_STEP, MAX_FUSED_SYSTEMS, confusion_matrix, fuse_posteriors, grid_search_weights, uar


@dataclass(frozen=True)
class FoldPlan:
    k: int
    assignment: dict  # speaker_id -> fold index

    def __post_init__(self):
        bad = [s for s, f in self.assignment.items() if not 0 <= f < self.k]
        if bad:
            raise ParameterError(f"speaker {bad[0]!r} assigned outside [0, {self.k})")

    def fold_of(self, speaker_id):
        try:
            return self.assignment[speaker_id]
        except KeyError:
            raise AlignmentError(f"speaker {speaker_id!r} not in the fold plan") from None

    def speakers_in(self, fold):
        return sorted(s for s, f in self.assignment.items() if f == fold)

    def to_json(self):
        return {"k": self.k, "assignment": dict(sorted(self.assignment.items()))}


def make_speaker_folds(manifest, k=10, seed=0):
    """Shuffle speakers with ``seed`` and deal them round-robin into ``k`` folds."""
    speakers = sorted(set(r.speaker_id for r in manifest.records))
    if int(k) != k or k < 2:
        raise ParameterError(f"fold count must be an integer >= 2, got {k}")
    if len(speakers) < k:
        raise ParameterError(f"{len(speakers)} speakers cannot fill {k} folds")
    order = np.random.default_rng(seed).permutation(len(speakers))
    return FoldPlan(int(k), {speakers[j]: pos % k for pos, j in enumerate(order)})


def _zscore(train, *others):
    mean = train.mean(axis=0)
    std = train.std(axis=0)
    safe = np.where(std > 0, std, 1.0)

    def f(a):
        return np.where(std > 0, (a - mean) / safe, 0.0)

    return (f(train),) + tuple(f(a) for a in others)


def _expand(probs, model_classes, classes):
    """Posterior columns re-indexed to ``classes``; absent classes get 0."""
    if list(model_classes) == list(classes):
        return probs
    out = np.zeros((probs.shape[0], len(classes)))
    for j, c in enumerate(model_classes):
        out[:, classes.index(c)] = probs[:, j]
    return out


def _job_seed(*key):
    return int(np.random.SeedSequence([int(k) for k in key]).generate_state(1)[0])


@dataclass
class SystemResult:
    best_c: float
    pooled_uar: float
    uar_per_c: dict
    uar_per_fold: list
    confusion: object
    posteriors: PosteriorMatrix = field(repr=False)

    def to_json(self):
        return {
            "best_C": self.best_c,
            "uar_per_fold": self.uar_per_fold,
            "pooled_uar": self.pooled_uar,
            "uar_per_C": {repr(c): u for c, u in self.uar_per_c.items()},
            "confusion": self.confusion.to_json(),
        }


@dataclass
class CVReport:
    task: str
    protocol: str
    systems: dict
    fusion: dict
    plan: FoldPlan | None = None

    def to_json(self):
        out = {
            "task": self.task,
            "protocol": self.protocol,
            "systems": {name: r.to_json() for name, r in self.systems.items()},
            "fusion": self.fusion,
        }
        if self.plan is not None:
            out["fold_plan"] = self.plan.to_json()
        return out

    def dumps(self):
        return json.dumps(self.to_json(), indent=1) + "\n"

    def summary(self):
        lines = [f"task {self.task} ({self.protocol})", f"{'system':<24} {'best C':>8} {'UAR':>8}"]
        for name, r in self.systems.items():
            lines.append(f"{name:<24} {r.best_c:>8g} {r.pooled_uar:>8.4f}")
        if self.fusion:
            w = " ".join(f"{n}={v:g}" for n, v in zip(self.fusion["systems"], self.fusion["weights"]))
            lines.append(f"{'fusion':<24} {'':>8} {self.fusion['uar']:>8.4f}  [{w}]")
        return "\n".join(lines)


def mean_task_uar(reports):
    """Average of the fused (or single-system) UAR over several task reports."""
    vals = [r.fusion["uar"] for r in reports]
    return float(np.mean(vals))


def _labelled_records(manifest, task, splits):
    if task not in manifest.task_names:
        raise ParameterError(f"unknown task {task!r}; manifest has {manifest.task_names}")
    return [r for r in manifest.records if r.split in splits and task in r.labels]


def _select(feature_tables, ids):
    if not feature_tables:
        raise ParameterError("no feature tables supplied")
    if len(feature_tables) > MAX_FUSED_SYSTEMS:
        raise ParameterError(f"at most {MAX_FUSED_SYSTEMS} systems can be fused")
    return {name: t.select(ids).vectors for name, t in feature_tables.items()}


def _pick_best(c_grid, pooled, truth, classes):
    scores = {c: uar(truth, pooled[c].predicted(), classes) for c in c_grid}
    best = max(c_grid, key=lambda c: (scores[c], -c_grid.index(c)))
    return best, scores


def _fuse(names, results, truth, classes, step):
    systems = [results[n].posteriors for n in names]
    weights, fused_uar = grid_search_weights(systems, truth, step, system_names=names)
    fused = fuse_posteriors(systems, weights)
    return {
        "systems": list(names),
        "weights": list(weights.weights),
        "step": step,
        "uar": fused_uar,
        "confusion": confusion_matrix(truth, fused.predicted(), classes).to_json(),
    }


def run_cv(manifest, feature_tables, task, plan, c_grid=C_GRID, repeats=100, seed=0,
           step=DEFAULT_STEP, jobs=1, splits=("train", "dev"), standardize=True):
    """Pooled out-of-fold evaluation of every system and of their fusion."""
    records = _labelled_records(manifest, task, splits)
    ids = [r.utterance_id for r in records]
    y = np.array([r.labels[task] for r in records])
    classes = sorted(set(y.tolist()))
    folds = np.array([plan.fold_of(r.speaker_id) for r in records])
    data = _select(feature_tables, ids)
    names = list(feature_tables)
    c_grid = [float(c) for c in c_grid]

    def job(key):
        fold, si, ci = key
        train, test = folds != fold, folds == fold
        x = data[names[si]]
        xtr, xte = _zscore(x[train], x[test]) if standardize else (x[train], x[test])
        ens = train_downsampled_ensemble(xtr, y[train].tolist(), c_grid[ci], repeats,
                                         seed=_job_seed(seed, fold, si, ci))
        return _expand(predict_ensemble(ens, xte).probs, ens.class_names, classes)

    keys = [(f, si, ci) for f in range(plan.k) if np.any(folds == f)
            for si in range(len(names)) for ci in range(len(c_grid))]
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outputs = dict(zip(keys, pool.map(job, keys)))
    else:
        outputs = {key: job(key) for key in keys}

    results = {}
    for si, name in enumerate(names):
        pooled = {}
        for ci, c in enumerate(c_grid):
            probs = np.zeros((len(ids), len(classes)))
            for f in range(plan.k):
                if (f, si, ci) in outputs:
                    probs[folds == f] = outputs[(f, si, ci)]
            pooled[c] = PosteriorMatrix(ids, classes, probs)
        best, scores = _pick_best(c_grid, pooled, y.tolist(), classes)
        pred = np.array(pooled[best].predicted())
        per_fold = [uar(y[folds == f].tolist(), pred[folds == f].tolist(), classes)
                    for f in range(plan.k) if np.any(folds == f)]
        results[name] = SystemResult(best, scores[best], scores, per_fold,
                                     confusion_matrix(y.tolist(), pred.tolist(), classes), pooled[best])
    fusion = _fuse(names, results, y.tolist(), classes, step)
    return CVReport(task, "cv", results, fusion, plan)


def run_dev(manifest, feature_tables, task, c_grid=C_GRID, repeats=100, seed=0,
            step=DEFAULT_STEP, jobs=1, standardize=True):
    """Train on the train split, select C and fusion weights on the dev split."""
    train_recs = _labelled_records(manifest, task, ("train",))
    dev_recs = _labelled_records(manifest, task, ("dev",))
    if not train_recs or not dev_recs:
        raise ParameterError("train/dev protocol needs labelled train and dev utterances")
    ytr = [r.labels[task] for r in train_recs]
    ydev = [r.labels[task] for r in dev_recs]
    dev_ids = [r.utterance_id for r in dev_recs]
    classes = sorted(set(ytr) | set(ydev))
    tr = _select(feature_tables, [r.utterance_id for r in train_recs])
    dv = _select(feature_tables, dev_ids)
    names = list(feature_tables)
    c_grid = [float(c) for c in c_grid]

    def job(key):
        si, ci = key
        xtr, xdv = _zscore(tr[names[si]], dv[names[si]]) if standardize else (tr[names[si]], dv[names[si]])
        ens = train_downsampled_ensemble(xtr, ytr, c_grid[ci], repeats, seed=_job_seed(seed, si, ci))
        return PosteriorMatrix(dev_ids, classes, _expand(predict_ensemble(ens, xdv).probs, ens.class_names, classes))

    keys = [(si, ci) for si in range(len(names)) for ci in range(len(c_grid))]
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outputs = dict(zip(keys, pool.map(job, keys)))
    else:
        outputs = {key: job(key) for key in keys}

    results = {}
    for si, name in enumerate(names):
        pooled = {c: outputs[(si, ci)] for ci, c in enumerate(c_grid)}
        best, scores = _pick_best(c_grid, pooled, ydev, classes)
        pred = pooled[best].predicted()
        results[name] = SystemResult(best, scores[best], scores, [scores[best]],
                                     confusion_matrix(ydev, pred, classes), pooled[best])
    fusion = _fuse(names, results, ydev, classes, step)
    return CVReport(task, "dev", results, fusion, None)
