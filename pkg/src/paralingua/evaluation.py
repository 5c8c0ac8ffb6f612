"""Unweighted Average Recall and weighted late fusion of posteriors."""

import math
from dataclasses import dataclass
from itertools import product

import numpy as np

from .classify import PosteriorMatrix
from .errors import AlignmentError, DataError, ParameterError

DEFAULT_STEP = 0.05
MAX_FUSED_SYSTEMS = 5


@dataclass(frozen=True)
class ConfusionMatrix:
    class_names: list
    counts: np.ndarray  # rows = true class, columns = predicted class

    def recalls(self):
        """Per-class recall; NaN for classes without true instances."""
        totals = self.counts.sum(axis=1)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(totals > 0, np.diag(self.counts) / np.maximum(totals, 1), np.nan)

    def uar(self):
        r = self.recalls()
        return float(np.mean(r[~np.isnan(r)]))

    def to_json(self):
        return {"class_names": list(self.class_names), "counts": self.counts.astype(int).tolist()}


def confusion_matrix(truth, predicted, class_names=None):
    truth = [str(t) for t in truth]
    predicted = [str(p) for p in predicted]
    if len(truth) != len(predicted):
        raise AlignmentError(f"{len(truth)} true labels but {len(predicted)} predictions")
    if not truth:
        raise ParameterError("cannot evaluate an empty label list")
    classes = list(class_names) if class_names is not None else sorted(set(truth))
    index = {c: i for i, c in enumerate(classes)}
    for lab in truth:
        if lab not in index:
            raise DataError(f"true label {lab!r} outside the class set {classes}")
    counts = np.zeros((len(classes), len(classes)), dtype=np.int64)
    for t, p in zip(truth, predicted):
        if p not in index:
            raise DataError(f"predicted label {p!r} outside the class set {classes}")
        counts[index[t], index[p]] += 1
    return ConfusionMatrix(classes, counts)


def uar(truth, predicted, class_names=None):
    """Mean per-class recall over the classes that occur in ``truth``."""
    return confusion_matrix(truth, predicted, class_names).uar()


@dataclass(frozen=True)
class FusionWeights:
    system_names: list
    weights: tuple
    step: float = DEFAULT_STEP

    def __post_init__(self):
        w = tuple(float(v) for v in self.weights)
        if len(w) != len(self.system_names):
            raise ParameterError(f"{len(w)} weights for {len(self.system_names)} systems")
        if any(v < 0 for v in w) or abs(math.fsum(w) - 1.0) > 1e-9:
            raise ParameterError(f"fusion weights must be non-negative and sum to 1, got {w}")
        if self.step is not None:
            for v in w:
                if abs(v / self.step - round(v / self.step)) > 1e-6:
                    raise ParameterError(f"fusion weight {v} is not a multiple of step {self.step}")
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "system_names", list(self.system_names))


def lattice_steps(step):
    """Number of increments that make up 1; raises if ``step`` does not divide 1."""
    if not 0 < step <= 1:
        raise ParameterError(f"fusion step must lie in (0, 1], got {step}")
    n = round(1.0 / step)
    if abs(n * step - 1.0) > 1e-9:
        raise ParameterError(f"fusion step {step} does not divide 1 evenly")
    return n


def weight_lattice(n_systems, step=DEFAULT_STEP):
    """All weight vectors on the step-lattice simplex.

    Ordered so that weight on earlier systems decreases: the first candidate
    puts everything on system 1, the last everything on the final system.
    """
    n = lattice_steps(step)
    if n_systems < 1:
        raise ParameterError("need at least one system")
    ranges = [range(n, -1, -1)] * (n_systems - 1)
    for head in product(*ranges):
        rest = n - sum(head)
        if rest >= 0:
            yield tuple(i / n for i in head + (rest,))


def _check_aligned(systems):
    if not systems:
        raise ParameterError("no systems to fuse")
    ref = systems[0]
    for s in systems[1:]:
        if s.utterance_ids != ref.utterance_ids:
            raise AlignmentError("systems do not share utterance ids in the same order")
        if s.class_names != ref.class_names:
            raise AlignmentError(f"class mismatch: {s.class_names} vs {ref.class_names}")


def fuse_posteriors(systems, w):
    """Convex combination of aligned posterior matrices."""
    systems = list(systems)
    _check_aligned(systems)
    if not isinstance(w, FusionWeights):
        w = FusionWeights([f"s{i}" for i in range(len(systems))], w, step=None)
    if len(w.weights) != len(systems):
        raise ParameterError(f"{len(w.weights)} weights for {len(systems)} systems")
    probs = sum(wi * s.probs for wi, s in zip(w.weights, systems))
    return PosteriorMatrix(systems[0].utterance_ids, systems[0].class_names, probs)


def _argmax_labels(probs, class_names):
    return [class_names[i] for i in np.argmax(probs, axis=1)]


def grid_search_weights(systems, truth, step=DEFAULT_STEP, system_names=None):
    """Exhaustive search of the fusion lattice for the highest UAR.

    Returns ``(FusionWeights, uar)``. Among equally good weight vectors the one
    enumerated first by :func:`weight_lattice` wins, i.e. the one with the
    most weight on the earliest systems.
    """
    systems = list(systems)
    if not 1 <= len(systems) <= MAX_FUSED_SYSTEMS:
        raise ParameterError(f"grid search supports 1..{MAX_FUSED_SYSTEMS} systems, got {len(systems)}")
    _check_aligned(systems)
    lattice_steps(step)
    names = list(system_names) if system_names is not None else [f"s{i}" for i in range(len(systems))]
    classes = systems[0].class_names
    stack = np.stack([s.probs for s in systems])
    best_w, best_u = None, -1.0
    for cand in weight_lattice(len(systems), step):
        fused = np.tensordot(np.asarray(cand), stack, axes=1)
        u = uar(truth, _argmax_labels(fused, classes), classes)
        if u > best_u:
            best_w, best_u = cand, u
    return FusionWeights(names, best_w, step), best_u
