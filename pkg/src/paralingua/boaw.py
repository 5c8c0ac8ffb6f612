"""Bag-of-Audio-Words: random-sample codebooks and multi-assignment histograms."""

from dataclasses import dataclass

import numpy as np

from ._io import check_version, dump_json, load_json, to_list
from .errors import AlignmentError, FormatError, ParameterError

DEFAULT_SIZES = (32, 64, 128, 256, 512, 1024, 2048, 4096, 8192, 16384)
DEFAULT_ASSIGNMENTS = 5
SOURCES = ("lld", "delta")

# upper bound on frames x centroids x dims held in memory at once
_CHUNK_ELEMENTS = 1 << 22


@dataclass(frozen=True)
class Codebook:
    centroids: np.ndarray
    source: str = "lld"
    seed: int = 0

    def __post_init__(self):
        c = np.asarray(self.centroids, dtype=float)
        if c.ndim != 2 or c.shape[0] < 1:
            raise ParameterError("codebook needs at least one centroid row")
        if not np.all(np.isfinite(c)):
            raise ParameterError("codebook centroids must be finite")
        if self.source not in SOURCES:
            raise ParameterError(f"codebook source must be one of {SOURCES}")
        c.setflags(write=False)
        object.__setattr__(self, "centroids", c)

    @property
    def size_n(self):
        return self.centroids.shape[0]

    @property
    def dim(self):
        return self.centroids.shape[1]

    def to_json(self):
        return {
            "format_version": 1,
            "source": self.source,
            "seed": int(self.seed),
            "centroids": to_list(self.centroids),
        }

    @classmethod
    def from_json(cls, obj, path="<json>"):
        check_version(obj, path)
        try:
            return cls(np.asarray(obj["centroids"], dtype=float), obj["source"], int(obj["seed"]))
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"{path}: malformed codebook ({exc})") from exc

    def save(self, path):
        dump_json(self.to_json(), path)

    @classmethod
    def load(cls, path):
        return cls.from_json(load_json(path), path)


def learn_codebook(frames, n, seed=0, source="lld"):
    """Draw ``n`` distinct frames uniformly at random as centroids.

    ``frames`` is the pooled (T_total x D) training frame array or a sequence
    of FrameMatrix objects. When fewer than ``n`` frames exist all of them are
    used, in a seed-determined order.
    """
    if int(n) != n or n <= 0:
        raise ParameterError(f"codebook size must be a positive integer, got {n}")
    pooled = _pool(frames)
    rng = np.random.default_rng(seed)
    take = min(int(n), pooled.shape[0])
    idx = rng.choice(pooled.shape[0], size=take, replace=False)
    return Codebook(pooled[idx], source=source, seed=seed)


def _pool(frames):
    if isinstance(frames, np.ndarray):
        pooled = np.asarray(frames, dtype=float)
    else:
        mats = [getattr(m, "frames", m) for m in frames]
        if not mats:
            raise ParameterError("no frames to learn a codebook from")
        pooled = np.concatenate([np.asarray(m, dtype=float) for m in mats])
    if pooled.ndim != 2 or pooled.shape[0] < 1:
        raise ParameterError("no frames to learn a codebook from")
    return pooled


def squared_distances(x, centroids):
    """Exact per-pair squared Euclidean distances, computed in frame chunks."""
    T, D = x.shape
    N = centroids.shape[0]
    step = max(1, _CHUNK_ELEMENTS // max(1, N * D))
    out = np.empty((T, N))
    for lo in range(0, T, step):
        diff = x[lo:lo + step, None, :] - centroids[None, :, :]
        out[lo:lo + step] = np.einsum("tnd,tnd->tn", diff, diff)
    return out


def nearest_centroids(cb, x, assignments):
    """Indices (T x assignments) of the closest centroids, lower index wins ties."""
    d2 = squared_distances(x, cb.centroids)
    return np.argsort(d2, axis=1, kind="stable")[:, :assignments]


def encode_boaw(cb, m, assignments=DEFAULT_ASSIGNMENTS):
    """Histogram of the ``assignments`` nearest centroids per frame, divided by T.

    The result sums to ``assignments``.
    """
    x = getattr(m, "frames", m)
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[1] != cb.dim:
        raise AlignmentError(f"frame dimension {x.shape[-1]} does not match codebook dimension {cb.dim}")
    if int(assignments) != assignments or assignments < 1:
        raise ParameterError(f"assignments must be a positive integer, got {assignments}")
    if assignments > cb.size_n:
        raise ParameterError(f"assignments={assignments} exceeds codebook size {cb.size_n}")
    idx = nearest_centroids(cb, x, int(assignments))
    counts = np.bincount(idx.ravel(), minlength=cb.size_n)
    return counts / x.shape[0]


def encode_boaw_paired(cb_lld, cb_delta, m, deltas, assignments=DEFAULT_ASSIGNMENTS):
    """Concatenated LLD-codebook and delta-codebook histograms."""
    if m.n_frames != deltas.n_frames:
        raise AlignmentError(f"{m.utterance_id}: {m.n_frames} LLD frames but {deltas.n_frames} delta frames")
    return np.concatenate([encode_boaw(cb_lld, m, assignments), encode_boaw(cb_delta, deltas, assignments)])
