"""Corpus-level encoding: deltas, train-fitted standardization, BoAW and FV tables."""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .boaw import DEFAULT_ASSIGNMENTS, encode_boaw_paired, learn_codebook
from .dataset import FeatureTable, apply_standardizer, compute_deltas, fit_standardizer
from .errors import AlignmentError
from .fisher import encode_fisher, fit_gmm


def _map(fn, items, jobs):
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(i) for i in items]


@dataclass(frozen=True)
class PreparedFrames:
    """Standardized LLD and delta frames for a list of utterances."""

    lld: list
    deltas: list
    lld_standardizer: object
    delta_standardizer: object

    @property
    def utterance_ids(self):
        return [m.utterance_id for m in self.lld]

    def stacked(self, i):
        """LLD and delta frames side by side (T x 2D), the Fisher vector input."""
        return np.hstack([self.lld[i].frames, self.deltas[i].frames])


def prepare_frames(matrices, train_mask, window=2, jobs=1, standardizers=None):
    """Compute deltas, fit z-scoring on the training utterances, apply to all.

    ``standardizers`` may supply an already fitted (lld, delta) pair.
    """
    matrices = list(matrices)
    train_mask = np.asarray(train_mask, dtype=bool)
    if train_mask.shape != (len(matrices),):
        raise AlignmentError("train_mask must have one entry per utterance")
    deltas = _map(lambda m: compute_deltas(m, window), matrices, jobs)
    if standardizers is None:
        if not train_mask.any():
            raise AlignmentError("no training utterances to fit standardization on")
        s_lld = fit_standardizer([m for m, t in zip(matrices, train_mask) if t])
        s_delta = fit_standardizer([d for d, t in zip(deltas, train_mask) if t])
    else:
        s_lld, s_delta = standardizers
    lld = [apply_standardizer(s_lld, m) for m in matrices]
    deltas = [apply_standardizer(s_delta, d) for d in deltas]
    return PreparedFrames(lld, deltas, s_lld, s_delta)


def learn_codebooks(prep, train_mask, n, seed):
    """Independent random-sample codebooks for the LLD and delta streams."""
    idx = np.flatnonzero(train_mask)
    cb_lld = learn_codebook([prep.lld[i] for i in idx], n, seed=seed, source="lld")
    cb_delta = learn_codebook([prep.deltas[i] for i in idx], n, seed=seed + 1, source="delta")
    return cb_lld, cb_delta


def boaw_table(prep, cb_lld, cb_delta, assignments=DEFAULT_ASSIGNMENTS, jobs=1, name="boaw"):
    rows = _map(lambda i: encode_boaw_paired(cb_lld, cb_delta, prep.lld[i], prep.deltas[i], assignments),
                range(len(prep.lld)), jobs)
    return FeatureTable(prep.utterance_ids, np.array(rows), name)


def fit_fisher_gmm(prep, train_mask, k, seed, use_deltas=True, **kw):
    idx = np.flatnonzero(train_mask)
    pooled = np.concatenate([prep.stacked(i) if use_deltas else prep.lld[i].frames for i in idx])
    return fit_gmm(pooled, k, seed=seed, **kw)


def fisher_table(prep, gmm, use_deltas=True, jobs=1, name="fv"):
    rows = _map(lambda i: encode_fisher(gmm, prep.stacked(i) if use_deltas else prep.lld[i].frames).values,
                range(len(prep.lld)), jobs)
    return FeatureTable(prep.utterance_ids, np.array(rows), name)
