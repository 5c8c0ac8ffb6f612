"""Diagonal-covariance GMMs fitted by EM, and Fisher vector encoding.

The Fisher vector of an utterance is the per-frame averaged gradient of the
GMM log-likelihood with respect to the component means and standard
deviations, scaled by the analytic diagonal Fisher-information factors
1/sqrt(w_k) and 1/sqrt(2 w_k). Prior gradients are not included, so the
vector has 2*K*D entries laid out as [mean block, std block], each
component-major.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from ._io import check_version, dump_json, load_json, to_list
from .errors import AlignmentError, FormatError, NumericError, ParameterError

log = logging.getLogger(__name__)

DEFAULT_COMPONENTS = (2, 4, 8, 16, 32, 64, 128)
STD_FLOOR = 1e-3
MAX_ITER = 100
TOL = 1e-6
_LOG_2PI = np.log(2.0 * np.pi)


@dataclass(frozen=True)
class DiagonalGmm:
    weights: np.ndarray
    means: np.ndarray
    stds: np.ndarray
    seed: int = 0
    final_loglik: float = float("nan")

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        mu = np.asarray(self.means, dtype=float)
        sd = np.asarray(self.stds, dtype=float)
        if mu.ndim != 2 or sd.shape != mu.shape or w.shape != (mu.shape[0],):
            raise ParameterError(f"inconsistent GMM shapes: weights {w.shape}, means {mu.shape}, stds {sd.shape}")
        if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ParameterError("GMM weights must be positive and sum to 1")
        if np.any(sd <= 0) or not np.all(np.isfinite(mu)):
            raise ParameterError("GMM stds must be positive and means finite")
        for a in (w, mu, sd):
            a.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "means", mu)
        object.__setattr__(self, "stds", sd)

    @property
    def n_components(self):
        return self.means.shape[0]

    @property
    def dim(self):
        return self.means.shape[1]

    @property
    def ref(self):
        return f"gmm-k{self.n_components}-d{self.dim}-seed{self.seed}"

    def to_json(self):
        return {
            "format_version": 1,
            "seed": int(self.seed),
            "weights": to_list(self.weights),
            "means": to_list(self.means),
            "stds": to_list(self.stds),
            "final_loglik": float(self.final_loglik),
        }

    @classmethod
    def from_json(cls, obj, path="<json>"):
        check_version(obj, path)
        try:
            return cls(
                np.asarray(obj["weights"], float),
                np.asarray(obj["means"], float),
                np.asarray(obj["stds"], float),
                int(obj["seed"]),
                float(obj["final_loglik"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"{path}: malformed GMM ({exc})") from exc

    def save(self, path):
        dump_json(self.to_json(), path)

    @classmethod
    def load(cls, path):
        return cls.from_json(load_json(path), path)


@dataclass(frozen=True)
class FisherVector:
    values: np.ndarray
    gmm_ref: str


def _frames(m, dim):
    x = np.asarray(getattr(m, "frames", m), dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[-1] != dim:
        raise AlignmentError(f"frame dimension {x.shape[-1]} does not match GMM dimension {dim}")
    return x


def _log_joint(weights, means, stds, x):
    """T x K matrix of log(w_k) + log N(x_t; mu_k, diag(sigma_k^2))."""
    out = np.empty((x.shape[0], means.shape[0]))
    log_norm = np.log(weights) - np.log(stds).sum(axis=1) - 0.5 * x.shape[1] * _LOG_2PI
    for k in range(means.shape[0]):
        z = (x - means[k]) / stds[k]
        out[:, k] = log_norm[k] - 0.5 * np.einsum("td,td->t", z, z)
    return out


def gmm_loglik(g, m):
    """Per-frame average log-likelihood (1/T) sum_t log p(x_t)."""
    x = _frames(m, g.dim)
    return float(logsumexp(_log_joint(g.weights, g.means, g.stds, x), axis=1).mean())


def _posteriors(lj):
    return np.exp(lj - logsumexp(lj, axis=1, keepdims=True))


def responsibilities(g, frame):
    """Component posteriors for a single frame (or T x K for a matrix)."""
    x = np.asarray(frame, dtype=float)
    single = x.ndim == 1
    gamma = _posteriors(_log_joint(g.weights, g.means, g.stds, _frames(x, g.dim)))
    return gamma[0] if single else gamma


def fit_gmm(frames, k, seed=0, max_iter=MAX_ITER, tol=TOL, std_floor=STD_FLOOR, trace=None):
    """Fit a K-component diagonal GMM by EM.

    Means start at K distinct frames drawn with ``seed``, stds at the global
    per-dimension std, weights uniform. Iteration stops once the per-frame
    average log-likelihood improves by less than ``tol``. If ``trace`` is a
    list, the log-likelihood of every visited model is appended to it.
    """
    x = np.asarray(
        frames if isinstance(frames, np.ndarray) else np.concatenate([getattr(f, "frames", f) for f in frames]),
        dtype=float,
    )
    if int(k) != k or k < 1:
        raise ParameterError(f"component count must be a positive integer, got {k}")
    k = int(k)
    T, D = x.shape
    if T < k:
        raise ParameterError(f"{T} frames cannot support {k} components")
    rng = np.random.default_rng(seed)
    means = x[rng.choice(T, size=k, replace=False)].copy()
    stds = np.tile(np.maximum(x.std(axis=0), std_floor), (k, 1))
    weights = np.full(k, 1.0 / k)

    lj = _log_joint(weights, means, stds, x)
    ll = float(logsumexp(lj, axis=1).mean())
    if trace is not None:
        trace.append(ll)
    tiny = 10 * np.finfo(float).eps
    it = 0
    for it in range(1, max_iter + 1):
        gamma = _posteriors(lj)
        nk = gamma.sum(axis=0) + tiny
        weights = nk / nk.sum()
        means = (gamma.T @ x) / nk[:, None]
        var = np.empty_like(means)
        for j in range(k):
            d = x - means[j]
            var[j] = (gamma[:, j] @ (d * d)) / nk[j]
        stds = np.maximum(np.sqrt(var), std_floor)

        lj = _log_joint(weights, means, stds, x)
        new_ll = float(logsumexp(lj, axis=1).mean())
        if not np.isfinite(new_ll):
            raise NumericError(f"non-finite log-likelihood at EM iteration {it}")
        if trace is not None:
            trace.append(new_ll)
        improvement = new_ll - ll
        ll = new_ll
        if improvement < tol:
            break
    log.debug("fit_gmm k=%d: %d iterations, loglik %.6f", k, it, ll)
    return DiagonalGmm(weights, means, stds, seed=seed, final_loglik=ll)


def fisher_score(g, m):
    """Unnormalized mean and std gradient blocks, each K x D.

    mean block: (1/T) sum_t gamma_tk z_tkd
    std block:  (1/T) sum_t gamma_tk (z_tkd^2 - 1)
    with z = (x - mu) / sigma. These are sigma_kd times the partial derivatives
    of :func:`gmm_loglik` with respect to mu_kd and sigma_kd.
    """
    x = _frames(m, g.dim)
    T = x.shape[0]
    gamma = _posteriors(_log_joint(g.weights, g.means, g.stds, x))
    g_mu = np.empty((g.n_components, g.dim))
    g_sd = np.empty((g.n_components, g.dim))
    for k in range(g.n_components):
        z = (x - g.means[k]) / g.stds[k]
        g_mu[k] = gamma[:, k] @ z
        g_sd[k] = gamma[:, k] @ (z * z - 1.0)
    return g_mu / T, g_sd / T


def encode_fisher(g, m):
    g_mu, g_sd = fisher_score(g, m)
    w = g.weights[:, None]
    values = np.concatenate([(g_mu / np.sqrt(w)).ravel(), (g_sd / np.sqrt(2.0 * w)).ravel()])
    return FisherVector(values, g.ref)
