"""Local and global activation patterns.

A local pattern regresses the simplified training inputs onto the surrogate
response ``y~ = w' h(x)`` under a neighborhood kernel centred at the
explained instance.  With ridge shrinkage the solution is

    a = Cov_Pi[h(x), y~] / (Var_Pi[y~] + lambda),

which removes features that only help the surrogate cancel noise.
"""
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    DegenerateNeighborhoodError,
    DegenerateResponseError,
    InvalidInputError,
    InvalidParameterError,
    SingularSystemError,
)
from .metrics import is_zero_map, normalize_map
from .simplify import to_pixels

NEIGHBORHOOD_KERNELS = ("gaussian", "epanechnikov")
MIN_EFFECTIVE_SAMPLES = 10


@dataclass(frozen=True)
class PatternConfig:
    neighborhood_kernel: str = "gaussian"
    bandwidth: float = 1.0
    lam: float = 0.0
    regularizer: str = "ridge"
    center: bool = True

    def __post_init__(self):
        if self.neighborhood_kernel not in NEIGHBORHOOD_KERNELS:
            raise InvalidParameterError(f"neighborhood_kernel must be one of {NEIGHBORHOOD_KERNELS}")
        if not self.bandwidth > 0:
            raise InvalidParameterError(f"bandwidth must be > 0, got {self.bandwidth}")
        if self.lam < 0:
            raise InvalidParameterError(f"lambda must be >= 0, got {self.lam}")
        if self.regularizer not in ("ridge", "lasso"):
            raise InvalidParameterError("regularizer must be 'ridge' or 'lasso'")


@dataclass
class PatternExplanation:
    a: np.ndarray
    importance_map: np.ndarray = None
    effective_sample_weight_mass: float = float("nan")
    provenance: dict = field(default_factory=dict)


@dataclass
class GlobalLinearModel:
    A: np.ndarray
    W: np.ndarray
    Sigma_X: np.ndarray
    Sigma_S: np.ndarray


def squared_distances(train_simplified, x_star):
    X = np.asarray(train_simplified, dtype=np.float64)
    diff = X - np.asarray(x_star, dtype=np.float64).reshape(1, -1)
    return np.einsum("ij,ij->i", diff, diff)


def neighborhood_weights(train_simplified, x_star, config, sq_dist=None):
    """Kernel weights over training points in simplified space, summing to one.

    ``sq_dist`` may carry precomputed squared distances to ``x_star``.
    """
    d2 = squared_distances(train_simplified, x_star) if sq_dist is None else np.asarray(sq_dist, dtype=np.float64)
    bw = config.bandwidth
    if config.neighborhood_kernel == "gaussian":
        # shifting by the nearest distance only rescales the weights and avoids underflow
        w = np.exp(-(d2 - d2.min()) / (2.0 * bw * bw))
    else:
        w = np.maximum(0.0, 1.0 - d2 / (bw * bw))
    total = w.sum()
    if not total > 0:
        raise DegenerateNeighborhoodError(
            f"no training point within bandwidth {bw}; nearest distance is {np.sqrt(d2.min()):.6g}",
            nearest_distance=float(np.sqrt(d2.min())),
        )
    return w / total


def effective_sample_size(p):
    p = np.asarray(p, dtype=np.float64)
    return float(p.sum() ** 2 / np.sum(p * p))


def _surrogate_weights(surrogate):
    w = getattr(surrogate, "weights", surrogate)
    return np.asarray(w, dtype=np.float64).ravel()


def _moments(X, ytil, p, center):
    if center:
        mx = p @ X
        my = float(p @ ytil)
        yc = ytil - my
        return (p * yc) @ (X - mx), float(p @ (yc * yc))
    return (p * ytil) @ X, float(p @ (ytil * ytil))


def _prepare(train_simplified, surrogate, x_star, config, weights):
    X = np.asarray(train_simplified, dtype=np.float64)
    w = _surrogate_weights(surrogate)
    if X.ndim != 2 or X.shape[1] != w.size:
        raise InvalidInputError(f"training inputs {X.shape} do not match {w.size} surrogate weights")
    p = neighborhood_weights(X, x_star, config) if weights is None else np.asarray(weights, dtype=np.float64)
    p = p / p.sum()
    ess = effective_sample_size(p)
    prov = {"kernel": config.neighborhood_kernel, "bandwidth": config.bandwidth, "lam": config.lam, "center": config.center}
    prov["effective_sample_size"] = ess
    if ess < MIN_EFFECTIVE_SAMPLES:
        prov["warning"] = f"effective sample size {ess:.2f} < {MIN_EFFECTIVE_SAMPLES}"
    return X, X @ w, p, ess, prov


def pattern_ridge(train_simplified, surrogate, x_star, config=None, weights=None):
    """``a = Cov_Pi[x', y~] / (Var_Pi[y~] + lambda)`` with ``y~ = w' x'``."""
    config = config or PatternConfig()
    X, ytil, p, ess, prov = _prepare(train_simplified, surrogate, x_star, config, weights)
    cov, var = _moments(X, ytil, p, config.center)
    denom = var + config.lam
    if not denom > 0:
        raise DegenerateResponseError("surrogate response has zero variance in the neighborhood; use lambda > 0")
    prov["regularizer"] = "ridge"
    return PatternExplanation(cov / denom, effective_sample_weight_mass=ess, provenance=prov)


def soft_threshold(v, t):
    return np.sign(v) * np.maximum(np.abs(v) - t, 0.0)


def pattern_lasso(train_simplified, surrogate, x_star, config=None, weights=None):
    """``argmin_u sum_i Pi_i |x'_i - u y~_i|^2 + lambda |u|_1``.

    The objective separates over coordinates of ``u``, so each one is a
    scalar soft-threshold: ``u_j = S(Cov_j, lambda / 2) / Var``.
    """
    config = config or PatternConfig(regularizer="lasso")
    X, ytil, p, ess, prov = _prepare(train_simplified, surrogate, x_star, config, weights)
    cov, var = _moments(X, ytil, p, config.center)
    if not var > 0:
        raise DegenerateResponseError("surrogate response has zero variance in the neighborhood")
    prov["regularizer"] = "lasso"
    prov["converged"] = True
    return PatternExplanation(soft_threshold(cov, config.lam / 2.0) / var, effective_sample_weight_mass=ess, provenance=prov)


def local_pattern(train_simplified, surrogate, x_star, config=None, weights=None):
    config = config or PatternConfig()
    fn = pattern_lasso if config.regularizer == "lasso" else pattern_ridge
    return fn(train_simplified, surrogate, x_star, config, weights)


def pattern_objective(train_simplified, ytil, p, u, lam, center=True, penalty="ridge"):
    """Kernel-weighted reconstruction error of ``x'`` from ``u y~`` plus the penalty."""
    X = np.asarray(train_simplified, dtype=np.float64)
    ytil = np.asarray(ytil, dtype=np.float64)
    if center:
        X = X - p @ X
        ytil = ytil - p @ ytil
    resid = X - np.outer(ytil, u)
    fit = float(p @ np.einsum("ij,ij->i", resid, resid))
    reg = lam * (float(u @ u) if penalty == "ridge" else float(np.abs(u).sum()))
    return fit + reg


def pattern_global(X, W, Sigma_S=None):
    """``A = Sigma_X W Sigma_S^-1`` with ``Sigma_S = Cov[W' x]`` unless given."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise InvalidInputError("pattern_global needs a 2-D sample matrix with at least 2 rows")
    W = np.asarray(W, dtype=np.float64)
    if W.ndim == 1:
        W = W[:, None]
    sigma_x = np.cov(X, rowvar=False)
    if sigma_x.ndim == 0:
        sigma_x = sigma_x.reshape(1, 1)
    sigma_s = W.T @ sigma_x @ W if Sigma_S is None else np.atleast_2d(np.asarray(Sigma_S, dtype=np.float64))
    k = sigma_s.shape[0]
    rank = np.linalg.matrix_rank(sigma_s)
    if rank < k:
        raise SingularSystemError(
            f"latent covariance has rank {rank} < {k}; the extracted factors are not linearly independent", rank=rank, size=k
        )
    A = np.linalg.solve(sigma_s.T, (sigma_x @ W).T).T
    return GlobalLinearModel(A, W, sigma_x, sigma_s)


def upsample(a, simp):
    """Map a simplified-space pattern to pixels and scale to ``max |map| = 1``.

    Returns ``(map, zero_map_flag)``; an all-zero pattern is left unnormalized.
    """
    raw = to_pixels(simp, np.asarray(a, dtype=np.float64))
    return normalize_map(raw), is_zero_map(raw)


def explain(train_simplified, surrogate, x_star_simplified, simp, config=None, weights=None):
    """Local pattern plus its normalized pixel map."""
    out = local_pattern(train_simplified, surrogate, x_star_simplified, config, weights)
    out.importance_map, zero = upsample(out.a, simp)
    out.provenance["zero_map"] = zero
    return out
