"""Dense linear algebra, weighted statistics and small image filters."""
from typing import NamedTuple

import numpy as np
from scipy import linalg, ndimage

from . import kernels
from .errors import (
    DegenerateWeightsError,
    InvalidInputError,
    InvalidParameterError,
    SingularSystemError,
)


class WeightedMoments(NamedTuple):
    mean_x: np.ndarray
    mean_y: float
    cov_xy: np.ndarray
    var_y: float


class LassoResult(NamedTuple):
    coef: np.ndarray
    converged: bool
    n_iter: int


def _check_design(X, y, w):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2:
        raise InvalidInputError(f"design matrix must be 2-D, got shape {X.shape}")
    n = X.shape[0]
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if y.shape[0] != n:
        raise InvalidInputError(f"y has {y.shape[0]} entries for {n} rows")
    if w is None:
        w = np.ones(n)
    w = np.asarray(w, dtype=np.float64).reshape(-1)
    if w.shape[0] != n:
        raise InvalidInputError(f"w has {w.shape[0]} entries for {n} rows")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y)) and np.all(np.isfinite(w))):
        raise InvalidInputError("non-finite values in X, y or w")
    if np.any(w < 0):
        raise InvalidInputError("weights must be nonnegative")
    return X, y, w


def normalize_weights(w):
    """Return ``w / sum(w)``; raises on zero total weight."""
    w = np.asarray(w, dtype=np.float64)
    total = w.sum()
    if not total > 0:
        raise DegenerateWeightsError("sum of weights is zero")
    return w / total


def weighted_moments(X, y, w=None) -> WeightedMoments:
    """Weighted means, feature/response covariance and response variance.

    Weights are normalized to sum one; covariance and variance are centered
    second moments under those weights.
    """
    X, y, w = _check_design(X, y, w)
    p = normalize_weights(w)
    mean_x = p @ X
    mean_y = float(p @ y)
    yc = y - mean_y
    cov_xy = (p * yc) @ (X - mean_x)
    var_y = float(p @ (yc * yc))
    return WeightedMoments(mean_x, mean_y, cov_xy, var_y)


def solve_weighted_ridge(X, y, w=None, lam=0.0):
    """Minimize ``sum_i w_i (y_i - v'x_i)^2 + lam * |v|_2^2``.

    Solved by Cholesky factorization of the regularized normal equations.
    With ``lam == 0`` a rank-deficient weighted Gram matrix raises
    :class:`SingularSystemError`.
    """
    if lam < 0:
        raise InvalidParameterError(f"lambda must be >= 0, got {lam}")
    X, y, w = _check_design(X, y, w)
    p = X.shape[1]
    Xw = X * w[:, None]
    gram = Xw.T @ X
    rhs = Xw.T @ y
    if lam == 0:
        rank = np.linalg.matrix_rank(gram)
        if rank < p:
            raise SingularSystemError(
                f"weighted Gram matrix has rank {rank} < {p} (defect {p - rank}); use lambda > 0",
                rank=rank,
                size=p,
            )
    gram[np.diag_indices(p)] += lam
    try:
        factor = linalg.cho_factor(gram, lower=True, check_finite=False)
        return linalg.cho_solve(factor, rhs, check_finite=False)
    except linalg.LinAlgError:
        if lam == 0:
            raise SingularSystemError("weighted Gram matrix is not positive definite", size=p)
        return linalg.solve(gram, rhs, assume_a="sym")


def solve_weighted_lasso(X, y, w=None, lam=0.0, tol=1e-10, max_iter=10_000, coef0=None):
    """Minimize ``sum_i w_i (y_i - v'x_i)^2 + lam * |v|_1`` by coordinate descent.

    Coordinates are swept in ascending index order.  Convergence means the
    largest coordinate change within a sweep fell below ``tol``; otherwise the
    last iterate is returned with ``converged=False``.
    """
    if lam < 0:
        raise InvalidParameterError(f"lambda must be >= 0, got {lam}")
    if tol <= 0 or max_iter < 1:
        raise InvalidParameterError("tol must be > 0 and max_iter >= 1")
    X, y, w = _check_design(X, y, w)
    Xw = X * w[:, None]
    gram = Xw.T @ X
    xty = Xw.T @ y
    v0 = np.zeros(X.shape[1]) if coef0 is None else np.asarray(coef0, dtype=np.float64)
    coef, n_iter, converged = kernels.lasso_cd_gram(gram, xty, float(lam), v0, float(tol), int(max_iter))
    return LassoResult(np.asarray(coef), bool(converged), int(n_iter))


def lasso_objective(X, y, w, lam, coef):
    r = y - X @ coef
    return float(w @ (r * r) + lam * np.abs(coef).sum())


def gaussian_kernel1d(sigma, support_fraction=0.05):
    """Normalized 1-D Gaussian taps, truncated where the weight drops below
    ``support_fraction`` of the peak."""
    if not sigma > 0:
        raise InvalidParameterError(f"sigma must be > 0, got {sigma}")
    if not 0 < support_fraction <= 1:
        raise InvalidParameterError(f"support_fraction must lie in (0, 1], got {support_fraction}")
    radius = int(np.floor(sigma * np.sqrt(2.0 * np.log(1.0 / support_fraction)) + 1e-12))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    taps = np.exp(-0.5 * (x / sigma) ** 2)
    return taps / taps.sum()


def gaussian_blur(image, sigma, support_fraction=0.05):
    """Separable Gaussian blur over the last two axes with reflected borders.

    Leading axes are treated as a batch.
    """
    taps = gaussian_kernel1d(sigma, support_fraction)
    out = np.asarray(image, dtype=np.float64)
    if out.ndim < 2:
        raise InvalidInputError("image must have at least two dimensions")
    if taps.size == 1:
        return out.copy()
    out = ndimage.correlate1d(out, taps, axis=-1, mode="reflect")
    return ndimage.correlate1d(out, taps, axis=-2, mode="reflect")


def convolve3x3(image, kernel):
    """3x3 convolution with reflected borders; output has the input's shape."""
    image = np.asarray(image, dtype=np.float64)
    kernel = np.asarray(kernel, dtype=np.float64)
    if image.ndim != 2 or image.shape[0] < 3 or image.shape[1] < 3:
        raise InvalidInputError(f"image must be at least 3x3, got shape {image.shape}")
    if kernel.shape != (3, 3):
        raise InvalidInputError(f"kernel must be 3x3, got {kernel.shape}")
    padded = np.pad(image, 1, mode="symmetric")
    h, w = image.shape
    out = np.zeros_like(image)
    flipped = kernel[::-1, ::-1]
    for di in range(3):
        for dj in range(3):
            out += flipped[di, dj] * padded[di : di + h, dj : dj + w]
    return out
