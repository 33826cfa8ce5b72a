"""Local linear surrogates: LIME, KernelSHAP and gradient-based.

Every surrogate returns a weight vector ``w`` over the ``D'`` simplified
features of an instance ``x*``.  Perturbation-based fits work on binary
masks ``z'`` (bit on = keep the segment of ``x*``, off = reference value).
"""
from dataclasses import dataclass, field
from math import comb
from typing import Optional

import numpy as np

from .errors import InvalidInputError, InvalidParameterError, ModelGradientError
from .numerics import solve_weighted_ridge
from .simplify import perturb

KERNELS = ("lime_exponential", "kernelshap")
# exhaustive coalition enumeration up to this many simplified features
MAX_EXACT_SHAP = 14


@dataclass(frozen=True)
class SurrogateConfig:
    kernel: str = "lime_exponential"
    bandwidth: Optional[float] = None  # None: D'/2
    n_samples: Optional[int] = None  # None: max(2000, 10 D')
    regularizer: str = "ridge"
    lam: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.kernel not in KERNELS:
            raise InvalidParameterError(f"kernel must be one of {KERNELS}")
        if self.regularizer not in ("ridge", "none"):
            raise InvalidParameterError("regularizer must be 'ridge' or 'none'")
        if self.bandwidth is not None and not self.bandwidth > 0:
            raise InvalidParameterError(f"bandwidth must be > 0, got {self.bandwidth}")
        if self.lam < 0:
            raise InvalidParameterError("lambda must be >= 0")
        if self.n_samples is not None and self.n_samples < 2:
            raise InvalidParameterError("n_samples must be >= 2")

    def resolved_samples(self, d):
        return self.n_samples if self.n_samples is not None else max(2000, 10 * d)

    def resolved_bandwidth(self, d):
        return self.bandwidth if self.bandwidth is not None else max(0.5, d / 2.0)

    @property
    def effective_lam(self):
        return self.lam if self.regularizer == "ridge" else 0.0


@dataclass
class LocalSurrogate:
    weights: np.ndarray
    intercept: float
    fit_r2: float
    provenance: dict = field(default_factory=dict)


@dataclass(frozen=True)
class PerturbationSample:
    """Masks and model outputs around one instance; reusable across kernel widths."""

    Z: np.ndarray
    predictions: np.ndarray


def sample_perturbations(d, n, seed):
    """``n`` rows of i.i.d. fair bits; the first row is all ones (the instance itself)."""
    if n < 1 or d < 1:
        raise InvalidParameterError("need n >= 1 and d >= 1")
    rng = np.random.default_rng(seed)
    Z = rng.integers(0, 2, size=(n, d)).astype(np.float64)
    Z[0] = 1.0
    return Z


def lime_kernel_weight(z, sigma):
    """``exp(-||1 - z||_0^2 / sigma^2)`` for one mask or a batch of masks."""
    if not sigma > 0:
        raise InvalidParameterError("sigma must be > 0")
    z = np.asarray(z)
    off = np.sum(z == 0, axis=-1).astype(np.float64)
    return np.exp(-(off**2) / sigma**2)


def kernelshap_weight(z, d=None):
    """Shapley kernel ``(D'-1) / (C(D', k) k (D'-k))`` with ``k = ||z||_0``.

    Empty and full coalitions return ``inf``: they enter the fit as
    equality constraints rather than as weighted rows.
    """
    z = np.asarray(z)
    d = z.shape[-1] if d is None else d
    k = np.sum(z != 0, axis=-1)
    k_arr = np.atleast_1d(k)
    out = np.full(k_arr.shape, np.inf)
    inner = (k_arr > 0) & (k_arr < d)
    ki = k_arr[inner]
    binom = np.array([comb(d, int(v)) for v in ki], dtype=np.float64)
    out[inner] = (d - 1) / (binom * ki * (d - ki))
    return out if np.ndim(k) else float(out[0])


def _weighted_r2(y, yhat, w):
    resid = w @ (y - yhat) ** 2
    ybar = (w @ y) / w.sum()
    total = w @ (y - ybar) ** 2
    if total == 0:
        return 1.0 if resid <= 1e-24 else -np.inf
    return float(1.0 - resid / total)


def fit_weighted_linear(Z, y, w, lam):
    """Weighted ridge with an unpenalized intercept (via weighted centering)."""
    Z = np.asarray(Z, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    total = w.sum()
    if not total > 0:
        raise InvalidInputError("all perturbation weights are zero; increase the bandwidth")
    zbar = (w @ Z) / total
    ybar = float(w @ y) / total
    v = solve_weighted_ridge(Z - zbar, y - ybar, w, lam)
    b = ybar - float(zbar @ v)
    return v, b, _weighted_r2(y, Z @ v + b, w)


def lime_sample(model, x_star, simp, n_samples, seed, reference=None):
    d = simp.n_simplified
    Z = sample_perturbations(d, n_samples, seed)
    images = perturb(simp, Z, x_star, reference)
    return PerturbationSample(Z, np.asarray(model.predict(images), dtype=np.float64))


def fit_lime_sample(sample, config, d=None):
    """LIME fit on a cached perturbation sample."""
    Z = sample.Z
    d = Z.shape[1] if d is None else d
    sigma = config.resolved_bandwidth(d)
    w = lime_kernel_weight(Z, sigma)
    v, b, r2 = fit_weighted_linear(Z, sample.predictions, w, config.effective_lam)
    prov = {"method": "lime", "bandwidth": sigma, "lam": config.effective_lam, "n_samples": len(Z), "seed": config.seed}
    return LocalSurrogate(v, b, r2, prov)


def fit_lime(model, x_star, simp, config=None, reference=None, sample=None):
    """``argmin sum Pi(z) (f(h^-1(z)) - v'z - b)^2 + lam |v|^2``."""
    config = config or SurrogateConfig()
    d = simp.n_simplified
    if config.kernel == "kernelshap":
        return fit_kernelshap(model, x_star, simp, config, reference)
    if sample is None:
        sample = lime_sample(model, x_star, simp, config.resolved_samples(d), config.seed, reference)
    return fit_lime_sample(sample, config, d)


def shapley_fit(Z, values, d, weights=None):
    """Constrained Shapley-kernel regression.

    ``Z`` must contain the empty and the full coalition; their values fix
    ``phi0 = v(empty)`` and ``sum(phi) = v(full) - phi0``.  The remaining
    rows are fit by weighted least squares after eliminating the last
    coordinate with the sum constraint.  Returns ``(phi, phi0)``.
    """
    Z = np.asarray(Z, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    k = Z.sum(axis=1)
    empty = np.flatnonzero(k == 0)
    full = np.flatnonzero(k == d)
    if empty.size == 0 or full.size == 0:
        raise InvalidInputError("KernelSHAP needs the empty and the full coalition")
    phi0 = values[empty[0]]
    delta = values[full[0]] - phi0
    inner = (k > 0) & (k < d)
    Zi = Z[inner]
    w = kernelshap_weight(Zi, d) if weights is None else np.asarray(weights)[inner]
    if d == 1:
        return np.array([delta]), phi0
    target = values[inner] - phi0 - Zi[:, -1] * delta
    design = Zi[:, :-1] - Zi[:, -1:]
    head = solve_weighted_ridge(design, target, w, 0.0)
    return np.append(head, delta - head.sum()), phi0


def _all_coalitions(d):
    idx = np.arange(2**d)
    return ((idx[:, None] >> np.arange(d)) & 1).astype(np.float64)


def _sampled_coalitions(d, n, rng):
    """Coalitions with sizes drawn proportional to the total kernel mass per size.

    Rows then carry equal weight, which makes the sample an unbiased
    stand-in for the exhaustive weighted sum.
    """
    sizes = np.arange(1, d)
    mass = (d - 1) / (sizes * (d - sizes))
    ks = rng.choice(sizes, size=n, p=mass / mass.sum())
    Z = np.zeros((n + 2, d))
    Z[1] = 1.0
    for i, kk in enumerate(ks):
        Z[i + 2, rng.choice(d, size=kk, replace=False)] = 1.0
    w = np.ones(n + 2)
    return Z, w


def fit_kernelshap(model, x_star, simp, config=None, reference=None):
    config = config or SurrogateConfig(kernel="kernelshap")
    d = simp.n_simplified
    if d <= MAX_EXACT_SHAP:
        Z = _all_coalitions(d)
        weights = None
        exact = True
    else:
        Z, weights = _sampled_coalitions(d, config.resolved_samples(d), np.random.default_rng(config.seed))
        exact = False
    values = np.asarray(model.predict(perturb(simp, Z, x_star, reference)), dtype=np.float64)
    phi, phi0 = shapley_fit(Z, values, d, weights)
    return LocalSurrogate(phi, phi0, 1.0 if exact else np.nan, {"method": "kernelshap", "exact": exact, "n_coalitions": len(Z)})


def _reduce_gradient(simp, g):
    """Chain rule from pixel gradients to simplified features."""
    g = np.asarray(g, dtype=np.float64).reshape(-1)
    if simp.kind == "identity":
        return g
    if simp.kind == "low_rank":
        return simp.basis.T @ g
    return np.bincount(simp.labels, weights=g, minlength=simp.n_simplified)


def gradient_surrogate(model, x_star, simp):
    """``w = grad f(x*)`` reduced to the simplified features; intercept ``f(x*)``."""
    x_star = np.asarray(x_star, dtype=np.float64).reshape(-1)
    g = model.gradient(x_star)
    if not np.all(np.isfinite(g)):
        raise ModelGradientError("non-finite gradient at the explained instance")
    return LocalSurrogate(_reduce_gradient(simp, g), float(model.predict(x_star)), 1.0, {"method": "gradient"})


def smoothgrad_surrogate(model, x_star, simp, n_samples=50, sigma_noise=0.1, seed=0):
    """Mean gradient over ``x* + N(0, sigma_noise^2)``."""
    if sigma_noise < 0:
        raise InvalidParameterError("sigma_noise must be >= 0")
    if sigma_noise == 0:
        out = gradient_surrogate(model, x_star, simp)
        out.provenance = {"method": "smoothgrad", "n_samples": n_samples, "sigma_noise": 0.0}
        return out
    x_star = np.asarray(x_star, dtype=np.float64).reshape(-1)
    rng = np.random.default_rng(seed)
    noisy = x_star + sigma_noise * rng.standard_normal((n_samples, x_star.size))
    g = model.gradient(noisy)
    if not np.all(np.isfinite(g)):
        raise ModelGradientError("non-finite gradient at a noisy sample")
    w = _reduce_gradient(simp, g.mean(axis=0))
    prov = {"method": "smoothgrad", "n_samples": n_samples, "sigma_noise": sigma_noise, "seed": seed}
    return LocalSurrogate(w, float(model.predict(x_star)), 1.0, prov)


def surrogate_response(surrogate, simplified):
    """Interceptless surrogate response ``w' h(x)`` for rows of simplified inputs."""
    return np.asarray(simplified, dtype=np.float64) @ surrogate.weights


__all__ = [
    "KERNELS",
    "LocalSurrogate",
    "PerturbationSample",
    "SurrogateConfig",
    "fit_kernelshap",
    "fit_lime",
    "fit_lime_sample",
    "fit_weighted_linear",
    "gradient_surrogate",
    "kernelshap_weight",
    "lime_kernel_weight",
    "lime_sample",
    "sample_perturbations",
    "shapley_fit",
    "smoothgrad_surrogate",
    "surrogate_response",
]
