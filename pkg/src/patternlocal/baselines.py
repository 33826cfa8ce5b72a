"""Reference explainers: edge filters and gradient attributions.

Filters look only at the image.  The gradient methods act on the model's
explained score.  ``integrated_gradients`` and ``gradient_shap`` return raw
attributions (so completeness can be checked); ``baseline_map`` normalizes
every method's output to ``max |map| = 1``.
"""
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, InvalidParameterError, ModelGradientError
from .metrics import normalize_map
from .numerics import convolve3x3

METHODS = ("sobel", "laplace", "saliency", "integrated_gradients", "gradient_shap", "smoothgrad")
FILTER_METHODS = ("sobel", "laplace")
IG_SCHEMES = ("riemann_trapezoid", "gauss_legendre")

SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
SOBEL_Y = SOBEL_X.T
LAPLACE = np.array([[0.0, 1.0, 0.0], [1.0, -4.0, 1.0], [0.0, 1.0, 0.0]])


@dataclass(frozen=True)
class BaselineConfig:
    method: str = "saliency"
    n_steps: int = 50
    scheme: str = "riemann_trapezoid"
    n_samples: int = 20
    sigma_noise: float = 0.1
    baseline: str = None  # "zeros" or "train" (random training images); None picks per method
    seed: int = 0

    def __post_init__(self):
        if self.method not in METHODS:
            raise InvalidParameterError(f"unknown baseline method {self.method!r}; choose from {METHODS}")
        if self.scheme not in IG_SCHEMES:
            raise InvalidParameterError(f"scheme must be one of {IG_SCHEMES}")
        if self.n_steps < 1 or self.n_samples < 1:
            raise InvalidParameterError("n_steps and n_samples must be >= 1")
        if self.sigma_noise < 0:
            raise InvalidParameterError("sigma_noise must be >= 0")
        if self.baseline is None:
            object.__setattr__(self, "baseline", "train" if self.method == "gradient_shap" else "zeros")
        if self.baseline not in ("zeros", "train"):
            raise InvalidParameterError("baseline must be 'zeros' or 'train'")


def _image(image, image_shape):
    img = np.asarray(image, dtype=np.float64)
    if image_shape is not None:
        img = img.reshape(image_shape)
    if img.ndim != 2:
        raise InvalidInputError(f"filters need a 2-D image, got shape {img.shape}")
    return img


def sobel_map(image, image_shape=None, normalize=True):
    """Sobel gradient magnitude in [0, 1]."""
    img = _image(image, image_shape)
    mag = np.hypot(convolve3x3(img, SOBEL_X), convolve3x3(img, SOBEL_Y))
    return normalize_map(mag) if normalize else mag


def laplace_map(image, image_shape=None, normalize=True):
    """Absolute 4-neighbor Laplacian in [0, 1]."""
    img = _image(image, image_shape)
    resp = np.abs(convolve3x3(img, LAPLACE))
    return normalize_map(resp) if normalize else resp


def _flat(x):
    return np.asarray(x, dtype=np.float64).reshape(-1)


def saliency_map(model, x, normalize=True):
    """Absolute input gradient of the explained score."""
    x = _flat(x)
    g = np.abs(model.gradient(x))
    return normalize_map(g) if normalize else g


def _quadrature(n_steps, scheme):
    """Nodes and weights on [0, 1]."""
    if scheme == "riemann_trapezoid":
        alphas = np.linspace(0.0, 1.0, n_steps + 1)
        weights = np.full(n_steps + 1, 1.0 / n_steps)
        weights[[0, -1]] *= 0.5
        return alphas, weights
    nodes, weights = np.polynomial.legendre.leggauss(n_steps)
    return 0.5 * (nodes + 1.0), 0.5 * weights


def _path_gradients(model, points, alphas):
    try:
        g = model.gradient(points)
    except ModelGradientError:
        g = None
    scores = model.predict(points)
    bad = ~np.isfinite(scores)
    if g is not None:
        bad |= ~np.all(np.isfinite(g), axis=1)
    if bad.any():
        a = float(alphas[np.argmax(bad)])
        raise ModelGradientError(f"non-finite model output on the integration path at alpha = {a:.6g}")
    return g


def integrated_gradients(model, x, baseline=None, n_steps=50, scheme="riemann_trapezoid"):
    """``(x - b) * int_0^1 grad f(b + t (x - b)) dt`` by quadrature (raw attribution)."""
    x = _flat(x)
    b = np.zeros_like(x) if baseline is None else _flat(baseline)
    if b.shape != x.shape:
        raise InvalidInputError(f"baseline has {b.size} entries, input has {x.size}")
    if scheme not in IG_SCHEMES:
        raise InvalidParameterError(f"scheme must be one of {IG_SCHEMES}")
    if n_steps < 1:
        raise InvalidParameterError("n_steps must be >= 1")
    delta = x - b
    if not delta.any():
        return np.zeros_like(x)
    alphas, weights = _quadrature(int(n_steps), scheme)
    g = _path_gradients(model, b + alphas[:, None] * delta, alphas)
    return delta * (weights @ g)


def gradient_shap(model, x, n_samples=20, sigma_noise=0.1, baseline_sampler=None, seed=0):
    """Mean of ``grad f(b + u (x - b + eps)) * (x - b)`` over baselines, ``u ~ U(0,1)``
    and ``eps ~ N(0, sigma_noise^2)`` (raw attribution).

    ``baseline_sampler(rng, n)`` returns ``n`` baselines; an array of
    candidate baselines is sampled uniformly with replacement.
    """
    x = _flat(x)
    if n_samples < 1:
        raise InvalidParameterError("n_samples must be >= 1")
    if sigma_noise < 0:
        raise InvalidParameterError("sigma_noise must be >= 0")
    rng = np.random.default_rng(seed)
    if baseline_sampler is None:
        B = np.zeros((n_samples, x.size))
    elif callable(baseline_sampler):
        B = np.asarray(baseline_sampler(rng, n_samples), dtype=np.float64).reshape(n_samples, -1)
    else:
        pool = np.asarray(baseline_sampler, dtype=np.float64).reshape(-1, x.size)
        B = pool[rng.integers(len(pool), size=n_samples)]
    u = rng.random(n_samples)
    eps = sigma_noise * rng.standard_normal((n_samples, x.size))
    points = B + u[:, None] * (x - B + eps)
    g = _path_gradients(model, points, u)
    return np.mean(g * (x - B), axis=0)


def smoothgrad_map(model, x, n_samples=20, sigma_noise=0.1, seed=0, normalize=True):
    """Mean gradient over ``x + N(0, sigma_noise^2)``."""
    x = _flat(x)
    rng = np.random.default_rng(seed)
    noisy = x + sigma_noise * rng.standard_normal((n_samples, x.size))
    g = model.gradient(noisy).mean(axis=0)
    return normalize_map(g) if normalize else g


def baseline_map(config, x, model=None, image_shape=None, train=None):
    """Normalized importance map (flattened) for one instance.

    ``train`` supplies baseline images when ``config.baseline == 'train'``.
    """
    x = _flat(x)
    m = config.method
    if m in FILTER_METHODS:
        if image_shape is None:
            raise InvalidInputError("filter baselines need image_shape")
        fn = sobel_map if m == "sobel" else laplace_map
        return fn(x, image_shape).ravel()
    if model is None:
        raise InvalidInputError(f"{m} needs a model")
    if m == "saliency":
        return saliency_map(model, x)
    if m == "smoothgrad":
        return smoothgrad_map(model, x, config.n_samples, config.sigma_noise, config.seed)
    if config.baseline == "train" and train is None:
        raise InvalidInputError("baseline 'train' needs training images")
    if m == "integrated_gradients":
        if config.baseline == "train":
            ref = np.asarray(train).reshape(len(train), -1)[np.random.default_rng(config.seed).integers(len(train))]
        else:
            ref = None
        return normalize_map(integrated_gradients(model, x, ref, config.n_steps, config.scheme))
    sampler = train if config.baseline == "train" else None
    return normalize_map(gradient_shap(model, x, config.n_samples, config.sigma_noise, sampler, config.seed))


__all__ = [
    "BaselineConfig",
    "FILTER_METHODS",
    "IG_SCHEMES",
    "METHODS",
    "baseline_map",
    "gradient_shap",
    "integrated_gradients",
    "laplace_map",
    "saliency_map",
    "smoothgrad_map",
    "sobel_map",
]
