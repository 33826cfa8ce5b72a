"""Uniform score-and-gradient interface shared by every classifier."""
import numpy as np

from ..errors import InvalidInputError, ModelGradientError


class ModelHandle:
    """A trained, immutable classifier.

    ``predict`` returns the explained score (class-1 logit for networks, the
    raw score for analytic models) and ``gradient`` its derivative with
    respect to the flattened input.  Both accept a single vector or a batch
    and return arrays matching the batch layout of the input.
    """

    arch = "abstract"

    def __init__(self, n_features, metadata=None):
        self.n_features = int(n_features)
        self.metadata = dict(metadata or {})
        self.report = None

    def _as_batch(self, X):
        X = np.asarray(X, dtype=np.float64)
        single = X.ndim == 1
        X2 = X.reshape(1, -1) if single else X.reshape(X.shape[0], -1)
        if X2.shape[1] != self.n_features:
            raise InvalidInputError(f"{self.arch} expects {self.n_features} features, got {X2.shape[1]}")
        return X2, single, X.shape

    def _score(self, X):
        raise NotImplementedError

    def _grad(self, X):
        raise NotImplementedError

    def predict(self, X):
        X2, single, _ = self._as_batch(X)
        out = self._score(X2)
        return out[0] if single else out

    def gradient(self, X):
        X2, _, shape = self._as_batch(X)
        g = self._grad(X2)
        if not np.all(np.isfinite(g)):
            raise ModelGradientError(f"non-finite gradient from {self.arch}")
        return g.reshape(shape)

    def predict_label(self, X):
        X2, single, _ = self._as_batch(X)
        out = (self._score(X2) > 0).astype(np.int64)
        return out[0] if single else out

    def accuracy(self, X, y):
        return float(np.mean(self.predict_label(X) == np.asarray(y)))

    def parameters(self):
        """Named parameter arrays for checkpointing."""
        return {}

    def config_dict(self):
        return {}


def finite_difference_gradient(model, x, eps=1e-6, order=2, chunk=256):
    """Central differences of ``model.predict`` at a single flat input.

    ``order=4`` uses the five-point stencil, accurate to ``O(eps^4)``.
    Coordinates are perturbed ``chunk`` at a time to bound memory.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    out = np.empty(x.size)
    for start in range(0, x.size, chunk):
        idx = np.arange(start, min(start + chunk, x.size))
        steps = np.zeros((idx.size, x.size))
        steps[np.arange(idx.size), idx] = eps
        plus = model.predict(x[None, :] + steps)
        minus = model.predict(x[None, :] - steps)
        if order == 2:
            out[idx] = (plus - minus) / (2 * eps)
            continue
        plus2 = model.predict(x[None, :] + 2 * steps)
        minus2 = model.predict(x[None, :] - 2 * steps)
        out[idx] = (8 * (plus - minus) - (plus2 - minus2)) / (12 * eps)
    return out


def gradient_audit(model, probes, eps=1e-6, floor=1e-8, order=2):
    """Largest relative error between analytic and finite-difference gradients.

    The error of one probe is ``||g - g_fd|| / max(||g||, ||g_fd||, floor)``.
    The floor keeps saturated probes, whose gradients are below what central
    differences can resolve, from dividing by ~0.
    """
    probes = np.asarray(probes, dtype=np.float64).reshape(len(probes), -1)
    worst = 0.0
    for x in probes:
        g = model.gradient(x).ravel()
        fd = finite_difference_gradient(model, x, eps, order)
        scale = max(np.linalg.norm(g), np.linalg.norm(fd), floor)
        worst = max(worst, float(np.linalg.norm(g - fd) / scale))
    return worst


def audit_probes(X, n=5, seed=0):
    """Random audit inputs drawn per feature from ``N(mean, std)`` of ``X``.

    Real images often hold exactly constant regions (clipped background,
    zero padding) where ReLU networks sit on max-pool ties and are not
    differentiable; random inputs at the data's scale avoid those points.
    """
    X = np.asarray(X, dtype=np.float64).reshape(len(X), -1)
    rng = np.random.default_rng(seed)
    mean, std = X.mean(axis=0), X.std(axis=0)
    std = np.where(std > 0, std, 1.0)
    return mean + std * rng.standard_normal((n, X.shape[1]))
