"""Closed-form classifiers: linear scores, the smooth XOR rule and LDA."""
import numpy as np

from ..errors import InvalidInputError, InvalidParameterError, SingularSystemError
from .base import ModelHandle


class LinearModel(ModelHandle):
    """``score = w.x + b``."""

    arch = "linear"

    def __init__(self, w, b=0.0, metadata=None):
        w = np.asarray(w, dtype=np.float64).ravel()
        super().__init__(w.size, metadata)
        self.w = w
        self.b = float(b)

    def _score(self, X):
        return X @ self.w + self.b

    def _grad(self, X):
        return np.broadcast_to(self.w, X.shape).copy()

    def parameters(self):
        return {"w": self.w, "b": np.array([self.b])}


def _sech2(t):
    # 4 e^{-2|t|} / (1 + e^{-2|t|})^2 never overflows
    e = np.exp(-2.0 * np.abs(t))
    return 4.0 * e / (1.0 + e) ** 2


class SmoothXorModel(ModelHandle):
    """``f(x) = tanh((x1 - x3)(x2 + x3) / tau)`` on three features."""

    arch = "smooth_xor"

    def __init__(self, tau=0.1):
        if not 0 < tau <= 0.5:
            raise InvalidParameterError(f"tau must lie in (0, 0.5], got {tau}")
        super().__init__(3, {"tau": tau})
        self.tau = float(tau)

    @staticmethod
    def raw(X):
        X = np.asarray(X, dtype=np.float64)
        return (X[..., 0] - X[..., 2]) * (X[..., 1] + X[..., 2])

    def _score(self, X):
        return np.tanh(self.raw(X) / self.tau)

    def _grad(self, X):
        c = _sech2(self.raw(X) / self.tau) / self.tau
        x1, x2, x3 = X[:, 0], X[:, 1], X[:, 2]
        return c[:, None] * np.column_stack([x2 + x3, x1 - x3, x1 - x2 - 2 * x3])

    def config_dict(self):
        return {"tau": self.tau}


def smooth_xor_classifier(tau=0.1):
    return SmoothXorModel(tau)


def train_lda(X, y=None, allow_jitter=False, jitter=1e-8):
    """Unregularized two-class LDA ``w = Sigma^-1 (mu_+ - mu_-)``.

    ``Sigma`` is the pooled within-class covariance and the bias puts the
    threshold at the midpoint of the class means.  ``X`` may also be a
    dataset with a train split.  A singular covariance raises unless
    ``allow_jitter``, in which case ``jitter * mean(diag)`` is added and
    recorded in the metadata.
    """
    if y is None:
        X, y, _ = X.subset("train")
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y).ravel()
    classes = np.unique(y)
    if classes.size != 2:
        raise InvalidInputError(f"LDA needs exactly two classes, got {classes.size}")
    neg, pos = X[y == classes[0]], X[y == classes[1]]
    mu_n, mu_p = neg.mean(axis=0), pos.mean(axis=0)
    centered = np.vstack([neg - mu_n, pos - mu_p])
    sigma = centered.T @ centered / max(len(X) - 2, 1)
    d = sigma.shape[0]
    rank = np.linalg.matrix_rank(sigma)
    added = 0.0
    if rank < d:
        if not allow_jitter:
            raise SingularSystemError(
                f"pooled covariance has rank {rank} < {d}; pass allow_jitter=True", rank=rank, size=d
            )
        added = jitter * max(float(np.trace(sigma)) / d, 1e-300)
        sigma = sigma + added * np.eye(d)
    w = np.linalg.solve(sigma, mu_p - mu_n)
    b = -0.5 * float(w @ (mu_p + mu_n))
    return LinearModel(w, b, metadata={"kind": "lda", "jitter": added})
