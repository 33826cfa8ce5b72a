"""Three-feature XOR problem with a suppressor variable."""
from dataclasses import asdict, dataclass

import numpy as np

from ..errors import InvalidParameterError
from .dataset import LabeledImageDataset


@dataclass(frozen=True)
class ToyConfig:
    n_samples: int = 2500
    sigma_d: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.n_samples < 1:
            raise InvalidParameterError("n_samples must be >= 1")
        if not self.sigma_d > 0:
            raise InvalidParameterError("sigma_d must be > 0")


def toy_covariance(sigma_d):
    """Population covariance of ``x = (s1 + d, s2 - d, d)``."""
    v = sigma_d**2
    return np.array([[1 + v, -v, v], [-v, 1 + v, -v], [v, -v, v]])


def gen_toy_xor(config: ToyConfig) -> LabeledImageDataset:
    """``x = (s1 + d, s2 - d, d)`` with ``y = [s1 * s2 > 0]``.

    Only the first two features carry ground truth; the third is the
    suppressor.
    """
    rng = np.random.default_rng(config.seed)
    s = rng.standard_normal((config.n_samples, 2))
    d = config.sigma_d * rng.standard_normal(config.n_samples)
    x = np.column_stack([s[:, 0] + d, s[:, 1] - d, d])
    y = (s[:, 0] * s[:, 1] > 0).astype(np.uint8)
    masks = np.tile(np.array([1, 1, 0], dtype=np.uint8), (config.n_samples, 1))
    return LabeledImageDataset(x, y, masks, (3,), provenance={"kind": "toy_xor", "config": asdict(config)})
