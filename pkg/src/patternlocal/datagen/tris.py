"""Tetromino images with known ground-truth pixels (LIN / XOR / RIGID scenarios).

Every image is ``alpha * signal + (1 - alpha) * noise`` where the smoothed
tetromino signal and the background noise are each scaled to unit Frobenius
norm first.  CORR noise is spatially smoothed, which turns background pixels
near the shapes into suppressors.
"""
from dataclasses import asdict, dataclass
from typing import Optional, Tuple

import numpy as np

from ..errors import GenerationError, InvalidParameterError
from ..numerics import gaussian_blur, gaussian_kernel1d
from .dataset import LabeledImageDataset, split_dataset

SCENARIOS = ("LIN", "XOR", "RIGID")
NOISES = ("WHITE", "CORR")

TETROMINO_T = np.array([[1, 1, 1], [0, 1, 0]], dtype=np.float64)
TETROMINO_L = np.array([[1, 0], [1, 0], [1, 1]], dtype=np.float64)

# independent random streams per sample
_LABEL, _WHITE, _CORR = 1, 2, 3
_MAX_PLACEMENT_RETRIES = 1000


@dataclass(frozen=True)
class TrisConfig:
    image_side: int = 8
    n_samples: int = 10_000
    scenario: str = "XOR"
    noise: str = "CORR"
    alpha: float = 0.2
    beta: Optional[float] = None
    sigma_signal_smooth: Optional[float] = None
    sigma_noise_smooth: Optional[float] = None
    seed: int = 0
    split: Tuple[float, float, float] = (0.9, 0.05, 0.05)

    def __post_init__(self):
        if self.image_side < 8:
            raise InvalidParameterError("image_side must be >= 8")
        if self.n_samples < 1:
            raise InvalidParameterError("n_samples must be >= 1")
        if self.scenario not in SCENARIOS:
            raise InvalidParameterError(f"scenario must be one of {SCENARIOS}")
        if self.noise not in NOISES:
            raise InvalidParameterError(f"noise must be one of {NOISES}")
        if not 0.0 <= self.alpha <= 1.0:
            raise InvalidParameterError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.beta is not None and not 0.0 <= self.beta <= 1.0:
            raise InvalidParameterError(f"beta must lie in [0, 1], got {self.beta}")

    @property
    def signal_sigma(self):
        # 1.5 px at 64x64, scaled with the image side
        if self.sigma_signal_smooth is not None:
            return self.sigma_signal_smooth
        return 1.5 * self.image_side / 64

    @property
    def noise_sigma(self):
        if self.sigma_noise_smooth is not None:
            return self.sigma_noise_smooth
        return 10.0 * self.image_side / 64

    @property
    def cell_scale(self):
        return max(1, self.image_side // 16)


def tetromino(kind, scale=1):
    cells = TETROMINO_T if kind == "T" else TETROMINO_L
    return np.kron(cells, np.ones((scale, scale)))


def _paste(side, shape, top, left):
    out = np.zeros((side, side))
    h, w = shape.shape
    out[top : top + h, left : left + w] = shape
    return out


def fixed_placements(config):
    """Canvases with the T near the top-left and the L near the bottom-right."""
    side = config.image_side
    margin = int(round(0.1 * side))
    t = tetromino("T", config.cell_scale)
    l_ = tetromino("L", config.cell_scale)
    canvas_t = _paste(side, t, margin, margin)
    canvas_l = _paste(side, l_, side - margin - l_.shape[0], side - margin - l_.shape[1])
    return canvas_t, canvas_l


def smooth_signal(canvas, sigma):
    return gaussian_blur(canvas, sigma, 0.05)


def ground_truth_mask(scenario, placed_shapes, sigma):
    """Pixels where any smoothed placed shape is nonzero.

    For LIN pass both fixed shapes regardless of label: the absence of one
    shape is as informative as the presence of the other.
    """
    mask = None
    for canvas in placed_shapes:
        support = smooth_signal(np.abs(canvas), sigma) != 0
        mask = support if mask is None else mask | support
    return mask


def _blur_radius(sigma):
    return gaussian_kernel1d(sigma, 0.05).size // 2


def _rigid_canvas(config, kind, rng):
    side = config.image_side
    radius = _blur_radius(config.signal_sigma)
    base = tetromino(kind, config.cell_scale)
    for _ in range(_MAX_PLACEMENT_RETRIES):
        shape = np.rot90(base, k=int(rng.integers(4)))
        h, w = shape.shape
        top = int(rng.integers(0, side - h + 1))
        left = int(rng.integers(0, side - w + 1))
        # the smoothed support must stay inside the frame
        if top >= radius and left >= radius and top + h + radius <= side and left + w + radius <= side:
            return _paste(side, shape, top, left)
    raise GenerationError(f"could not place {kind} inside a {side}x{side} frame", retries=_MAX_PLACEMENT_RETRIES)


def _sample_rng(seed, index, stream):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index, stream)))


def _signal(config, rng, fixed):
    """Return ``(smoothed signal, gt mask, label)`` for one sample."""
    y = int(rng.integers(2))
    sigma = config.signal_sigma
    canvas_t, canvas_l = fixed
    if config.scenario == "LIN":
        canvas = canvas_t if y == 0 else canvas_l
        mask = ground_truth_mask("LIN", [canvas_t, canvas_l], sigma)
    elif config.scenario == "XOR":
        sign_t = 1.0 if rng.integers(2) == 0 else -1.0
        # y = 0: same signs (++ / --); y = 1: opposite signs (+- / -+)
        sign_l = sign_t if y == 0 else -sign_t
        canvas = sign_t * canvas_t + sign_l * canvas_l
        mask = ground_truth_mask("XOR", [canvas_t, canvas_l], sigma)
    else:
        canvas = _rigid_canvas(config, "T" if y == 0 else "L", rng)
        mask = ground_truth_mask("RIGID", [canvas], sigma)
    return smooth_signal(canvas, sigma), mask, y


def _unit(x):
    norm = np.linalg.norm(x)
    return x / norm if norm > 0 else x


def mix_noise(white, corr_raw, beta, sigma):
    """``beta * G(eta1) + (1 - beta) * eta2`` with each part unit-normalized.

    A zero-weighted part is skipped so ``beta`` in {0, 1} reproduces the
    pure WHITE / CORR noise bit for bit.
    """
    parts = 0.0
    if beta > 0:
        parts = parts + beta * _unit(gaussian_blur(corr_raw, sigma, 0.05))
    if beta < 1:
        parts = parts + (1.0 - beta) * _unit(white)
    return _unit(parts)


def _generate(config, beta, return_components):
    side = config.image_side
    n = config.n_samples
    fixed = fixed_placements(config)
    signals = np.empty((n, side, side))
    masks = np.empty((n, side, side), dtype=bool)
    noises = np.empty((n, side, side))
    labels = np.empty(n, dtype=np.uint8)
    for i in range(n):
        sig, mask, y = _signal(config, _sample_rng(config.seed, i, _LABEL), fixed)
        signals[i] = _unit(sig)
        masks[i] = mask
        labels[i] = y
        white = _sample_rng(config.seed, i, _WHITE).standard_normal((side, side)) if beta < 1 else None
        corr = _sample_rng(config.seed, i, _CORR).standard_normal((side, side)) if beta > 0 else None
        noises[i] = mix_noise(white, corr, beta, config.noise_sigma)
    images = config.alpha * signals + (1.0 - config.alpha) * noises
    ds = LabeledImageDataset(
        images.reshape(n, -1),
        labels,
        masks.reshape(n, -1),
        (side, side),
        provenance={"kind": "tris", "config": asdict(config), "effective_beta": beta},
    )
    split_dataset(ds, config.split, config.seed)
    if return_components:
        return ds, signals, noises
    return ds


def gen_tris(config: TrisConfig, return_components=False):
    """Generate a LIN/XOR/RIGID dataset with WHITE or CORR noise."""
    if config.beta is not None:
        raise InvalidParameterError("gen_tris expects beta unset; use gen_tris_beta")
    return _generate(config, 1.0 if config.noise == "CORR" else 0.0, return_components)


def gen_tris_beta(config: TrisConfig, return_components=False):
    """Generate with noise ``beta * CORR + (1 - beta) * WHITE`` at fixed alpha."""
    if config.beta is None:
        raise InvalidParameterError("gen_tris_beta needs beta set")
    return _generate(config, float(config.beta), return_components)
