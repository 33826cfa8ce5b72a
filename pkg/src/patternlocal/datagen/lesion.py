"""Synthetic lesion masks blended into procedural brain-like backgrounds."""
from dataclasses import asdict, dataclass
from typing import Tuple

import numpy as np
from scipy import ndimage

from ..errors import GenerationError, InvalidInputError, InvalidParameterError
from ..numerics import gaussian_blur
from .dataset import LabeledImageDataset, split_dataset

REGULAR, IRREGULAR = 0, 1

# Contour length inside one 2x2 window of the zero-padded mask, indexed by the
# window's bit pattern (tl, tr, bl, br).  This is the length of the marching
# squares iso-line at level 0.5.
_HALF_DIAG = np.sqrt(2.0) / 2.0
_WINDOW_LENGTH = np.zeros(16)
for _code in range(16):
    _bits = [(_code >> k) & 1 for k in range(4)]  # tl, tr, bl, br
    _count = sum(_bits)
    if _count in (1, 3):
        _WINDOW_LENGTH[_code] = _HALF_DIAG
    elif _count == 2:
        diagonal = (_bits[0] and _bits[3]) or (_bits[1] and _bits[2])
        _WINDOW_LENGTH[_code] = 2 * _HALF_DIAG if diagonal else 1.0


@dataclass(frozen=True)
class LesionConfig:
    image_side: int = 64
    n_samples: int = 300
    alpha: float = 0.5
    lesion_counts: Tuple[int, ...] = (3, 4, 5)
    regular_threshold: float = 0.8
    irregular_threshold: float = 0.4
    prototype_side: int = 128
    prototype_sigma: float = 2.0
    min_area: int = 6
    max_extent: float = 0.3
    seed: int = 0
    max_retries: int = 200
    split: Tuple[float, float, float] = (1 / 3, 1 / 3, 1 / 3)

    def __post_init__(self):
        if not 0 < self.irregular_threshold < self.regular_threshold <= 1:
            raise InvalidParameterError("need 0 < irregular_threshold < regular_threshold <= 1")
        if self.image_side < 16 or self.n_samples < 1:
            raise InvalidParameterError("image_side must be >= 16 and n_samples >= 1")
        if not self.lesion_counts or min(self.lesion_counts) < 1:
            raise InvalidParameterError("lesion_counts must be positive")


def perimeter(mask):
    """Boundary length of a binary mask along its marching-squares contour."""
    m = np.pad(np.asarray(mask, dtype=bool), 1).astype(np.int64)
    code = m[:-1, :-1] | (m[:-1, 1:] << 1) | (m[1:, :-1] << 2) | (m[1:, 1:] << 3)
    # summing per-pattern counts keeps the result independent of the frame size
    counts = np.bincount(code.ravel(), minlength=16)
    counts[0] = 0
    return float(counts @ _WINDOW_LENGTH)


def compactness_value(area, perim):
    """``4*pi*A / p^2`` clipped to (0, 1]."""
    if perim <= 0:
        return 1.0
    return float(min(1.0, 4.0 * np.pi * area / perim**2))


def compactness(mask):
    """Compactness of a single 4-connected component."""
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim != 2 or not mask.any():
        raise InvalidInputError("compactness needs a non-empty 2-D mask")
    _, n_comp = ndimage.label(mask)
    if n_comp != 1:
        raise InvalidInputError(f"mask has {n_comp} connected components, expected 1")
    return compactness_value(int(mask.sum()), perimeter(mask))


def classify(c, config):
    if c >= config.regular_threshold:
        return REGULAR
    if c <= config.irregular_threshold:
        return IRREGULAR
    return None


def otsu_threshold(values, bins=256):
    values = np.asarray(values, dtype=np.float64).ravel()
    hist, edges = np.histogram(values, bins=bins)
    centers = 0.5 * (edges[:-1] + edges[1:])
    w0 = np.cumsum(hist)
    w1 = w0[-1] - w0
    s0 = np.cumsum(hist * centers)
    mu0 = s0 / np.maximum(w0, 1)
    mu1 = (s0[-1] - s0) / np.maximum(w1, 1)
    between = w0 * w1 * (mu0 - mu1) ** 2
    return centers[int(np.argmax(between))]


def refine(component):
    """Pad by two pixels, soften with a sigma 0.75 blur and re-binarize."""
    padded = np.pad(component.astype(np.float64), 2)
    return gaussian_blur(padded, 0.75) >= 0.5


def _prototype_components(config, rng):
    noise = rng.standard_normal((config.prototype_side, config.prototype_side))
    smooth = gaussian_blur(noise, config.prototype_sigma)
    binary = smooth > otsu_threshold(smooth)
    binary = ndimage.binary_erosion(binary)
    binary = ndimage.binary_opening(binary)
    binary = ndimage.binary_erosion(binary)
    labels, n_comp = ndimage.label(binary)
    for sl, k in zip(ndimage.find_objects(labels), range(1, n_comp + 1)):
        yield labels[sl] == k


def synth_lesion_masks(config, n_per_class, rng):
    """Collect ``n_per_class`` regular and irregular lesion masks.

    Returns ``{REGULAR: [...], IRREGULAR: [...]}`` of ``(mask, compactness)``
    pairs; components whose compactness falls between the thresholds are
    discarded.
    """
    bank = {REGULAR: [], IRREGULAR: []}
    limit = int(config.max_extent * config.image_side)
    for _ in range(config.max_retries):
        for comp in _prototype_components(config, rng):
            if comp.sum() < config.min_area or max(comp.shape) > limit:
                continue
            c = compactness(comp)
            cls = classify(c, config)
            if cls is None or len(bank[cls]) >= n_per_class:
                continue
            bank[cls].append((refine(comp), c))
        if all(len(v) >= n_per_class for v in bank.values()):
            return bank
    raise GenerationError(
        f"found {len(bank[REGULAR])} regular / {len(bank[IRREGULAR])} irregular lesions, "
        f"needed {n_per_class} each",
        retries=config.max_retries,
    )


def procedural_background(side, rng):
    """Smooth blob texture inside an elliptical head region, clipped to [0, 0.7].

    Returns ``(image, brain_mask, bbox)`` with bbox ``(top, left, bottom, right)``.
    """
    yy, xx = np.mgrid[0:side, 0:side] / (side - 1.0)
    cy, cx = 0.5 + 0.03 * rng.standard_normal(2)
    ry, rx = 0.42 + 0.03 * rng.random(), 0.36 + 0.03 * rng.random()
    inside = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
    tex = 0.35 + 0.1 * rng.standard_normal((side, side))
    tex = gaussian_blur(tex, side / 16.0)
    for _ in range(6):
        by, bx = rng.random(2)
        amp = 0.15 * rng.standard_normal()
        width = 0.05 + 0.1 * rng.random()
        tex += amp * np.exp(-((yy - by) ** 2 + (xx - bx) ** 2) / (2 * width**2))
    tex += 0.02 * gaussian_blur(rng.standard_normal((side, side)), 1.0)
    image = np.clip(tex, 0.0, 0.7) * inside
    rows = np.flatnonzero(inside.any(axis=1))
    cols = np.flatnonzero(inside.any(axis=0))
    return image, inside, (int(rows[0]), int(cols[0]), int(rows[-1]) + 1, int(cols[-1]) + 1)


def compose_lesion_image(background, masks, alpha, rng, bbox=None, max_retries=200):
    """Place masks without overlap inside ``bbox`` and blend ``B(1 - L) + alpha L``."""
    background = np.asarray(background, dtype=np.float64)
    h, w = background.shape
    top, left, bottom, right = bbox if bbox is not None else (0, 0, h, w)
    agg = np.zeros((h, w), dtype=bool)
    for mask in masks:
        mh, mw = mask.shape
        if bottom - mh < top or right - mw < left:
            raise GenerationError("lesion larger than the placement box", retries=0)
        for _ in range(max_retries):
            r = int(rng.integers(top, bottom - mh + 1))
            c = int(rng.integers(left, right - mw + 1))
            if not np.any(agg[r : r + mh, c : c + mw] & mask):
                agg[r : r + mh, c : c + mw] |= mask
                break
        else:
            raise GenerationError("could not place lesions without overlap", retries=max_retries)
    lesion = agg.astype(np.float64)
    return background * (1.0 - lesion) + alpha * lesion, agg


def gen_lesions(config: LesionConfig) -> LabeledImageDataset:
    """Regular (y=0) vs irregular (y=1) lesion images on procedural backgrounds."""
    rng = np.random.default_rng(config.seed)
    bank = synth_lesion_masks(config, max(config.lesion_counts) * 8, rng)
    side = config.image_side
    images = np.empty((config.n_samples, side * side))
    masks = np.empty((config.n_samples, side * side), dtype=bool)
    labels = rng.integers(2, size=config.n_samples).astype(np.uint8)
    for i in range(config.n_samples):
        bg, _, bbox = procedural_background(side, rng)
        k = int(rng.choice(config.lesion_counts))
        pool = bank[int(labels[i])]
        picks = rng.choice(len(pool), size=k, replace=False)
        img, agg = compose_lesion_image(bg, [pool[j][0] for j in picks], config.alpha, rng, bbox)
        images[i] = img.ravel()
        masks[i] = agg.ravel()
    ds = LabeledImageDataset(
        images,
        labels,
        masks,
        (side, side),
        provenance={"kind": "lesion", "config": asdict(config), "background": "procedural"},
    )
    return split_dataset(ds, config.split, config.seed)
