"""Ground-truth scores for importance maps: EMD, importance mass error and MSE."""
import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .errors import InvalidInputError

SUPPORT_EPS = 1e-12
METRIC_FIELDS = ("dataset", "scenario", "alpha_beta", "model", "method", "instance_id", "emd", "ime", "mse", "zero_map")


@dataclass(frozen=True)
class MetricResult:
    emd: float
    ime: float
    mse: float
    zero_map: bool


def normalize_map(raw):
    """Divide by the largest absolute value; an all-zero map passes through unchanged."""
    raw = np.asarray(raw, dtype=np.float64)
    peak = np.max(np.abs(raw)) if raw.size else 0.0
    if peak == 0:
        return raw.copy()
    return raw / peak


def is_zero_map(m):
    return not np.any(np.asarray(m) != 0)


def _check(importance_map, mask, image_shape):
    s = np.abs(np.asarray(importance_map, dtype=np.float64)).ravel()
    mask = np.asarray(mask).ravel().astype(bool)
    if s.size != mask.size:
        raise InvalidInputError(f"map has {s.size} pixels, mask has {mask.size}")
    if not mask.any():
        raise InvalidInputError("ground-truth mask is empty")
    if not np.all(np.isfinite(s)):
        raise InvalidInputError("importance map has non-finite entries")
    shape = tuple(image_shape) if image_shape is not None else np.shape(importance_map)
    if int(np.prod(shape)) != s.size:
        raise InvalidInputError(f"image_shape {shape} does not match {s.size} pixels")
    return s, mask, shape


def integer_masses(p, scale=None):
    """Round a nonnegative vector to integers summing exactly to ``scale``."""
    scale = kernels.MASS_SCALE if scale is None else scale
    p = np.asarray(p, dtype=np.float64)
    q = np.round(p / p.sum() * scale).astype(np.int64)
    q[np.argmax(q)] += scale - q.sum()
    return q


def pixel_coordinates(shape):
    return np.indices(shape).reshape(len(shape), -1).T.astype(np.float64)


def max_distance(shape):
    """Largest Euclidean distance between two pixels (the image diagonal)."""
    return float(np.sqrt(sum((s - 1) ** 2 for s in shape)))


def transport_cost(source, target, coords):
    """Exact optimal transport cost between two mass vectors on ``coords``.

    Only entries above ``SUPPORT_EPS`` (after normalization to unit mass)
    take part; the rest are dropped before rescaling to integers.
    """
    a = source / source.sum()
    b = target / target.sum()
    src = np.flatnonzero(a > SUPPORT_EPS)
    dst = np.flatnonzero(b > SUPPORT_EPS)
    diff = coords[src][:, None, :] - coords[dst][None, :, :]
    cost = np.sqrt(np.sum(diff * diff, axis=-1))
    total, *_ = kernels.transport_simplex(integer_masses(a[src]), integer_masses(b[dst]), cost)
    return total / kernels.MASS_SCALE


def emd(importance_map, mask, image_shape=None):
    """Transport cost from ``|s|`` (unit mass) to uniform mass on the mask, over the diagonal.

    An all-zero map is scored as uniform mass over every pixel.
    """
    s, mask, shape = _check(importance_map, mask, image_shape)
    if not s.any():
        s = np.ones_like(s)
    delta = max_distance(shape)
    if delta == 0:
        return 0.0
    return float(transport_cost(s, mask.astype(np.float64), pixel_coordinates(shape)) / delta)


def ime(importance_map, mask, image_shape=None):
    """``1 - (mass inside the mask) / (total mass)``; ``nan`` for an all-zero map."""
    s, mask, _ = _check(importance_map, mask, image_shape)
    total = s.sum()
    if total == 0:
        return float("nan")
    return float(1.0 - s[mask].sum() / total)


def mse(importance_map, mask, image_shape=None):
    """Mean squared difference between ``|map|`` and the 0/1 mask."""
    s, mask, _ = _check(importance_map, mask, image_shape)
    return float(np.mean((s - mask.astype(np.float64)) ** 2))


def evaluate_map(importance_map, mask, image_shape=None):
    zero = is_zero_map(importance_map)
    return MetricResult(
        emd(importance_map, mask, image_shape),
        ime(importance_map, mask, image_shape),
        mse(importance_map, mask, image_shape),
        zero,
    )


def write_metric_rows(path, rows, append=False):
    """Write metric rows as CSV with the fixed column order of ``METRIC_FIELDS``."""
    path = Path(path)
    new = not (append and path.exists())
    with open(path, "a" if append else "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=METRIC_FIELDS, extrasaction="raise", lineterminator="\n")
        if new:
            writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt(row.get(k, "")) for k in METRIC_FIELDS})
    return path


def _fmt(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    return v


def read_metric_rows(path):
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    for row in rows:
        for k in ("emd", "ime", "mse"):
            row[k] = float(row[k])
        row["zero_map"] = bool(int(row["zero_map"]))
    return rows
