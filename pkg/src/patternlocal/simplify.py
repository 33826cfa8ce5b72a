"""Input simplifications ``h`` shared by surrogates and patterns.

A simplification maps a flattened image of ``D`` pixels to ``D'`` simplified
features: the pixels themselves (identity), superpixel means (grid or SLIC
segments) or principal-component coefficients (low rank).
"""
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import ndimage

from . import kernels
from .errors import InvalidInputError, InvalidParameterError, UnsupportedOperationError

KINDS = ("identity", "grid_superpixel", "slic_superpixel", "low_rank")


@dataclass
class Simplification:
    kind: str
    image_shape: tuple
    labels: Optional[np.ndarray] = None  # flat pixel -> segment, superpixel kinds
    basis: Optional[np.ndarray] = None  # (D, rank), low-rank kind
    mean: Optional[np.ndarray] = None  # (D,), low-rank kind
    reference: object = 0.0
    params: dict = field(default_factory=dict)
    flags: dict = field(default_factory=dict)

    def __post_init__(self):
        self.image_shape = tuple(int(s) for s in self.image_shape)
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64).ravel()
            k = int(self.labels.max()) + 1
            counts = np.bincount(self.labels, minlength=k)
            if self.labels.min() < 0 or np.any(counts == 0):
                raise InvalidInputError("segments must be labelled 0..K-1 without gaps")
            self._order = np.argsort(self.labels, kind="stable")
            self._starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
            self._counts = counts

    @property
    def n_features(self):
        return int(np.prod(self.image_shape))

    @property
    def n_simplified(self):
        if self.kind == "identity":
            return self.n_features
        if self.kind == "low_rank":
            return self.basis.shape[1]
        return int(self._counts.size)

    @property
    def dims(self):
        return self.n_features, self.n_simplified

    @property
    def is_superpixel(self):
        return self.kind in ("grid_superpixel", "slic_superpixel")

    def segment_sizes(self):
        if self.labels is None:
            return np.ones(self.n_simplified, dtype=np.int64)
        return self._counts.copy()

    def with_reference(self, reference):
        return Simplification(
            self.kind, self.image_shape, self.labels, self.basis, self.mean, reference, dict(self.params), dict(self.flags)
        )

    def to_dict(self):
        """Auditable description (kind and construction parameters)."""
        return {"kind": self.kind, "image_shape": list(self.image_shape), "dims": list(self.dims), **self.params, **self.flags}


def make_identity(image_shape):
    return Simplification("identity", image_shape)


def make_grid(image_shape, cell_side):
    """Axis-aligned square cells in row-major order; the last row/column may be ragged."""
    if cell_side < 1:
        raise InvalidParameterError(f"cell_side must be >= 1, got {cell_side}")
    if len(image_shape) != 2:
        raise InvalidInputError("grid superpixels need a 2-D image shape")
    h, w = image_shape
    cell_side = int(cell_side)
    n_cols = -(-w // cell_side)
    rows = np.arange(h)[:, None] // cell_side
    cols = np.arange(w)[None, :] // cell_side
    labels = rows * n_cols + cols
    return Simplification("grid_superpixel", image_shape, labels, params={"cell_side": cell_side})


def _grid_centers(h, w, n_segments):
    ny = int(min(h, max(1, round(np.sqrt(n_segments * h / w)))))
    nx = int(min(w, max(1, round(n_segments / ny))))
    rows = (np.arange(ny) + 0.5) * h / ny - 0.5
    cols = (np.arange(nx) + 0.5) * w / nx - 0.5
    rr, cc = np.meshgrid(rows, cols, indexing="ij")
    return np.column_stack([np.zeros(rr.size), rr.ravel(), cc.ravel()])


def _enforce_connectivity(labels):
    """Keep the largest 4-connected piece of every segment, merge the rest into neighbours."""
    labels = labels.copy()
    h, w = labels.shape
    for _ in range(h * w):
        orphan = np.zeros_like(labels, dtype=bool)
        for k in np.unique(labels):
            comps, n = ndimage.label(labels == k)
            if n > 1:
                sizes = np.bincount(comps.ravel())[1:]
                keep = 1 + int(np.argmax(sizes))
                orphan |= (comps > 0) & (comps != keep)
        if not orphan.any():
            break
        # each orphan pixel takes the label of its first non-orphan 4-neighbour
        changed = False
        for r, c in zip(*np.nonzero(orphan)):
            for dr, dc in ((-1, 0), (0, -1), (1, 0), (0, 1)):
                rr, cc = r + dr, c + dc
                if 0 <= rr < h and 0 <= cc < w and not orphan[rr, cc]:
                    labels[r, c] = labels[rr, cc]
                    changed = True
                    break
        if not changed:
            break
    # consecutive ids in order of first appearance
    _, first = np.unique(labels.ravel(), return_index=True)
    order = np.argsort(first)
    remap = np.empty(labels.max() + 1, dtype=np.int64)
    remap[np.unique(labels.ravel())[order]] = np.arange(order.size)
    return remap[labels]


def make_slic(image, n_segments, compactness_weight=0.1, n_iters=10):
    """SLIC superpixels on a single-channel image.

    Intensities are rescaled to [0, 1] and the spatial term is weighted by
    ``compactness_weight / S`` with grid step ``S = sqrt(D / n_segments)``.
    A constant image falls back to grid cells of side ``round(S)`` and sets
    ``flags['fallback'] = 'grid'``.
    """
    if n_segments < 2:
        raise InvalidParameterError(f"n_segments must be >= 2, got {n_segments}")
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 2:
        raise InvalidInputError("make_slic needs a 2-D image")
    h, w = image.shape
    step = float(np.sqrt(h * w / n_segments))
    params = {"n_segments": int(n_segments), "compactness_weight": float(compactness_weight), "n_iters": int(n_iters)}
    ptp = float(np.ptp(image))
    if ptp == 0:
        simp = make_grid(image.shape, max(1, int(round(step))))
        simp.kind = "slic_superpixel"
        simp.params = params
        simp.flags = {"fallback": "grid"}
        return simp
    img = (image - image.min()) / ptp
    centers = _grid_centers(h, w, n_segments)
    rr, cc = np.mgrid[0:h, 0:w]
    for k in range(len(centers)):
        r = int(round(min(max(centers[k, 1], 0), h - 1)))
        c = int(round(min(max(centers[k, 2], 0), w - 1)))
        centers[k, 0] = img[r, c]
    labels = None
    for _ in range(max(1, n_iters)):
        labels, _ = kernels.slic_assign(img, np.ascontiguousarray(centers), step, float(compactness_weight))
        missing = labels < 0
        if missing.any():
            d2 = (rr[missing][:, None] - centers[:, 1]) ** 2 + (cc[missing][:, None] - centers[:, 2]) ** 2
            labels[missing] = np.argmin(d2, axis=1)
        flat = labels.ravel()
        counts = np.bincount(flat, minlength=len(centers))
        occupied = counts > 0
        for j, values in enumerate((img.ravel(), rr.ravel(), cc.ravel())):
            sums = np.bincount(flat, weights=values, minlength=len(centers))
            centers[occupied, j] = sums[occupied] / counts[occupied]
    labels = _enforce_connectivity(labels)
    return Simplification("slic_superpixel", image.shape, labels, params=params)


def make_lowrank(train_images, rank, image_shape=None):
    """Top principal directions of the centered training images."""
    X = np.asarray(train_images, dtype=np.float64)
    X = X.reshape(X.shape[0], -1)
    n, d = X.shape
    if not 1 <= rank <= min(n, d):
        raise InvalidParameterError(f"rank must lie in [1, {min(n, d)}], got {rank}")
    mean = X.mean(axis=0)
    _, s, vt = np.linalg.svd(X - mean, full_matrices=False)
    tol = s[0] * max(n, d) * np.finfo(float).eps if s.size else 0.0
    achievable = int(np.sum(s > tol))
    if rank > achievable:
        raise InvalidParameterError(f"rank {rank} exceeds the data rank; achievable rank is {achievable}")
    basis = vt[:rank].T.copy()
    # deterministic signs: largest-magnitude entry of each direction positive
    pivot = basis[np.argmax(np.abs(basis), axis=0), np.arange(rank)]
    basis *= np.where(pivot < 0, -1.0, 1.0)
    shape = image_shape if image_shape is not None else (d,)
    return Simplification(
        "low_rank", shape, basis=basis, mean=mean, params={"rank": int(rank), "explained_variance": (s[:rank] ** 2 / (n - 1)).tolist() if n > 1 else []}
    )


def project(simp, x):
    """Simplified features ``h(x)`` for one flat image or a batch of them."""
    X, single = _batch(simp, x)
    if simp.kind == "identity":
        out = X.copy()
    elif simp.kind == "low_rank":
        out = (X - simp.mean) @ simp.basis
    else:
        sums = np.add.reduceat(X[:, simp._order], simp._starts, axis=1)
        out = sums / simp._counts
    return out[0] if single else out


def _batch(simp, x):
    x = np.asarray(x, dtype=np.float64)
    d = simp.n_features
    if x.ndim == 1 or x.shape == tuple(simp.image_shape):
        X, single = x.reshape(1, -1), True
    else:
        X, single = x.reshape(x.shape[0], -1), False
    if X.shape[1] != d:
        raise InvalidInputError(f"expected {d} pixels, got {X.shape[1]}")
    return X, single


def _simplified_batch(simp, z):
    z = np.asarray(z, dtype=np.float64)
    single = z.ndim == 1
    Z = z.reshape(1, -1) if single else z
    if Z.shape[1] != simp.n_simplified:
        raise InvalidInputError(f"expected {simp.n_simplified} simplified features, got {Z.shape[1]}")
    return Z, single


def broadcast(simp, values):
    """Spread per-segment values over pixels (``B`` applied to real vectors)."""
    V, single = _simplified_batch(simp, values)
    if simp.kind == "identity":
        out = V.copy()
    elif simp.kind == "low_rank":
        raise UnsupportedOperationError("low-rank simplifications have no pixel segments")
    else:
        out = V[:, simp.labels]
    return out[0] if single else out


def to_pixels(simp, a):
    """Map a simplified-space attribution back to pixels (no normalization)."""
    if simp.kind == "low_rank":
        A, single = _simplified_batch(simp, a)
        out = A @ simp.basis.T
        return out[0] if single else out
    return broadcast(simp, a)


def reconstruct(simp, xs):
    """Inverse of ``project`` where one exists (identity and low rank)."""
    if simp.kind == "low_rank":
        Z, single = _simplified_batch(simp, xs)
        out = Z @ simp.basis.T + simp.mean
        return out[0] if single else out
    if simp.kind == "identity":
        return np.array(xs, dtype=np.float64)
    return broadcast(simp, xs)


def _reference_pixels(simp, reference):
    r = simp.reference if reference is None else reference
    r = np.asarray(r, dtype=np.float64)
    if r.ndim == 0:
        return np.full(simp.n_features, float(r))
    return r.reshape(-1)


def reconstruct_masked(simp, z, x_star, reference=None):
    """``x* . B(z) + r . (1 - B(z))`` for binary ``z`` (one row or a batch)."""
    if simp.kind == "low_rank":
        raise UnsupportedOperationError("reconstruct_masked is undefined for low-rank; use perturb()")
    Z, single = _simplified_batch(simp, z)
    x_star = _batch(simp, x_star)[0][0]
    r = _reference_pixels(simp, reference)
    mask = Z[:, simp.labels] if simp.is_superpixel else Z
    on = mask != 0
    out = np.where(on, x_star, r)
    return out[0] if single else out


def perturb(simp, z, x_star, reference=None):
    """Image for binary perturbation ``z`` under any simplification.

    Low rank masks principal-component coefficients of ``x*`` against those
    of the reference, then reconstructs linearly.
    """
    if simp.kind != "low_rank":
        return reconstruct_masked(simp, z, x_star, reference)
    Z, single = _simplified_batch(simp, z)
    c_star = project(simp, x_star)
    c_ref = project(simp, _reference_pixels(simp, reference))
    coeffs = np.where(Z != 0, c_star, c_ref)
    out = coeffs @ simp.basis.T + simp.mean
    return out[0] if single else out
