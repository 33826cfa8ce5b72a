"""Labeled image datasets, splits and the on-disk container."""
import json
import shutil
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import InvalidInputError, InvalidParameterError

SPLIT_NAMES = ("train", "val", "test")
MANIFEST = "manifest.json"
_FILES = {"images": ("images.f32", "<f4"), "labels": ("labels.u8", "u1"), "gt_masks": ("masks.u8", "u1")}


@dataclass
class LabeledImageDataset:
    """Images flattened row-wise to ``(n_samples, D)``.

    ``image_shape`` recovers the 2-D layout (a 1-tuple for tabular data).
    ``gt_masks`` is 1 exactly on ground-truth pixels.
    """

    images: np.ndarray
    labels: np.ndarray
    gt_masks: np.ndarray
    image_shape: tuple
    split: dict = None
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.uint8)
        self.gt_masks = np.asarray(self.gt_masks, dtype=np.uint8)
        self.image_shape = tuple(int(s) for s in self.image_shape)
        n, d = self.images.shape
        if self.labels.shape != (n,) or self.gt_masks.shape != (n, d):
            raise InvalidInputError("labels/masks do not match images")
        if int(np.prod(self.image_shape)) != d:
            raise InvalidInputError(f"image_shape {self.image_shape} does not match D={d}")
        if self.split is not None:
            self.split = {k: np.asarray(v, dtype=np.int64) for k, v in self.split.items()}

    @property
    def n_samples(self):
        return self.images.shape[0]

    @property
    def n_features(self):
        return self.images.shape[1]

    def subset(self, name):
        """Return ``(images, labels, masks)`` of one split as float64/int arrays."""
        if self.split is None:
            raise InvalidInputError("dataset has no split")
        idx = self.split[name]
        return self.images[idx].astype(np.float64), self.labels[idx].astype(np.int64), self.gt_masks[idx]

    def image(self, i):
        return self.images[i].astype(np.float64).reshape(self.image_shape)

    def mask(self, i):
        return self.gt_masks[i].reshape(self.image_shape).astype(bool)

    def checksum(self):
        import hashlib

        h = hashlib.sha256()
        for arr in (self.images, self.labels, self.gt_masks):
            h.update(np.ascontiguousarray(arr).tobytes())
        return h.hexdigest()


def split_dataset(dataset, ratios=(0.9, 0.05, 0.05), seed=0):
    """Shuffle indices with ``seed`` and cut them into contiguous train/val/test blocks."""
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) != 3 or any(r <= 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise InvalidParameterError(f"split ratios must be three positive numbers summing to 1, got {ratios}")
    n = dataset.n_samples
    n_train = int(round(ratios[0] * n))
    n_val = int(round(ratios[1] * n))
    n_test = n - n_train - n_val
    if min(n_train, n_val, n_test) < 1:
        raise InvalidParameterError(f"ratios {ratios} leave an empty split for n={n}")
    order = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0x5_11_7,))).permutation(n)
    dataset.split = {
        "train": np.sort(order[:n_train]),
        "val": np.sort(order[n_train : n_train + n_val]),
        "test": np.sort(order[n_train + n_val :]),
    }
    dataset.provenance["split_ratios"] = list(ratios)
    dataset.provenance["split_seed"] = int(seed)
    return dataset


def save_dataset(dataset, path, overwrite=False):
    """Write ``manifest.json`` plus raw little-endian tensors into ``path``."""
    path = Path(path)
    if path.exists():
        if not overwrite:
            raise FileExistsError(f"{path} exists; pass overwrite=True")
        shutil.rmtree(path)
    path.mkdir(parents=True)
    manifest = {
        "format": "labeled-image-dataset/1",
        "n_samples": dataset.n_samples,
        "n_features": dataset.n_features,
        "image_shape": list(dataset.image_shape),
        "files": {k: {"name": f, "dtype": dt} for k, (f, dt) in _FILES.items()},
        "split": None if dataset.split is None else {k: v.tolist() for k, v in dataset.split.items()},
        "provenance": dataset.provenance,
        "checksum": dataset.checksum(),
    }
    for key, (fname, dtype) in _FILES.items():
        np.ascontiguousarray(getattr(dataset, key), dtype=dtype).tofile(path / fname)
    (path / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return path


def load_dataset(path):
    path = Path(path)
    mpath = path / MANIFEST
    if not mpath.is_file():
        raise FileNotFoundError(f"no dataset manifest at {mpath}")
    manifest = json.loads(mpath.read_text())
    n, d = manifest["n_samples"], manifest["n_features"]
    arrays = {}
    for key, spec in manifest["files"].items():
        arr = np.fromfile(path / spec["name"], dtype=spec["dtype"])
        arrays[key] = arr.reshape((n, d) if key != "labels" else (n,))
    split = manifest["split"]
    ds = LabeledImageDataset(
        images=arrays["images"],
        labels=arrays["labels"],
        gt_masks=arrays["gt_masks"],
        image_shape=tuple(manifest["image_shape"]),
        split=None if split is None else {k: np.array(v, dtype=np.int64) for k, v in split.items()},
        provenance=manifest["provenance"],
    )
    if ds.checksum() != manifest["checksum"]:
        raise InvalidInputError(f"checksum mismatch for dataset at {path}")
    return ds
