"""Model checkpoints: ``manifest.json`` plus one little-endian float32 blob per array."""
import json
import shutil
from pathlib import Path

import numpy as np

from ..errors import InvalidInputError
from .analytic import LinearModel, SmoothXorModel
from .training import CnnConfig, MlpConfig, NetworkModel, TrainReport, build_cnn_small, build_mlp


def save_model(model, path, overwrite=False, extra=None):
    path = Path(path)
    if path.exists():
        if not overwrite:
            raise FileExistsError(f"{path} exists; pass overwrite=True")
        shutil.rmtree(path)
    path.mkdir(parents=True)
    arrays = {}
    for name, arr in model.parameters().items():
        fname = f"{name}.f32"
        np.asarray(arr, dtype="<f4").tofile(path / fname)
        arrays[name] = {"file": fname, "shape": list(np.shape(arr))}
    manifest = {
        "architecture": model.arch,
        "n_features": model.n_features,
        "config": model.config_dict(),
        "metadata": model.metadata,
        "report": model.report.to_dict() if model.report is not None else None,
        "arrays": arrays,
    }
    if extra:
        manifest.update(extra)
    (path / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return path


def read_manifest(path):
    path = Path(path)
    if not (path / "manifest.json").exists():
        raise InvalidInputError(f"no model checkpoint at {path}")
    return json.loads((path / "manifest.json").read_text())


def load_model(path):
    path = Path(path)
    manifest = read_manifest(path)
    arrays = {
        name: np.fromfile(path / spec["file"], dtype="<f4").astype(np.float64).reshape(spec["shape"])
        for name, spec in manifest["arrays"].items()
    }
    arch = manifest["architecture"]
    cfg = dict(manifest["config"])
    if arch == "smooth_xor":
        model = SmoothXorModel(cfg["tau"])
    elif arch == "linear":
        model = LinearModel(arrays["w"], arrays["b"][0], metadata=manifest.get("metadata"))
    elif arch == "mlp":
        config = MlpConfig(**cfg)
        net = build_mlp(manifest["n_features"], config)
        net.set_arrays(arrays)
        model = NetworkModel("mlp", net, manifest["n_features"], config)
    elif arch == "cnn_small":
        shape = tuple(cfg.pop("image_shape"))
        config = CnnConfig(**cfg)
        net = build_cnn_small(shape, config)
        net.set_arrays(arrays)
        model = NetworkModel("cnn_small", net, manifest["n_features"], config, image_shape=shape)
    else:
        raise InvalidInputError(f"unknown architecture {arch!r}")
    report = manifest.get("report")
    if report:
        report = {k: v for k, v in report.items() if k != "qualified"}
        model.report = TrainReport(**report)
    return model
