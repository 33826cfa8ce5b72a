"""Experiment configuration: five YAML sections (method, general, dataset,
model, optimization).  Unknown keys are errors.
"""
import copy
import hashlib
import json
import os
from pathlib import Path

import yaml

from .errors import ConfigError

RESULT_ROOT_ENV = "PATTERNLOCAL_RESULTS"
SECTIONS = ("method", "general", "dataset", "model", "optimization")

DEFAULTS = {
    "method": {"name": "lime", "surrogate": "lime", "simplification": {"kind": "identity"}, "lime_samples": None, "params": {}},
    "general": {"seed": 0, "verbose": False, "n_jobs": 12, "normalize": True, "result_base_dir": None},
    "dataset": {"name": None, "path": None, "generator": None},
    "model": {"name": "MLPModel", "path": None, "hyperparameters": {}},
    "optimization": {"metric_name": "emd", "max_evals": 200, "sampler": "tpe", "n_startup": 20, "n_instances": None, "parameters": None},
}

GENERATOR_KEYS = {
    "tris": {"kind", "image_side", "n_samples", "scenario", "noise", "alpha", "beta", "sigma_signal_smooth", "sigma_noise_smooth", "seed", "split"},
    "toy": {"kind", "n_samples", "sigma_d", "seed", "split"},
    "lesion": {"kind", "image_side", "n_samples", "alpha", "lesion_counts", "seed", "split"},
}
SIMPLIFICATION_KEYS = {"kind", "cell_side", "n_segments", "compactness", "rank"}
MODEL_NAMES = ("MLPModel", "CNNModel", "LDA", "SmoothXor")
MODEL_HYPERPARAMETERS = {
    "MLPModel": {"hidden_dims", "dropout", "batch_size", "learning_rate", "patience", "max_epochs", "lr_factor"},
    "CNNModel": {"channels", "dropout", "batch_size", "learning_rate", "patience", "max_epochs", "lr_factor"},
    "LDA": {"jitter"},
    "SmoothXor": {"tau"},
}
# settings that never change results and stay out of the config hash
_VOLATILE = {"general": ("verbose", "n_jobs", "result_base_dir")}


def _merge(section, given, defaults):
    if given is None:
        return copy.deepcopy(defaults)
    if not isinstance(given, dict):
        raise ConfigError(f"section {section!r} must be a mapping")
    unknown = sorted(set(given) - set(defaults))
    if unknown:
        raise ConfigError(f"unknown key(s) in {section}: {', '.join(unknown)}")
    out = copy.deepcopy(defaults)
    out.update(copy.deepcopy(given))
    return out


def _check_keys(where, mapping, allowed):
    unknown = sorted(set(mapping) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key(s) in {where}: {', '.join(unknown)}")


def normalize_config(raw):
    """Validate a parsed config mapping and fill defaults."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping with sections " + ", ".join(SECTIONS))
    _check_keys("config", raw, SECTIONS)
    method = raw.get("method")
    if isinstance(method, str):
        method = {"name": method}
    cfg = {s: _merge(s, method if s == "method" else raw.get(s), DEFAULTS[s]) for s in SECTIONS}

    from .experiments import METHODS, PATTERN_SURROGATES

    m = cfg["method"]
    if m["name"] not in METHODS:
        raise ConfigError(f"unknown method {m['name']!r}; choose from {', '.join(METHODS)}")
    if m["surrogate"] not in PATTERN_SURROGATES:
        raise ConfigError(f"unknown surrogate {m['surrogate']!r}")
    _check_keys("method.simplification", m["simplification"] or {}, SIMPLIFICATION_KEYS)
    if not isinstance(m["params"], dict):
        raise ConfigError("method.params must be a mapping")

    g = cfg["general"]
    if not isinstance(g["seed"], int):
        raise ConfigError("general.seed must be an integer")
    if not isinstance(g["n_jobs"], int) or g["n_jobs"] < 1:
        raise ConfigError("general.n_jobs must be a positive integer")

    d = cfg["dataset"]
    if not d["name"]:
        raise ConfigError("dataset.name is required")
    gen = d["generator"]
    if gen is not None:
        kind = gen.get("kind")
        if kind not in GENERATOR_KEYS:
            raise ConfigError(f"dataset.generator.kind must be one of {sorted(GENERATOR_KEYS)}")
        _check_keys("dataset.generator", gen, GENERATOR_KEYS[kind])

    md = cfg["model"]
    if md["name"] not in MODEL_NAMES:
        raise ConfigError(f"unknown model {md['name']!r}; choose from {', '.join(MODEL_NAMES)}")
    _check_keys("model.hyperparameters", md["hyperparameters"] or {}, MODEL_HYPERPARAMETERS[md["name"]] | {"seed"})

    o = cfg["optimization"]
    if o["metric_name"] not in ("emd", "ime", "mse"):
        raise ConfigError("optimization.metric_name must be emd, ime or mse")
    if o["sampler"] not in ("tpe", "random"):
        raise ConfigError("optimization.sampler must be tpe or random")
    if not isinstance(o["max_evals"], int) or o["max_evals"] < 0:
        raise ConfigError("optimization.max_evals must be a non-negative integer")
    if o["parameters"] is not None:
        from .errors import InvalidParameterError
        from .hpo import SearchSpace

        try:
            SearchSpace.from_dict(o["parameters"])
        except InvalidParameterError as exc:
            raise ConfigError(f"optimization.parameters: {exc}") from None
    return cfg


def load_config(path):
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} not found")
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    return normalize_config(raw)


def apply_overrides(cfg, seed=None, jobs=None, metric=None):
    cfg = copy.deepcopy(cfg)
    if seed is not None:
        cfg["general"]["seed"] = int(seed)
    if jobs is not None:
        if jobs < 1:
            raise ConfigError("--jobs must be >= 1")
        cfg["general"]["n_jobs"] = int(jobs)
    if metric is not None:
        cfg["optimization"]["metric_name"] = metric
    return cfg


def _canonical(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=str)


def config_hash(cfg, drop=()):
    """Content hash of the result-relevant part of ``cfg``.

    ``drop`` lists extra ``section.key`` (or ``section.key.subkey``) paths to leave out.
    """
    c = copy.deepcopy(cfg)
    for section, keys in _VOLATILE.items():
        for k in keys:
            c[section].pop(k, None)
    for path in drop:
        parts = path.split(".")
        node = c
        for p in parts[:-1]:
            node = node.get(p) if isinstance(node, dict) else None
            if node is None:
                break
        if isinstance(node, dict):
            node.pop(parts[-1], None)
    return hashlib.sha256(_canonical(c).encode()).hexdigest()


def family_hash(cfg):
    """Hash shared by runs that differ only in method, dataset name and the swept alpha/beta."""
    return config_hash(cfg, drop=("method", "optimization", "dataset.name", "dataset.path", "dataset.generator.alpha", "dataset.generator.beta"))


def result_root(cfg):
    root = cfg["general"].get("result_base_dir") or os.environ.get(RESULT_ROOT_ENV) or "results"
    return Path(root)


def dataset_dir(cfg):
    base = cfg["dataset"]["path"]
    return (Path(base) if base else result_root(cfg) / "data") / cfg["dataset"]["name"]


def model_dir(cfg):
    if cfg["model"]["path"]:
        return Path(cfg["model"]["path"])
    return result_root(cfg) / "models" / cfg["dataset"]["name"] / cfg["model"]["name"]


def run_dir(cfg):
    return result_root(cfg) / "runs" / cfg["dataset"]["name"] / cfg["method"]["name"] / config_hash(cfg)[:12]


__all__ = [
    "DEFAULTS",
    "RESULT_ROOT_ENV",
    "SECTIONS",
    "apply_overrides",
    "config_hash",
    "dataset_dir",
    "family_hash",
    "load_config",
    "model_dir",
    "normalize_config",
    "result_root",
    "run_dir",
]
