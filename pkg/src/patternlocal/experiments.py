"""Explainer registry and the tune-then-evaluate pipeline.

An ``Explainer`` binds a method to a model, the training population and a
simplification.  It caches everything that does not depend on the method's
hyperparameters (LIME perturbation samples, simplified training sets,
neighbor distances) per instance key, so an optimizer can re-evaluate the
same validation instances under many configurations cheaply.  All
randomness is drawn from generators seeded by ``(seed, instance key)``.
"""
import logging
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import baselines
from .datagen import gen_tris, gen_tris_beta
from .errors import InvalidParameterError, TrainingError
from .hpo import ZeroMapError, default_space, evaluate_objective, optimize
from .metrics import evaluate_map, is_zero_map, normalize_map
from .models import MlpConfig, train_mlp
from .pattern import PatternConfig, local_pattern, neighborhood_weights, squared_distances, upsample
from .simplify import Simplification, make_identity, project
from .surrogates import (
    SurrogateConfig,
    fit_kernelshap,
    fit_lime_sample,
    gradient_surrogate,
    lime_sample,
    smoothgrad_surrogate,
)

log = logging.getLogger(__name__)

SURROGATE_METHODS = ("lime", "kernelshap", "gradient")
METHODS = SURROGATE_METHODS + ("patternlocal",) + baselines.METHODS
PATTERN_SURROGATES = ("lime", "kernelshap", "gradient", "smoothgrad")


def instance_seed(seed, key):
    return int(np.random.SeedSequence([int(seed), int(key)]).generate_state(1)[0])


def _default_key(x):
    return zlib.crc32(np.ascontiguousarray(x, dtype=np.float64).tobytes())


def parallel_map(fn, items, n_jobs=1):
    """Order-preserving map; threads when ``n_jobs > 1``."""
    items = list(items)
    if n_jobs <= 1 or len(items) < 2:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(fn, items))


class Explainer:
    """Importance maps for one method.

    Parameters
    ----------
    method : str
        One of ``METHODS``.
    model : ModelHandle or None
        Filters run without a model.
    train : array (n, D)
        Training images (the PatternLocal neighborhood population and the
        GradientShap baseline pool).
    image_shape : tuple
    simplification : Simplification, callable or None
        A fixed simplification, a per-instance factory ``f(x)`` (e.g. SLIC)
        or ``None`` for the identity.
    surrogate : str
        Surrogate feeding PatternLocal.
    fixed_params : dict
        Defaults merged under every call's parameters.
    """

    def __init__(self, method, model, train, image_shape, simplification=None, seed=0, surrogate="lime", lime_samples=None, fixed_params=None):
        if method not in METHODS:
            raise InvalidParameterError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
        if surrogate not in PATTERN_SURROGATES:
            raise InvalidParameterError(f"surrogate must be one of {PATTERN_SURROGATES}")
        if model is None and method not in baselines.FILTER_METHODS:
            raise InvalidParameterError(f"method {method!r} needs a model")
        self.method = method
        self.model = model
        self.train = None if train is None else np.asarray(train, dtype=np.float64)
        self.image_shape = tuple(image_shape)
        self.simplification = simplification if simplification is not None else make_identity(self.image_shape)
        self.seed = int(seed)
        self.surrogate = surrogate
        self.lime_samples = lime_samples
        self.fixed_params = dict(fixed_params or {})
        self._simps = {}
        self._samples = {}
        self._populations = {}
        self._distances = {}

    # ---- caches ------------------------------------------------------------------------

    def simplification_for(self, key, x):
        if isinstance(self.simplification, Simplification):
            return self.simplification
        if key not in self._simps:
            self._simps[key] = self.simplification(np.asarray(x, dtype=np.float64).reshape(self.image_shape))
        return self._simps[key]

    def _sample(self, key, x, simp):
        if key not in self._samples:
            n = SurrogateConfig(n_samples=self.lime_samples).resolved_samples(simp.n_simplified)
            self._samples[key] = lime_sample(self.model, x, simp, n, instance_seed(self.seed, key))
        return self._samples[key]

    def _population(self, key, simp):
        fixed = isinstance(self.simplification, Simplification)
        ck = "fixed" if fixed else key
        if ck not in self._populations:
            self._populations[ck] = self.train if simp.kind == "identity" else project(simp, self.train)
        return self._populations[ck]

    def _sq_dist(self, key, population, xs):
        if key not in self._distances:
            self._distances[key] = squared_distances(population, xs)
        return self._distances[key]

    # ---- explanations ------------------------------------------------------------------

    def surrogate_fit(self, key, x, simp, params, kind=None):
        kind = kind or (self.method if self.method in SURROGATE_METHODS else self.surrogate)
        seed = instance_seed(self.seed, key)
        if kind == "lime":
            bw = params.get("lime_bandwidth", params.get("bandwidth")) if self.method == "patternlocal" else params.get("bandwidth")
            cfg = SurrogateConfig(bandwidth=bw, lam=params.get("lime_lam", 1.0), seed=seed)
            return fit_lime_sample(self._sample(key, x, simp), cfg, simp.n_simplified)
        if kind == "kernelshap":
            cfg = SurrogateConfig(kernel="kernelshap", n_samples=params.get("n_samples"), seed=seed)
            return fit_kernelshap(self.model, x, simp, cfg)
        if kind == "smoothgrad":
            return smoothgrad_surrogate(self.model, x, simp, params.get("n_samples", 50), params.get("sigma_noise", 0.1), seed)
        return gradient_surrogate(self.model, x, simp)

    def explain_full(self, key, x, params=None):
        """Map plus intermediate quantities (surrogate weights, pattern, provenance)."""
        params = {**self.fixed_params, **(params or {})}
        x = np.asarray(x, dtype=np.float64).reshape(-1)
        key = _default_key(x) if key is None else int(key)
        if self.method in baselines.METHODS:
            cfg = baselines.BaselineConfig(self.method, seed=instance_seed(self.seed, key), **params)
            m = baselines.baseline_map(cfg, x, self.model, self.image_shape, self.train)
            return {"map": m, "provenance": {"method": self.method, **params}}
        simp = self.simplification_for(key, x)
        sur = self.surrogate_fit(key, x, simp, params)
        if self.method in SURROGATE_METHODS:
            m, zero = upsample(sur.weights, simp)
            return {"map": m, "weights": sur.weights, "zero_map": zero, "provenance": {**sur.provenance, **params}}
        population = self._population(key, simp)
        xs = x if simp.kind == "identity" else project(simp, x)
        cfg = PatternConfig(
            neighborhood_kernel=params.get("kernel", "gaussian"),
            bandwidth=params.get("bandwidth", 1.0),
            lam=params.get("lam", 0.0),
            regularizer=params.get("regularizer", "ridge"),
            center=params.get("center", True),
        )
        p = neighborhood_weights(population, xs, cfg, sq_dist=self._sq_dist(key, population, xs))
        pat = local_pattern(population, sur, xs, cfg, weights=p)
        m, zero = upsample(pat.a, simp)
        prov = {"method": "patternlocal", "surrogate": sur.provenance, **pat.provenance, **params}
        return {"map": m, "weights": sur.weights, "a": pat.a, "zero_map": zero, "provenance": prov}

    def explain(self, key, x, params=None):
        return self.explain_full(key, x, params)["map"]


# ---- evaluation and tuning --------------------------------------------------------------

def explain_many(explainer, X, ids, params=None, n_jobs=1):
    return parallel_map(lambda item: explainer.explain(item[0], item[1], params), list(zip(ids, X)), n_jobs)


def make_objective(explainer, X, masks, ids, metric="emd", n_jobs=1):
    """``params -> mean metric`` over the given instances (a failing instance fails the trial)."""

    def objective(params):
        maps = explain_many(explainer, X, ids, params, n_jobs)
        return evaluate_objective(lambda i, _x: maps[i], X, masks, metric, explainer.image_shape)

    return objective


def evaluate_instances(explainer, X, masks, ids, params=None, n_jobs=1):
    """Per-instance metric results; explainer errors propagate."""
    maps = explain_many(explainer, X, ids, params, n_jobs)
    return maps, [evaluate_map(m, mask, explainer.image_shape) for m, mask in zip(maps, masks)]


def tune(explainer, X, masks, ids, n_trials, seed=0, metric="emd", sampler="tpe", space=None, n_startup=20, log_path=None, resume=False, n_jobs=1):
    """Optimize the method's hyperparameters; returns ``(best_params, study or None)``.

    Methods without tunable parameters skip the search.
    """
    space = default_space(explainer.method) if space is None else space
    if len(space) == 0 or n_trials == 0:
        return {}, None
    objective = make_objective(explainer, X, masks, ids, metric, n_jobs)
    kw = dict(log_path=log_path, resume=resume, objective_name=metric)
    if sampler == "tpe":
        kw["n_startup"] = min(n_startup, n_trials)
    study = optimize(space, objective, n_trials, seed, sampler, **kw)
    return study.best_params, study


def metric_rows(results, ids, dataset, scenario, alpha_beta, model, method):
    return [
        dict(dataset=dataset, scenario=scenario, alpha_beta=alpha_beta, model=model, method=method, instance_id=int(i), emd=r.emd, ime=r.ime, mse=r.mse, zero_map=r.zero_map)
        for i, r in zip(ids, results)
    ]


def superpixel_iou(importance_map, mask, simp, threshold=0.9):
    """IoU between the ground truth and the union of superpixels with ``|value| >= threshold``.

    Segment values are the mean absolute normalized importance over the segment.
    """
    s = np.abs(normalize_map(np.asarray(importance_map, dtype=np.float64).ravel()))
    mask = np.asarray(mask, dtype=bool).ravel()
    seg = simp.labels
    mean = np.bincount(seg, weights=s, minlength=simp.n_simplified) / np.maximum(simp.segment_sizes(), 1)
    if is_zero_map(s):
        return 0.0
    selected = (mean / mean.max() >= threshold)[seg]
    union = np.sum(selected | mask)
    return float(np.sum(selected & mask) / union) if union else 0.0


# ---- the XAI-TRIS benchmark -------------------------------------------------------------

@dataclass
class BenchmarkSpec:
    tris: object  # TrisConfig
    methods: tuple = ("lime", "patternlocal")
    n_trials: int = 100
    sampler: str = "tpe"
    metric: str = "emd"
    n_hpo_instances: int = 100
    n_eval_instances: int = None
    seed: int = 0
    model: object = None  # MlpConfig
    lime_samples: int = None
    require_qualified: bool = True
    n_jobs: int = 1


@dataclass
class BenchmarkResult:
    spec: BenchmarkSpec
    dataset: object
    model: object
    report: object
    best_params: dict = field(default_factory=dict)
    studies: dict = field(default_factory=dict)
    rows: list = field(default_factory=list)
    maps: dict = field(default_factory=dict)

    def column(self, method, metric):
        return np.array([r[metric] for r in self.rows if r["method"] == method], dtype=np.float64)


def run_tris_benchmark(spec, model=None, out_dir=None, logger=None):
    """Generate data, train an MLP (unless given), tune every method on a
    validation subset and score it on the evaluation instances.

    ``out_dir`` receives one JSON-lines study log per method.
    """
    logger = logger or log
    tris = spec.tris
    ds = gen_tris_beta(tris) if tris.beta is not None else gen_tris(tris)
    report = getattr(model, "report", None)
    if model is None:
        mcfg = spec.model or MlpConfig(seed=spec.seed)
        model, report = train_mlp(ds, mcfg)
    if spec.require_qualified and report is not None and not report.qualified:
        raise TrainingError(f"model test accuracy {report.test_accuracy:.4f} is below the qualification bar")
    train_X, _, _ = ds.subset("train")
    val_X, _, val_masks = ds.subset("val")
    val_ids = ds.split["val"]
    n_eval = len(val_ids) if spec.n_eval_instances is None else min(spec.n_eval_instances, len(val_ids))
    n_hpo = min(spec.n_hpo_instances, n_eval)
    alpha_beta = tris.beta if tris.beta is not None else tris.alpha
    name = f"tris_{tris.scenario}_{tris.noise}_{tris.image_side}"
    result = BenchmarkResult(spec, ds, model, report)
    for method in spec.methods:
        explainer = Explainer(method, model, train_X, ds.image_shape, seed=spec.seed, lime_samples=spec.lime_samples)
        log_path = None if out_dir is None else Path(out_dir) / f"study_{method}.jsonl"
        best, study = tune(
            explainer, val_X[:n_hpo], val_masks[:n_hpo], val_ids[:n_hpo], spec.n_trials, spec.seed, spec.metric, spec.sampler, log_path=log_path, n_jobs=spec.n_jobs
        )
        maps, results = evaluate_instances(explainer, val_X[:n_eval], val_masks[:n_eval], val_ids[:n_eval], best, spec.n_jobs)
        result.best_params[method] = best
        result.studies[method] = study
        result.maps[method] = np.array(maps)
        result.rows += metric_rows(results, val_ids[:n_eval], name, tris.scenario, alpha_beta, model.arch, method)
        emds = np.array([r.emd for r in results])
        logger.info("%s: best %s, median EMD %.4f over %d instances", method, best, np.median(emds), len(emds))
    return result


__all__ = [
    "BenchmarkResult",
    "BenchmarkSpec",
    "Explainer",
    "METHODS",
    "ZeroMapError",
    "evaluate_instances",
    "explain_many",
    "instance_seed",
    "make_objective",
    "metric_rows",
    "parallel_map",
    "run_tris_benchmark",
    "superpixel_iou",
    "tune",
]
