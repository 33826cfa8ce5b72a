"""Command-line runner: gen-data, train, explain, hpo, evaluate, report.

Exit codes: 0 success, 2 config error, 3 data error, 4 training or
qualification failure, 5 explainer failure.
"""
import argparse
import hashlib
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .errors import (
    ConfigError,
    DegenerateNeighborhoodError,
    DegenerateResponseError,
    GenerationError,
    InvalidInputError,
    InvalidParameterError,
    ModelGradientError,
    SingularSystemError,
    StudyError,
    TrainingError,
    UnsupportedOperationError,
)

log = logging.getLogger("patternlocal")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_TRAIN, EXIT_EXPLAIN = 0, 2, 3, 4, 5
N_SAVED_MAPS = 8


class DataError(Exception):
    pass


class ExplainerFailure(Exception):
    pass


# ---- helpers ------------------------------------------------------------------------------

def _sha256_file(path):
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=str) + "\n")


def build_dataset(cfg):
    from .datagen import LesionConfig, ToyConfig, TrisConfig, gen_lesions, gen_toy_xor, gen_tris, gen_tris_beta, split_dataset

    gen = cfg["dataset"]["generator"]
    if gen is None:
        raise ConfigError("dataset.generator is required for gen-data")
    params = {k: v for k, v in gen.items() if k != "kind"}
    params.setdefault("seed", cfg["general"]["seed"])
    if "split" in params:
        params["split"] = tuple(params["split"])
    try:
        if gen["kind"] == "tris":
            tc = TrisConfig(**params)
            return gen_tris_beta(tc) if tc.beta is not None else gen_tris(tc)
        if gen["kind"] == "lesion":
            if "lesion_counts" in params:
                params["lesion_counts"] = tuple(params["lesion_counts"])
            return gen_lesions(LesionConfig(**params))
        split = params.pop("split", (0.9, 0.05, 0.05))
        ds = gen_toy_xor(ToyConfig(**params))
        return split_dataset(ds, split, params["seed"])
    except (InvalidParameterError, TypeError) as exc:
        raise ConfigError(f"dataset.generator: {exc}") from None


def open_dataset(cfg):
    from .datagen import load_dataset

    path = cfgmod.dataset_dir(cfg)
    if not (path / "manifest.json").is_file():
        raise DataError(f"dataset {cfg['dataset']['name']!r} not found at {path}; run gen-data first")
    return load_dataset(path)


def open_model(cfg, force=False):
    from .models import load_model, read_manifest

    path = cfgmod.model_dir(cfg)
    try:
        manifest = read_manifest(path)
    except InvalidInputError:
        raise DataError(f"no model checkpoint at {path}; run train first") from None
    qual = manifest.get("qualification", {})
    if not qual.get("qualified", False) and not force:
        raise TrainingError(f"model at {path} is not qualified (test accuracy {qual.get('test_accuracy')}); pass --force to use it anyway")
    return load_model(path), manifest, path


def build_simplification(cfg, train, image_shape):
    from .simplify import make_grid, make_identity, make_lowrank, make_slic

    spec = dict(cfg["method"]["simplification"] or {"kind": "identity"})
    kind = spec.get("kind", "identity")
    shape = tuple(image_shape)
    if kind == "identity":
        return make_identity(shape)
    if kind == "grid":
        return make_grid(shape, int(spec.get("cell_side", 2)))
    if kind == "slic":
        n, comp = int(spec.get("n_segments", 50)), float(spec.get("compactness", 0.1))
        return lambda img: make_slic(img, n, comp)
    if kind == "lowrank":
        return make_lowrank(train, int(spec.get("rank", 10)), shape)
    raise ConfigError(f"unknown simplification kind {kind!r}")


def build_explainer(cfg, ds, model):
    from .experiments import Explainer

    train = ds.subset("train")[0] if ds.split is not None else ds.images.astype(np.float64)
    simp = build_simplification(cfg, train, ds.image_shape)
    m = cfg["method"]
    return Explainer(m["name"], model, train, ds.image_shape, simp, cfg["general"]["seed"], m["surrogate"], m["lime_samples"], m["params"])


def _needs_model(cfg):
    from .baselines import FILTER_METHODS

    return cfg["method"]["name"] not in FILTER_METHODS


def _select(ds, split, instances, limit):
    idx = ds.split[split] if ds.split is not None else np.arange(ds.n_samples)
    if instances:
        try:
            pos = [int(s) for s in instances.split(",") if s.strip()]
        except ValueError:
            raise ConfigError(f"--instances expects comma-separated integers, got {instances!r}") from None
        if any(p < 0 or p >= len(idx) for p in pos):
            raise DataError(f"instance positions must lie in [0, {len(idx)})")
        idx = idx[pos]
    elif limit is not None:
        idx = idx[:limit]
    return np.asarray(idx)


def _best_params(cfg):
    path = cfgmod.run_dir(cfg) / "best_params.json"
    params = dict(cfg["method"]["params"])
    if path.is_file():
        params.update(json.loads(path.read_text())["params"])
    return params


def _explain_set(explainer, ds, idx, params, n_jobs):
    from .experiments import explain_many

    X = ds.images[idx].astype(np.float64)
    try:
        return explain_many(explainer, X, idx, params, n_jobs)
    except (ModelGradientError, DegenerateNeighborhoodError, DegenerateResponseError, SingularSystemError, UnsupportedOperationError) as exc:
        raise ExplainerFailure(f"{type(exc).__name__}: {exc}") from None


# ---- verbs --------------------------------------------------------------------------------

def cmd_gen_data(cfg, args):
    from .datagen import save_dataset

    path = cfgmod.dataset_dir(cfg)
    if path.exists() and not args.overwrite:
        raise DataError(f"{path} exists; pass --overwrite to replace it")
    ds = build_dataset(cfg)
    save_dataset(ds, path, overwrite=args.overwrite)
    print(f"wrote {ds.n_samples} samples ({'x'.join(map(str, ds.image_shape))}) to {path}")
    return EXIT_OK


def _train_model(cfg, ds):
    from .models import CnnConfig, MlpConfig, smooth_xor_classifier, train_cnn_small, train_lda, train_mlp

    name = cfg["model"]["name"]

    def progress(epoch, loss, acc):
        log.info("epoch %d: loss %.4f, val accuracy %.4f", epoch, loss, acc)

    hp = dict(cfg["model"]["hyperparameters"] or {})
    hp.setdefault("seed", cfg["general"]["seed"])
    try:
        if name == "MLPModel":
            if "hidden_dims" in hp:
                hp["hidden_dims"] = tuple(hp["hidden_dims"])
            return train_mlp(ds, MlpConfig(**hp), log=progress)[0]
        if name == "CNNModel":
            if "channels" in hp:
                hp["channels"] = tuple(hp["channels"])
            return train_cnn_small(ds, CnnConfig(**hp), log=progress)[0]
        if name == "LDA":
            X, y, _ = ds.subset("train")
            jitter = hp.get("jitter")
            return train_lda(X, y, allow_jitter=jitter is not None, jitter=jitter or 1e-8)
        return smooth_xor_classifier(hp.get("tau", 0.1))
    except (InvalidParameterError, TypeError) as exc:
        raise ConfigError(f"model.hyperparameters: {exc}") from None


def cmd_train(cfg, args):
    from .models import QUALIFICATION_ACCURACY, save_model

    ds = open_dataset(cfg)
    path = cfgmod.model_dir(cfg)
    if path.exists() and not args.overwrite:
        raise DataError(f"{path} exists; pass --overwrite to retrain")
    model = _train_model(cfg, ds)
    X, y, _ = ds.subset("test")
    acc = model.accuracy(X, y)
    qualified = acc >= QUALIFICATION_ACCURACY
    extra = {
        "qualification": {"test_accuracy": acc, "threshold": QUALIFICATION_ACCURACY, "qualified": qualified},
        "config_hash": cfgmod.config_hash(cfg),
        "dataset_checksum": ds.checksum(),
    }
    save_model(model, path, overwrite=args.overwrite, extra=extra)
    print(f"test accuracy {acc:.4f} ({'qualified' if qualified else 'NOT qualified'}); checkpoint at {path}")
    if not qualified:
        return EXIT_TRAIN
    return EXIT_OK


def cmd_hpo(cfg, args):
    from .experiments import tune
    from .hpo import SearchSpace

    ds = open_dataset(cfg)
    model = open_model(cfg, args.force)[0] if _needs_model(cfg) else None
    explainer = build_explainer(cfg, ds, model)
    opt = cfg["optimization"]
    idx = _select(ds, "val", None, opt["n_instances"])
    out = cfgmod.run_dir(cfg)
    out.mkdir(parents=True, exist_ok=True)
    log_path = out / "study.jsonl"
    if args.overwrite and log_path.exists():
        log_path.unlink()
    space = SearchSpace.from_dict(opt["parameters"]) if opt["parameters"] is not None else None
    X = ds.images[idx].astype(np.float64)
    masks = ds.gt_masks[idx].astype(bool)
    try:
        best, study = tune(
            explainer, X, masks, idx, opt["max_evals"], cfg["general"]["seed"], opt["metric_name"], opt["sampler"], space, opt["n_startup"], log_path, True, cfg["general"]["n_jobs"]
        )
    except StudyError as exc:
        raise ExplainerFailure(str(exc)) from None
    record = {
        "params": {**cfg["method"]["params"], **best},
        "metric": opt["metric_name"],
        "best_value": None if study is None else study.best_value,
        "n_trials": 0 if study is None else len(study.trials),
        "config_hash": cfgmod.config_hash(cfg),
    }
    _write_json(out / "best_params.json", record)
    print(f"best {opt['metric_name']} {record['best_value']} with {record['params']}; log {log_path}")
    return EXIT_OK


def cmd_explain(cfg, args):
    from .report import save_heatmap

    ds = open_dataset(cfg)
    model = open_model(cfg, args.force)[0] if _needs_model(cfg) else None
    explainer = build_explainer(cfg, ds, model)
    idx = _select(ds, args.split, args.instances, args.limit if args.limit is not None else N_SAVED_MAPS)
    params = _best_params(cfg)
    out = cfgmod.run_dir(cfg) / "explanations"
    out.mkdir(parents=True, exist_ok=True)
    prov = {"method": cfg["method"]["name"], "params": params, "config_hash": cfgmod.config_hash(cfg), "instances": {}}
    for i in idx:
        full = explainer.explain_full(int(i), ds.images[i].astype(np.float64), params)
        np.save(out / f"instance_{i}.npy", full["map"])
        save_heatmap(out / f"instance_{i}.png", full["map"], ds.image_shape)
        entry = {"map": f"instance_{i}.npy", "heatmap": f"instance_{i}.png"}
        for k in ("weights", "a"):
            if k in full:
                entry[k] = [float(v) for v in full[k]]
        prov["instances"][str(int(i))] = entry
    _write_json(out / "explanations.json", prov)
    print(f"wrote {len(idx)} explanations to {out}")
    return EXIT_OK


def cmd_evaluate(cfg, args):
    from .experiments import metric_rows
    from .metrics import evaluate_map, write_metric_rows
    from .report import summarize

    ds = open_dataset(cfg)
    model, manifest = (None, None)
    if _needs_model(cfg):
        model, manifest, mpath = open_model(cfg, args.force)
    explainer = build_explainer(cfg, ds, model)
    split = args.split or "val"
    idx = _select(ds, split, args.instances, args.limit)
    params = _best_params(cfg)
    maps = _explain_set(explainer, ds, idx, params, cfg["general"]["n_jobs"])
    results = [evaluate_map(m, ds.gt_masks[i].astype(bool), ds.image_shape) for m, i in zip(maps, idx)]
    gen = ds.provenance.get("config", {})
    alpha_beta = ds.provenance.get("effective_beta") if gen.get("beta") is not None else gen.get("alpha", float("nan"))
    scenario = gen.get("scenario", ds.provenance.get("kind", ""))
    arch = model.arch if model is not None else "none"
    rows = metric_rows(results, idx, cfg["dataset"]["name"], scenario, alpha_beta, arch, cfg["method"]["name"])
    out = cfgmod.run_dir(cfg)
    out.mkdir(parents=True, exist_ok=True)
    write_metric_rows(out / f"metrics_{split}.csv", rows)
    keep = min(N_SAVED_MAPS, len(idx))
    np.savez(out / f"maps_{split}.npz", ids=np.asarray(idx[:keep]), maps=np.asarray(maps[:keep]))
    summary = summarize(rows)[0]
    record = {
        "config": cfg,
        "config_hash": cfgmod.config_hash(cfg),
        "family_hash": cfgmod.family_hash(cfg),
        "dataset": {"path": str(cfgmod.dataset_dir(cfg)), "checksum": ds.checksum(), "sweep": "beta" if gen.get("beta") is not None else "alpha"},
        "model": None if manifest is None else {"path": str(mpath), "manifest_sha256": _sha256_file(mpath / "manifest.json")},
        "params": params,
        "split": split,
        "metrics_file": f"metrics_{split}.csv",
        "maps_file": f"maps_{split}.npz",
        "aggregate": {k: summary[k] for k in summary if k.endswith(("_mean", "_std")) or k in ("n", "zero_maps")},
    }
    _write_json(out / "record.json", record)
    print(f"{cfg['method']['name']}: mean EMD {summary['emd_mean']:.4f} (std {summary['emd_std']:.4f}) over {len(idx)} {split} instances; {out}")
    return EXIT_OK


def _find_records(paths):
    found = []
    for p in paths:
        p = Path(p)
        if p.is_file() and p.name == "record.json":
            found.append(p)
        elif p.is_dir():
            found += sorted(p.rglob("record.json"))
    return sorted(set(found))


def cmd_report(args):
    from .datagen import load_dataset
    from .metrics import read_metric_rows
    from .report import heatmap_grid, summarize, unit_scale, write_charts, write_summary

    roots = args.runs or [str(cfgmod.result_root({"general": {"result_base_dir": None}}) / "runs")]
    records = _find_records(roots)
    if not records:
        raise DataError(f"no result records under {', '.join(map(str, roots))}")
    loaded = [(p.parent, json.loads(p.read_text())) for p in records]
    families = {r["family_hash"] for _, r in loaded}
    if len(families) > 1 and not args.force:
        raise ConfigError(f"runs come from {len(families)} incompatible configurations; pass --force to aggregate anyway")
    rows = []
    for d, r in loaded:
        rows += read_metric_rows(d / r["metrics_file"])
    sweeps = sorted({r["dataset"]["sweep"] for _, r in loaded})
    out = Path(args.out) if args.out else Path(roots[0]).parent / "report"
    out.mkdir(parents=True, exist_ok=True)
    summary = summarize(rows)
    write_summary(out / "summary.csv", summary)
    charts = write_charts(out, summary, "/".join(sweeps))
    # qualitative grids: instance, ground truth, then one column per method
    by_dataset = {}
    for d, r in loaded:
        by_dataset.setdefault(r["dataset"]["path"], []).append((d, r))
    grids = []
    for dpath, runs in sorted(by_dataset.items()):
        runs = sorted(runs, key=lambda t: t[1]["config"]["method"]["name"])
        maps = [np.load(d / r["maps_file"]) for d, r in runs]
        common = sorted(set.intersection(*[set(m["ids"].tolist()) for m in maps]))
        if not common or not Path(dpath, "manifest.json").is_file():
            continue
        ds = load_dataset(dpath)
        grid_rows = []
        for i in common:
            row = [unit_scale(ds.images[i]), ds.gt_masks[i].astype(np.float64)]
            for m in maps:
                row.append(m["maps"][list(m["ids"]).index(i)])
            grid_rows.append(row)
        name = Path(dpath).name
        grids.append(heatmap_grid(out / f"grid_{name}.png", grid_rows, ds.image_shape))
        _write_json(out / f"grid_{name}.json", {"columns": ["instance", "ground_truth"] + [r["config"]["method"]["name"] for _, r in runs], "instances": common})
    print(f"report: {len(summary)} groups, {len(charts)} charts, {len(grids)} grids in {out}")
    return EXIT_OK


# ---- entry point --------------------------------------------------------------------------

VERBS = {"gen-data": cmd_gen_data, "train": cmd_train, "explain": cmd_explain, "hpo": cmd_hpo, "evaluate": cmd_evaluate}


def build_parser():
    parser = argparse.ArgumentParser(prog="patternlocal", description="PatternLocal experiment runner")
    sub = parser.add_subparsers(dest="verb", required=True)
    for verb in list(VERBS) + ["report"]:
        p = sub.add_parser(verb)
        if verb == "report":
            p.add_argument("runs", nargs="*", help="run directories or roots to search for record.json")
            p.add_argument("--out", help="output directory")
            p.add_argument("--force", action="store_true", help="aggregate runs from incompatible configurations")
            continue
        p.add_argument("--config", required=True, help="YAML experiment config")
        p.add_argument("--seed", type=int)
        p.add_argument("--jobs", type=int)
        p.add_argument("--force", action="store_true", help="use an unqualified model")
        p.add_argument("--overwrite", action="store_true", help="replace existing artifacts")
        p.add_argument("--metric", choices=("emd", "ime", "mse"))
        if verb in ("explain", "evaluate"):
            p.add_argument("--split", choices=("train", "val", "test"), default="test" if verb == "explain" else "val")
            p.add_argument("--instances", help="comma-separated positions within the split")
            p.add_argument("--limit", type=int, help="use the first N instances of the split")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        if args.verb == "report":
            logging.basicConfig(level=logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
            return cmd_report(args)
        cfg = cfgmod.apply_overrides(cfgmod.load_config(args.config), args.seed, args.jobs, args.metric)
        level = logging.INFO if cfg["general"]["verbose"] else logging.WARNING
        logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
        return VERBS[args.verb](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, FileNotFoundError, FileExistsError, GenerationError, InvalidInputError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except TrainingError as exc:
        print(f"training error: {exc}", file=sys.stderr)
        return EXIT_TRAIN
    except (ExplainerFailure, StudyError, ModelGradientError, DegenerateNeighborhoodError, DegenerateResponseError, SingularSystemError) as exc:
        print(f"explainer failure: {exc}", file=sys.stderr)
        return EXIT_EXPLAIN


if __name__ == "__main__":
    sys.exit(main())
