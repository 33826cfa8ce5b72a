"""Hyperparameter search over explainer configurations.

Two optimizers share one ``Study`` record: i.i.d. random search and a
Tree-of-Parzen-Estimators variant with independent per-parameter densities.
Every trial draws from its own generator seeded by ``(seed, trial number)``,
so a study resumed from its JSON-lines log continues exactly as an
uninterrupted run would.
"""
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import logsumexp, ndtr

from .errors import InvalidParameterError, StudyError

KINDS = ("uniform", "log_uniform", "integer", "categorical")
_CONFIG_KINDS = {"float": "uniform", "log_float": "log_uniform", "int": "integer", "categorical": "categorical"}


@dataclass(frozen=True)
class Parameter:
    name: str
    kind: str
    low: float = None
    high: float = None
    choices: tuple = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidParameterError(f"parameter {self.name!r}: kind must be one of {KINDS}")
        if self.kind == "categorical":
            if not self.choices:
                raise InvalidParameterError(f"parameter {self.name!r}: empty choice list")
            object.__setattr__(self, "choices", tuple(self.choices))
            return
        if self.low is None or self.high is None or not self.low <= self.high:
            raise InvalidParameterError(f"parameter {self.name!r}: bounds must satisfy low <= high")
        if self.kind == "log_uniform" and self.low <= 0:
            raise InvalidParameterError(f"parameter {self.name!r}: log_uniform needs low > 0")

    # numerical parameters are modelled in an internal coordinate
    def to_internal(self, v):
        return math.log(v) if self.kind == "log_uniform" else float(v)

    def from_internal(self, t):
        if self.kind == "log_uniform":
            return float(min(max(math.exp(t), self.low), self.high))
        if self.kind == "integer":
            return int(min(max(round(t), self.low), self.high))
        return float(min(max(t, self.low), self.high))

    @property
    def internal_bounds(self):
        if self.kind == "log_uniform":
            return math.log(self.low), math.log(self.high)
        if self.kind == "integer":
            return self.low - 0.5, self.high + 0.5
        return float(self.low), float(self.high)

    def sample(self, rng):
        if self.kind == "categorical":
            return self.choices[int(rng.integers(len(self.choices)))]
        lo, hi = self.internal_bounds
        return self.from_internal(rng.uniform(lo, hi))

    def contains(self, v):
        if self.kind == "categorical":
            return v in self.choices
        return self.low <= v <= self.high


class SearchSpace:
    def __init__(self, parameters):
        self.parameters = list(parameters)
        names = [p.name for p in self.parameters]
        if len(set(names)) != len(names):
            raise InvalidParameterError("duplicate parameter names")

    @classmethod
    def from_dict(cls, spec):
        """Build from the ``optimization.parameters`` config mapping.

        Each entry has ``type`` (float, log_float, int, categorical) and
        either ``min``/``max`` or ``choices``.
        """
        params = []
        for name, entry in spec.items():
            entry = dict(entry)
            kind = _CONFIG_KINDS.get(entry.pop("type", None))
            if kind is None:
                raise InvalidParameterError(f"parameter {name!r}: type must be one of {sorted(_CONFIG_KINDS)}")
            if kind == "categorical":
                params.append(Parameter(name, kind, choices=tuple(entry.pop("choices", ()))))
            else:
                params.append(Parameter(name, kind, entry.pop("min", None), entry.pop("max", None)))
            if entry:
                raise InvalidParameterError(f"parameter {name!r}: unknown keys {sorted(entry)}")
        return cls(params)

    def sample(self, rng):
        return {p.name: p.sample(rng) for p in self.parameters}

    def contains(self, config):
        return all(p.name in config and p.contains(config[p.name]) for p in self.parameters)

    def __len__(self):
        return len(self.parameters)


@dataclass
class Trial:
    number: int
    params: dict
    value: float = float("nan")
    status: str = "complete"
    error: str = ""


@dataclass
class Study:
    seed: int = 0
    objective_name: str = "emd"
    sampler: str = "tpe"
    trials: list = field(default_factory=list)
    log_path: str = None

    @property
    def completed(self):
        return [t for t in self.trials if t.status == "complete"]

    @property
    def best_trial(self):
        done = self.completed
        if not done:
            raise StudyError("no completed trials")
        return min(done, key=lambda t: (t.value, t.number))

    @property
    def best_value(self):
        return self.best_trial.value

    @property
    def best_params(self):
        return dict(self.best_trial.params)

    def best_curve(self):
        """Running minimum of the objective over trial numbers (``inf`` until a success)."""
        out, best = [], math.inf
        for t in self.trials:
            if t.status == "complete":
                best = min(best, t.value)
            out.append(best)
        return np.array(out)

    def _header(self):
        return {"study": {"seed": self.seed, "objective": self.objective_name, "sampler": self.sampler}}

    def record(self, trial):
        self.trials.append(trial)
        if self.log_path is None:
            return
        path = Path(self.log_path)
        fresh = not path.exists() or path.stat().st_size == 0
        with open(path, "a") as fh:
            if fresh:
                fh.write(json.dumps(self._header(), sort_keys=True) + "\n")
            row = asdict(trial)
            row["value"] = None if not math.isfinite(trial.value) else trial.value
            fh.write(json.dumps(row, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path):
        """Replay a JSON-lines log; the study keeps appending to ``path``."""
        path = Path(path)
        lines = [json.loads(line) for line in path.read_text().splitlines() if line.strip()]
        if not lines or "study" not in lines[0]:
            raise StudyError(f"{path} is not a study log")
        head = lines[0]["study"]
        study = cls(head["seed"], head["objective"], head["sampler"], [], str(path))
        for row in lines[1:]:
            v = row["value"]
            study.trials.append(Trial(row["number"], row["params"], float("nan") if v is None else v, row["status"], row["error"]))
        return study


def trial_rng(seed, number):
    return np.random.default_rng([int(seed), int(number)])


def _run_trial(objective, number, params):
    try:
        v = float(objective(params))
    except Exception as exc:  # any explainer failure marks the trial, never skips it
        return Trial(number, params, float("nan"), "failed", f"{type(exc).__name__}: {exc}")
    if not math.isfinite(v):
        return Trial(number, params, float("nan"), "failed", f"non-finite objective {v}")
    return Trial(number, params, v)


def _open_study(seed, objective_name, sampler, log_path, resume):
    if log_path is not None and resume and Path(log_path).exists():
        study = Study.load(log_path)
        if study.seed != seed or study.sampler != sampler:
            raise StudyError(f"log {log_path} was written with seed {study.seed} / sampler {study.sampler}")
        return study
    if log_path is not None and Path(log_path).exists():
        Path(log_path).unlink()
    return Study(seed, objective_name, sampler, [], None if log_path is None else str(log_path))


def _finish(study):
    if not study.completed:
        errors = sorted({t.error for t in study.trials})
        raise StudyError(f"all {len(study.trials)} trials failed: {errors[:3]}")
    return study


def random_search(space, objective, n_trials, seed=0, log_path=None, resume=False, objective_name="emd"):
    """I.i.d. sampling from ``space``; ``objective(params)`` is minimized."""
    if n_trials < 1:
        raise InvalidParameterError("n_trials must be >= 1")
    study = _open_study(seed, objective_name, "random", log_path, resume)
    for number in range(len(study.trials), n_trials):
        study.record(_run_trial(objective, number, space.sample(trial_rng(seed, number))))
    return _finish(study)


# ---- Parzen estimators ------------------------------------------------------------------

def _silverman(x, lo, hi):
    n = len(x)
    sd = np.std(x) if n > 1 else 0.0
    bw = 1.06 * sd * n ** -0.2
    # keep kernels from collapsing onto repeated points
    return max(bw, (hi - lo) / min(100.0, 1.0 + n))


class _Parzen1D:
    """Truncated Gaussian mixture on ``[lo, hi]`` with a flat prior component."""

    def __init__(self, obs, lo, hi):
        self.lo, self.hi = lo, hi
        obs = np.asarray(obs, dtype=np.float64)
        bw = _silverman(obs, lo, hi) if obs.size else hi - lo
        self.mu = np.concatenate([obs, [0.5 * (lo + hi)]])
        self.sigma = np.concatenate([np.full(obs.size, bw), [hi - lo]])
        self.sigma = np.maximum(self.sigma, 1e-12)
        self.mass = ndtr((hi - self.mu) / self.sigma) - ndtr((lo - self.mu) / self.sigma)
        self.logw = np.full(self.mu.size, -math.log(self.mu.size))

    def sample(self, rng, n):
        k = rng.choice(self.mu.size, size=n, p=np.exp(self.logw))
        out = rng.normal(self.mu[k], self.sigma[k])
        for _ in range(20):
            bad = (out < self.lo) | (out > self.hi)
            if not bad.any():
                break
            out[bad] = rng.normal(self.mu[k[bad]], self.sigma[k[bad]])
        return np.clip(out, self.lo, self.hi)

    def logpdf(self, x):
        z = (np.asarray(x)[:, None] - self.mu) / self.sigma
        comp = -0.5 * z * z - np.log(self.sigma * math.sqrt(2 * math.pi) * self.mass)
        return logsumexp(comp + self.logw, axis=1)


class _Categorical:
    def __init__(self, obs, n_choices):
        counts = np.bincount(np.asarray(obs, dtype=np.int64), minlength=n_choices).astype(np.float64)
        self.p = (counts + 1.0) / (counts.sum() + n_choices)

    def sample(self, rng, n):
        return rng.choice(self.p.size, size=n, p=self.p)

    def logpdf(self, idx):
        return np.log(self.p[np.asarray(idx, dtype=np.int64)])


def _tpe_suggest(space, history, rng, gamma, n_candidates):
    values = np.array([t.value for t in history])
    order = np.argsort(values, kind="stable")
    n_good = max(1, int(math.ceil(gamma * len(history))))
    good = [history[i] for i in order[:n_good]]
    bad = [history[i] for i in order[n_good:]]
    score = np.zeros(n_candidates)
    cols = {}
    for p in space.parameters:
        if p.kind == "categorical":
            l = _Categorical([p.choices.index(t.params[p.name]) for t in good], len(p.choices))
            g = _Categorical([p.choices.index(t.params[p.name]) for t in bad], len(p.choices))
        else:
            lo, hi = p.internal_bounds
            l = _Parzen1D([p.to_internal(t.params[p.name]) for t in good], lo, hi)
            g = _Parzen1D([p.to_internal(t.params[p.name]) for t in bad], lo, hi)
        cand = l.sample(rng, n_candidates)
        score += l.logpdf(cand) - g.logpdf(cand)
        cols[p.name] = cand
    best = int(np.argmax(score))
    out = {}
    for p in space.parameters:
        v = cols[p.name][best]
        out[p.name] = p.choices[int(v)] if p.kind == "categorical" else p.from_internal(v)
    return out


def tpe_optimize(space, objective, n_trials, seed=0, gamma=0.25, n_startup=20, n_candidates=24, log_path=None, resume=False, objective_name="emd"):
    """Minimize ``objective`` with ``n_startup`` random trials followed by TPE proposals.

    Completed trials are split at the ``gamma`` quantile; candidates drawn
    from the good-trial density ``l`` are ranked by ``l(x) / g(x)``.
    """
    if not 0 < gamma < 1:
        raise InvalidParameterError("gamma must lie in (0, 1)")
    if n_trials < 1:
        raise InvalidParameterError("n_trials must be >= 1")
    n_startup = min(int(n_startup), int(n_trials))
    study = _open_study(seed, objective_name, "tpe", log_path, resume)
    for number in range(len(study.trials), n_trials):
        rng = trial_rng(seed, number)
        done = study.completed
        if number < n_startup or len(done) < 2:
            params = space.sample(rng)
        else:
            params = _tpe_suggest(space, done, rng, gamma, n_candidates)
        study.record(_run_trial(objective, number, params))
    return _finish(study)


def optimize(space, objective, n_trials, seed=0, sampler="tpe", **kw):
    if sampler == "tpe":
        return tpe_optimize(space, objective, n_trials, seed, **kw)
    if sampler == "random":
        return random_search(space, objective, n_trials, seed, **kw)
    raise InvalidParameterError(f"unknown sampler {sampler!r}")


# ---- objective --------------------------------------------------------------------------

class ZeroMapError(RuntimeError):
    """An explainer returned an all-zero map during objective evaluation."""


def evaluate_objective(explain_fn, instances, masks, metric="emd", image_shape=None, allow_zero_maps=False):
    """Mean metric over validation instances.

    ``explain_fn(index, x)`` returns an importance map.  Any explainer
    exception propagates (so the trial fails); an all-zero map raises
    ``ZeroMapError`` unless ``allow_zero_maps``.
    """
    from .metrics import emd, ime, is_zero_map, mse

    fn = {"emd": emd, "mse": mse, "ime": ime}.get(metric)
    if fn is None:
        raise InvalidParameterError(f"metric must be emd, mse or ime, got {metric!r}")
    scores = []
    for i, (x, m) in enumerate(zip(instances, masks)):
        s = explain_fn(i, x)
        if is_zero_map(s) and not allow_zero_maps:
            raise ZeroMapError(f"explainer returned an all-zero map for instance {i}")
        scores.append(fn(s, m, image_shape))
    return float(np.mean(scores))


# search spaces used for the benchmark methods
def default_space(method):
    if method == "lime":
        return SearchSpace([Parameter("bandwidth", "uniform", 0.5, 30.0)])
    if method == "patternlocal":
        return SearchSpace(
            [
                Parameter("lime_bandwidth", "uniform", 0.5, 30.0),
                Parameter("bandwidth", "uniform", 0.5, 30.0),
                Parameter("lam", "log_uniform", 1e-5, 1e2),
                Parameter("kernel", "categorical", choices=("gaussian", "epanechnikov")),
            ]
        )
    if method == "integrated_gradients":
        return SearchSpace(
            [Parameter("n_steps", "integer", 10, 200), Parameter("scheme", "categorical", choices=("riemann_trapezoid", "gauss_legendre"))]
        )
    if method == "gradient_shap":
        return SearchSpace([Parameter("n_samples", "integer", 5, 50), Parameter("sigma_noise", "uniform", 0.0, 0.3)])
    return SearchSpace([])


__all__ = [
    "KINDS",
    "Parameter",
    "SearchSpace",
    "Study",
    "Trial",
    "ZeroMapError",
    "default_space",
    "evaluate_objective",
    "optimize",
    "random_search",
    "tpe_optimize",
    "trial_rng",
]
