import numpy as np
import pytest

from patternlocal.datagen import ToyConfig, TrisConfig, gen_toy_xor
from patternlocal.errors import InvalidParameterError
from patternlocal.experiments import (
    BenchmarkSpec,
    Explainer,
    explain_many,
    make_objective,
    run_tris_benchmark,
    superpixel_iou,
    tune,
)
from patternlocal.hpo import Parameter, SearchSpace
from patternlocal.metrics import read_metric_rows, write_metric_rows
from patternlocal.models import LinearModel, MlpConfig, smooth_xor_classifier
from patternlocal.simplify import make_grid

FAST_MLP = MlpConfig(hidden_dims=(32, 16), learning_rate=3e-3, patience=5, max_epochs=15, batch_size=64, seed=0)


@pytest.fixture(scope="module")
def toy():
    ds = gen_toy_xor(ToyConfig(n_samples=1500, seed=1))
    return ds.images.astype(np.float64)


def test_unknown_method_and_missing_model():
    with pytest.raises(InvalidParameterError, match="lime"):
        Explainer("deeplift", None, None, (4, 4))
    with pytest.raises(InvalidParameterError):
        Explainer("lime", None, None, (4, 4))
    with pytest.raises(InvalidParameterError):
        Explainer("patternlocal", LinearModel(np.ones(16)), np.zeros((3, 16)), (4, 4), surrogate="deeplift")


def test_filter_runs_without_model():
    x = np.random.default_rng(0).standard_normal(16)
    m = Explainer("sobel", None, None, (4, 4)).explain(0, x)
    assert m.shape == (16,) and m.max() == 1.0


def test_patternlocal_nulls_toy_suppressor(toy):
    model = smooth_xor_classifier(0.1)
    grad = Explainer("gradient", model, toy, (3,))
    pl = Explainer("patternlocal", model, toy, (3,), surrogate="gradient", fixed_params={"bandwidth": 10.0, "lam": 1e-6})
    g3 = np.mean([abs(grad.explain(i, x)[2]) for i, x in enumerate(toy[:300])])
    a3 = np.mean([abs(pl.explain(i, x)[2]) for i, x in enumerate(toy[:300])])
    assert g3 > 0.2 and a3 < 0.05


def test_lime_sample_cache_shared_across_bandwidths(toy):
    model = smooth_xor_classifier(0.3)
    ex = Explainer("lime", model, toy, (3,), seed=4)
    a = ex.explain(7, toy[7], {"bandwidth": 1.0})
    b = ex.explain(7, toy[7], {"bandwidth": 2.0})
    assert len(ex._samples) == 1
    assert not np.allclose(a, b)
    fresh = Explainer("lime", model, toy, (3,), seed=4)
    np.testing.assert_array_equal(fresh.explain(7, toy[7], {"bandwidth": 1.0}), a)
    other = Explainer("lime", model, toy, (3,), seed=5)
    assert not np.array_equal(other.explain(7, toy[7], {"bandwidth": 1.0}), a)


def test_explain_full_exposes_pattern(toy):
    ex = Explainer("patternlocal", smooth_xor_classifier(0.2), toy, (3,), surrogate="gradient")
    out = ex.explain_full(0, toy[0], {"bandwidth": 5.0})
    assert set(out) >= {"map", "weights", "a", "provenance"}
    assert out["provenance"]["surrogate"]["method"] == "gradient"


def test_parallel_matches_sequential(toy):
    ex = Explainer("patternlocal", smooth_xor_classifier(0.2), toy, (3,), surrogate="lime", lime_samples=200)
    params = {"lime_bandwidth": 2.0, "bandwidth": 3.0, "lam": 0.01}
    seq = explain_many(ex, toy[:12], range(12), params, n_jobs=1)
    ex2 = Explainer("patternlocal", smooth_xor_classifier(0.2), toy, (3,), surrogate="lime", lime_samples=200)
    par = explain_many(ex2, toy[:12], range(12), params, n_jobs=4)
    np.testing.assert_array_equal(np.array(seq), np.array(par))


def test_superpixel_iou():
    simp = make_grid((4, 4), 2)
    mask = simp.labels == 1
    assert superpixel_iou(mask.astype(float), mask, simp) == 1.0
    assert superpixel_iou(np.zeros(16), mask, simp) == 0.0
    both = np.isin(simp.labels, [1, 2]).astype(float)
    assert superpixel_iou(both, mask, simp) == pytest.approx(0.5)


def test_tune_without_parameters_skips_search():
    ex = Explainer("saliency", LinearModel(np.ones(4)), None, (4,))
    best, study = tune(ex, np.ones((2, 4)), np.ones((2, 4), bool), [0, 1], 10)
    assert best == {} and study is None


def test_failing_configurations_fail_trials(toy):
    model = smooth_xor_classifier(0.2)
    ex = Explainer("patternlocal", model, toy, (3,), surrogate="gradient")
    masks = np.tile([True, True, False], (5, 1))
    space = SearchSpace([Parameter("bandwidth", "log_uniform", 1e-4, 10.0), Parameter("kernel", "categorical", choices=("epanechnikov",))])
    best, study = tune(ex, toy[:5], masks, range(5), 12, seed=0, sampler="random", space=space)
    statuses = {t.status for t in study.trials}
    assert statuses == {"failed", "complete"}
    assert any("Degenerate" in t.error for t in study.trials)
    objective = make_objective(ex, toy[:5], masks, range(5))
    assert objective(best) == study.best_value


def test_tiny_benchmark_is_reproducible(tmp_path):
    spec = BenchmarkSpec(
        TrisConfig(8, 600, "XOR", "CORR", 0.3, seed=2),
        n_trials=3,
        n_hpo_instances=6,
        n_eval_instances=10,
        seed=2,
        model=FAST_MLP,
        lime_samples=300,
        require_qualified=False,
    )
    a = run_tris_benchmark(spec, out_dir=tmp_path)
    b = run_tris_benchmark(spec)
    assert (tmp_path / "study_lime.jsonl").exists() and (tmp_path / "study_patternlocal.jsonl").exists()
    assert len(a.rows) == 20
    write_metric_rows(tmp_path / "a.csv", a.rows)
    write_metric_rows(tmp_path / "b.csv", b.rows)
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    assert len(read_metric_rows(tmp_path / "a.csv")) == 20
    assert a.column("lime", "emd").shape == (10,)
