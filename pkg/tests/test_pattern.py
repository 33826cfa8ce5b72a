import numpy as np
import pytest
from scipy.optimize import minimize

from patternlocal.errors import (
    DegenerateNeighborhoodError,
    DegenerateResponseError,
    InvalidParameterError,
    SingularSystemError,
)
from patternlocal.models import smooth_xor_classifier, train_lda
from patternlocal.numerics import solve_weighted_lasso
from patternlocal.pattern import (
    PatternConfig,
    effective_sample_size,
    explain,
    neighborhood_weights,
    pattern_global,
    pattern_lasso,
    pattern_objective,
    pattern_ridge,
    upsample,
)
from patternlocal.simplify import make_grid, make_identity

FLAT = PatternConfig(bandwidth=1e8)


def _whitened(n, k, rng):
    """``n`` draws of ``k`` latents with sample mean 0 and sample covariance I exactly."""
    Z = rng.standard_normal((n, k))
    Z -= Z.mean(axis=0)
    L = np.linalg.cholesky(Z.T @ Z / n)
    return Z @ np.linalg.inv(L).T


def _toy_population(sigma_d=1.0, n=3000, seed=0):
    lat = _whitened(n, 3, np.random.default_rng(seed))
    s1, s2, d = lat[:, 0], lat[:, 1], sigma_d * lat[:, 2]
    return np.column_stack([s1 + d, s2 - d, d])


def _cos(a, b):
    return abs(a @ b) / np.linalg.norm(a) / np.linalg.norm(b)


# ---- neighborhood -----------------------------------------------------------------------

def test_neighborhood_peak_at_instance():
    X = np.random.default_rng(0).standard_normal((50, 3))
    for kernel in ("gaussian", "epanechnikov"):
        p = neighborhood_weights(X, X[7], PatternConfig(kernel, bandwidth=3.0))
        assert np.argmax(p) == 7
        assert p.sum() == pytest.approx(1.0)


def test_neighborhood_flat_limit():
    X = np.random.default_rng(1).standard_normal((50, 3))
    p = neighborhood_weights(X, X[0], PatternConfig(bandwidth=1e6))
    assert p.max() / p.min() < 1 + 1e-6


def test_epanechnikov_support_boundary():
    X = np.array([[0.0, 0.0], [3.0, 4.0], [0.6, 0.8], [6.0, 8.0]])
    p = neighborhood_weights(X, np.zeros(2), PatternConfig("epanechnikov", bandwidth=5.0))
    assert p[1] == 0.0 and p[3] == 0.0
    assert p[0] > p[2] > 0


def test_epanechnikov_degenerate():
    X = np.array([[3.0, 4.0], [6.0, 8.0]])
    with pytest.raises(DegenerateNeighborhoodError) as info:
        neighborhood_weights(X, np.zeros(2), PatternConfig("epanechnikov", bandwidth=1.0))
    assert info.value.nearest_distance == pytest.approx(5.0)


def test_gaussian_far_instance_does_not_underflow():
    X = np.random.default_rng(2).standard_normal((20, 2))
    p = neighborhood_weights(X, np.array([1e3, 1e3]), PatternConfig(bandwidth=0.5))
    assert np.isfinite(p).all() and p.sum() == pytest.approx(1.0)


def test_small_neighborhood_warning():
    X = np.random.default_rng(3).standard_normal((200, 2))
    out = pattern_ridge(X, np.array([1.0, 1.0]), X[0], PatternConfig(bandwidth=0.05, lam=1e-3))
    assert "warning" in out.provenance
    assert out.effective_sample_weight_mass < 10
    assert effective_sample_size(np.ones(10)) == pytest.approx(10.0)


def test_config_validation():
    with pytest.raises(InvalidParameterError):
        PatternConfig(bandwidth=0)
    with pytest.raises(InvalidParameterError):
        PatternConfig(lam=-1)
    with pytest.raises(InvalidParameterError):
        PatternConfig("box")


# ---- ridge ------------------------------------------------------------------------------

@pytest.mark.parametrize("x_star", [np.array([1.0, 1.0, 0.0]), np.array([0.3, -0.8, 0.5]), np.array([-1.2, 0.4, -0.9])])
def test_toy_population_nulls_suppressor(x_star):
    X = _toy_population()
    w = smooth_xor_classifier(0.5).gradient(x_star)
    a = pattern_ridge(X, w, x_star, FLAT).a
    assert abs(a[2]) < 1e-10 * np.abs(a).max()
    assert _cos(a, np.array([w[0], w[1], 0.0])) > 1 - 1e-12


def test_two_feature_suppressor_pattern():
    lat = _whitened(2000, 2, np.random.default_rng(4))
    X = np.column_stack([lat[:, 0] + lat[:, 1], lat[:, 1]])
    a = pattern_ridge(X, np.array([1.0, -1.0]), X[0], FLAT).a
    np.testing.assert_allclose(a / a[0], [1.0, 0.0], atol=1e-10)


def test_infinite_shrinkage():
    X = np.random.default_rng(5).standard_normal((100, 4))
    a = pattern_ridge(X, np.ones(4), X[0], PatternConfig(lam=1e12)).a
    assert np.max(np.abs(a)) < 1e-9


def test_zero_response_variance():
    X = np.random.default_rng(6).standard_normal((30, 3))
    with pytest.raises(DegenerateResponseError):
        pattern_ridge(X, np.zeros(3), X[0], PatternConfig(lam=0.0))


def test_closed_form_matches_numerical_minimizer():
    rng = np.random.default_rng(7)
    for _ in range(10):
        X = rng.standard_normal((80, 4)) @ rng.standard_normal((4, 4))
        w = rng.standard_normal(4)
        cfg = PatternConfig(bandwidth=float(rng.uniform(0.5, 5)), lam=float(rng.uniform(0, 1)))
        p = neighborhood_weights(X, X[0], cfg)
        a = pattern_ridge(X, w, X[0], cfg).a
        res = minimize(lambda u: pattern_objective(X, X @ w, p, u, cfg.lam), np.zeros(4), method="BFGS", options={"gtol": 1e-12})
        np.testing.assert_allclose(res.x, a, rtol=1e-6, atol=1e-9)


def test_scale_equivariance_of_map():
    X = np.random.default_rng(8).standard_normal((60, 5))
    w = np.random.default_rng(9).standard_normal(5)
    simp = make_identity((5,))
    m1 = explain(X, w, X[0], simp, PatternConfig(bandwidth=2.0)).importance_map
    m2 = explain(X, 37.0 * w, X[0], simp, PatternConfig(bandwidth=2.0)).importance_map
    np.testing.assert_allclose(m1, m2, atol=1e-12)


def test_uniform_weights_match_global_direction():
    rng = np.random.default_rng(10)
    X = rng.standard_normal((500, 4)) @ rng.standard_normal((4, 4))
    w = rng.standard_normal(4)
    local = pattern_ridge(X, w, X[0], FLAT).a
    glob = pattern_global(X, w).A[:, 0]
    assert _cos(local, glob) > 1 - 1e-12


def test_uncentered_variant_differs_on_offset_data():
    X = np.random.default_rng(11).standard_normal((100, 3)) + 5.0
    w = np.array([1.0, 0.0, 0.0])
    c = pattern_ridge(X, w, X[0], PatternConfig(bandwidth=1e6)).a
    u = pattern_ridge(X, w, X[0], PatternConfig(bandwidth=1e6, center=False)).a
    assert abs(c[1]) < 0.3
    assert u[1] == pytest.approx(25.0 / 26.0, abs=0.1)


# ---- lasso ------------------------------------------------------------------------------

def test_lasso_zero_penalty_equals_ridge():
    X = np.random.default_rng(12).standard_normal((100, 4))
    w = np.array([1.0, -0.5, 0.2, 0.0])
    r = pattern_ridge(X, w, X[0], PatternConfig(bandwidth=2.0)).a
    l_ = pattern_lasso(X, w, X[0], PatternConfig(bandwidth=2.0, regularizer="lasso")).a
    np.testing.assert_allclose(l_, r, atol=1e-12)


@pytest.mark.parametrize("lam", [0.0, 0.01, 0.5])
def test_lasso_keeps_suppressor_zero(lam):
    X = _toy_population()
    x_star = np.array([0.3, -0.8, 0.5])
    w = smooth_xor_classifier(0.5).gradient(x_star)
    a = pattern_lasso(X, w, x_star, PatternConfig(bandwidth=1e8, lam=lam, regularizer="lasso")).a
    assert abs(a[2]) < 1e-12


def test_lasso_large_penalty_zeroes_everything():
    X = np.random.default_rng(13).standard_normal((100, 4))
    a = pattern_lasso(X, np.ones(4), X[0], PatternConfig(lam=1e6, regularizer="lasso")).a
    assert np.all(a == 0)


def test_lasso_matches_generic_solver():
    rng = np.random.default_rng(14)
    X = rng.standard_normal((120, 5))
    w = rng.standard_normal(5)
    cfg = PatternConfig(bandwidth=2.0, lam=0.05, regularizer="lasso")
    p = neighborhood_weights(X, X[3], cfg)
    a = pattern_lasso(X, w, X[3], cfg).a
    Xc = X - p @ X
    y = X @ w
    yc = y - p @ y
    generic = [solve_weighted_lasso(yc[:, None], Xc[:, j], p, cfg.lam, tol=1e-14).coef[0] for j in range(5)]
    np.testing.assert_allclose(a, generic, atol=1e-10)


# ---- global pattern ---------------------------------------------------------------------

def test_global_generative_round_trip():
    rng = np.random.default_rng(15)
    A_true = rng.standard_normal((6, 2))
    S = rng.standard_normal((50000, 2))
    X = S @ A_true.T + 0.05 * rng.standard_normal((50000, 6))
    W = np.linalg.lstsq(X, S, rcond=None)[0]
    A = pattern_global(X, W).A
    for k in range(2):
        assert _cos(A[:, k], A_true[:, k]) > 0.99


def test_global_lda_suppressor():
    rng = np.random.default_rng(16)
    n = 50000
    y = rng.integers(2, size=n)
    s = np.where(y == 1, 1.0, -1.0) + 0.3 * rng.standard_normal(n)
    d = rng.standard_normal(n)
    X = np.column_stack([s + d, d])
    lda = train_lda(X, y)
    A = pattern_global(X, lda.w).A[:, 0]
    assert abs(A[1] / A[0]) < 0.02


def test_global_whitening_identity():
    X = np.random.default_rng(17).standard_normal((400, 3)) @ np.array([[2.0, 0.3, 0], [0, 1.0, 0.5], [0, 0, 0.7]])
    sigma = np.cov(X, rowvar=False)
    model = pattern_global(X, np.linalg.inv(sigma))
    np.testing.assert_allclose(model.A, sigma, atol=1e-10)
    np.testing.assert_allclose(model.A, model.Sigma_X @ model.W @ np.linalg.inv(model.Sigma_S), atol=1e-10)


def test_global_singular_latent():
    X = np.random.default_rng(18).standard_normal((100, 3))
    W = np.column_stack([np.ones(3), 2 * np.ones(3)])
    with pytest.raises(SingularSystemError):
        pattern_global(X, W)


# ---- upsampling -------------------------------------------------------------------------

def test_upsample_identity():
    a = np.array([0.5, -2.0, 1.0])
    m, zero = upsample(a, make_identity((3,)))
    np.testing.assert_allclose(m, a / 2.0)
    assert not zero


def test_upsample_one_hot_grid():
    simp = make_grid((8, 8), 4)
    m, _ = upsample(np.array([0.0, 0.0, 3.0, 0.0]), simp)
    np.testing.assert_array_equal(m != 0, simp.labels == 2)
    assert np.max(np.abs(m)) == 1.0


def test_upsample_zero_flag():
    m, zero = upsample(np.zeros(4), make_grid((4, 4), 2))
    assert zero and not m.any()
