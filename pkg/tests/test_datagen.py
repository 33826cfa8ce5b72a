import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from patternlocal.datagen import (
    LesionConfig,
    ToyConfig,
    TrisConfig,
    compactness,
    compose_lesion_image,
    gen_lesions,
    gen_toy_xor,
    gen_tris,
    gen_tris_beta,
    ground_truth_mask,
    load_dataset,
    save_dataset,
    split_dataset,
    synth_lesion_masks,
    toy_covariance,
)
from patternlocal.datagen import lesion as lesion_mod
from patternlocal.datagen.tris import fixed_placements, tetromino
from patternlocal.errors import InvalidInputError, InvalidParameterError


# ---- toy ---------------------------------------------------------------------

def test_toy_tiny_suppressor():
    ds = gen_toy_xor(ToyConfig(n_samples=500, sigma_d=1e-14))
    assert np.max(np.abs(ds.images[:, 2])) < 1e-12


def test_toy_fig2_sample_size_and_masks():
    ds = gen_toy_xor(ToyConfig(n_samples=2500))
    assert ds.images.shape == (2500, 3)
    np.testing.assert_array_equal(ds.gt_masks[0], [1, 1, 0])
    assert set(np.unique(ds.labels)) == {0, 1}


def test_toy_labels_follow_xor_of_latents():
    ds = gen_toy_xor(ToyConfig(n_samples=1000, sigma_d=0.5, seed=3))
    x = ds.images.astype(np.float64)
    s1, s2 = x[:, 0] - x[:, 2], x[:, 1] + x[:, 2]
    np.testing.assert_array_equal(ds.labels, (s1 * s2 > 0).astype(np.uint8))


def test_toy_covariance_converges():
    n = 100_000
    sigma_d = 1.0
    ds = gen_toy_xor(ToyConfig(n_samples=n, sigma_d=sigma_d, seed=11))
    emp = np.cov(ds.images.astype(np.float64), rowvar=False)
    assert np.max(np.abs(emp - toy_covariance(sigma_d))) < 5 / np.sqrt(n)
    # Cov(x1, x3) = sigma_d^2 within three standard errors
    x = ds.images.astype(np.float64)
    prod = (x[:, 0] - x[:, 0].mean()) * (x[:, 2] - x[:, 2].mean())
    assert abs(prod.mean() - sigma_d**2) < 3 * prod.std() / np.sqrt(n)


def test_toy_config_validation():
    with pytest.raises(InvalidParameterError):
        ToyConfig(sigma_d=0.0)


# ---- tetromino benchmark -------------------------------------------------------

@pytest.mark.parametrize("scenario", ["LIN", "XOR", "RIGID"])
def test_pure_signal_lies_in_ground_truth(scenario):
    ds = gen_tris(TrisConfig(n_samples=50, scenario=scenario, noise="CORR", alpha=1.0, seed=2))
    nonzero = ds.images != 0
    assert not np.any(nonzero & (ds.gt_masks == 0))


def test_paper_scale_dimensions():
    cfg = TrisConfig(image_side=64, n_samples=40_000)
    assert cfg.image_side**2 == 4096
    # the generator itself at reduced N; full N only changes the row count
    ds = gen_tris(TrisConfig(image_side=64, n_samples=40, seed=1))
    assert ds.images.shape == (40, 4096)
    assert cfg.n_samples == 40_000


@pytest.mark.parametrize("scenario", ["LIN", "XOR", "RIGID"])
@pytest.mark.parametrize("noise", ["WHITE", "CORR"])
def test_unit_norm_components(scenario, noise):
    ds, signal, noise_arr = gen_tris(
        TrisConfig(n_samples=30, scenario=scenario, noise=noise, alpha=0.3, seed=4), return_components=True
    )
    np.testing.assert_allclose(np.linalg.norm(signal.reshape(30, -1), axis=1), 1.0, atol=1e-12)
    np.testing.assert_allclose(np.linalg.norm(noise_arr.reshape(30, -1), axis=1), 1.0, atol=1e-12)
    recomposed = 0.3 * signal + 0.7 * noise_arr
    np.testing.assert_allclose(ds.images.reshape(recomposed.shape), recomposed, atol=1e-6)


def test_corr_noise_correlates_shape_and_neighbors():
    def neighbor_corr(noise):
        cfg = TrisConfig(n_samples=2000, scenario="XOR", noise=noise, alpha=0.2, seed=5)
        ds, _, noise_arr = gen_tris(cfg, return_components=True)
        mask = ds.mask(0)
        inside = np.argwhere(mask)[0]
        # first off-shape pixel to the left of the shape
        r, c = inside
        off = (r, c - 1)
        assert not mask[off]
        return np.corrcoef(noise_arr[:, r, c], noise_arr[:, off[0], off[1]])[0, 1]

    corr, white = neighbor_corr("CORR"), neighbor_corr("WHITE")
    assert corr > 0.5
    assert corr > white + 0.3


@pytest.mark.parametrize("beta,noise", [(0.0, "WHITE"), (1.0, "CORR")])
def test_beta_endpoints_match_pure_noise(beta, noise):
    base = dict(n_samples=40, scenario="XOR", alpha=0.2, seed=9)
    a = gen_tris(TrisConfig(noise=noise, **base))
    b = gen_tris_beta(TrisConfig(noise="CORR", beta=beta, **base))
    np.testing.assert_array_equal(a.images, b.images)
    np.testing.assert_array_equal(a.gt_masks, b.gt_masks)


def test_beta_sweep_configs():
    for beta in (0.0, 0.25, 0.5, 0.75, 1.0):
        ds = gen_tris_beta(TrisConfig(n_samples=40, scenario="XOR", alpha=0.2, beta=beta))
        assert ds.provenance["effective_beta"] == beta


def test_beta_and_alpha_do_not_move_masks():
    base = dict(n_samples=25, scenario="RIGID", seed=12)
    ref = gen_tris(TrisConfig(alpha=0.1, noise="WHITE", **base)).gt_masks
    for alpha in (0.4, 0.9):
        np.testing.assert_array_equal(gen_tris(TrisConfig(alpha=alpha, noise="CORR", **base)).gt_masks, ref)
    for beta in (0.3, 0.6):
        np.testing.assert_array_equal(gen_tris_beta(TrisConfig(alpha=0.5, beta=beta, **base)).gt_masks, ref)


def test_beta_required_or_forbidden():
    with pytest.raises(InvalidParameterError):
        gen_tris(TrisConfig(n_samples=2, beta=0.5))
    with pytest.raises(InvalidParameterError):
        gen_tris_beta(TrisConfig(n_samples=2))
    with pytest.raises(InvalidParameterError):
        TrisConfig(alpha=1.5)


def test_lin_mask_covers_both_shapes():
    ds = gen_tris(TrisConfig(n_samples=40, scenario="LIN", noise="WHITE", seed=3))
    cfg = TrisConfig(scenario="LIN")
    t, l_ = fixed_placements(cfg)
    expected = ((t + l_) > 0).ravel()
    for i in range(40):
        np.testing.assert_array_equal(ds.gt_masks[i].astype(bool), expected)


def test_xor_mask_is_smoothed_support():
    cfg = TrisConfig(image_side=64, n_samples=1, scenario="XOR")
    t, l_ = fixed_placements(cfg)
    mask = ground_truth_mask("XOR", [t, l_], cfg.signal_sigma)
    # sigma 1.5 with 5% support has radius 3: every shape pixel grows by up to 3
    from scipy import ndimage

    dilated = ndimage.binary_dilation((t + l_) > 0, structure=np.ones((7, 7), bool))
    np.testing.assert_array_equal(mask, dilated)


@pytest.mark.parametrize("kind", ["T", "L"])
@pytest.mark.parametrize("scale", [1, 2, 4])
def test_unsmoothed_tetromino_pixel_count(kind, scale):
    canvas = np.zeros((32, 32))
    shape = tetromino(kind, scale)
    canvas[3 : 3 + shape.shape[0], 5 : 5 + shape.shape[1]] = shape
    mask = ground_truth_mask("RIGID", [canvas], 1e-3)
    assert mask.sum() == 4 * scale**2


def test_rigid_shapes_stay_in_frame_and_vary():
    ds = gen_tris(TrisConfig(n_samples=60, scenario="RIGID", noise="WHITE", alpha=1.0, seed=8))
    positions = {tuple(np.argwhere(ds.mask(i))[0]) for i in range(60)}
    assert len(positions) > 5
    assert np.all(ds.gt_masks.sum(axis=1) == 4)


def test_generation_is_deterministic():
    cfg = TrisConfig(n_samples=30, seed=21)
    np.testing.assert_array_equal(gen_tris(cfg).images, gen_tris(cfg).images)


# ---- splits and container ------------------------------------------------------

def test_split_sizes_paper_ratio():
    class _Stub:
        n_samples = 40_000
        provenance = {}

    stub = split_dataset(_Stub(), (0.9, 0.05, 0.05), seed=1)
    assert [len(stub.split[k]) for k in ("train", "val", "test")] == [36_000, 2_000, 2_000]
    allidx = np.concatenate(list(stub.split.values()))
    assert np.array_equal(np.sort(allidx), np.arange(40_000))


def test_split_rejects_empty():
    ds = gen_toy_xor(ToyConfig(n_samples=20))
    with pytest.raises(InvalidParameterError):
        split_dataset(ds, (1.0, 0.0, 0.0))


def test_split_deterministic():
    ds = gen_toy_xor(ToyConfig(n_samples=100))
    a = split_dataset(ds, seed=4).split
    b = split_dataset(gen_toy_xor(ToyConfig(n_samples=100)), seed=4).split
    for k in a:
        np.testing.assert_array_equal(a[k], b[k])


def test_container_roundtrip_bit_exact(tmp_path):
    ds = gen_tris(TrisConfig(n_samples=20, seed=2))
    save_dataset(ds, tmp_path / "d")
    back = load_dataset(tmp_path / "d")
    assert back.images.tobytes() == ds.images.tobytes()
    assert back.gt_masks.tobytes() == ds.gt_masks.tobytes()
    assert back.labels.tobytes() == ds.labels.tobytes()
    for k in ds.split:
        np.testing.assert_array_equal(back.split[k], ds.split[k])
    assert back.provenance["config"]["seed"] == 2
    with pytest.raises(FileExistsError):
        save_dataset(ds, tmp_path / "d")
    save_dataset(ds, tmp_path / "d", overwrite=True)


def test_container_layout(tmp_path):
    ds = gen_tris(TrisConfig(n_samples=40))
    path = save_dataset(ds, tmp_path / "x")
    raw = np.fromfile(path / "images.f32", dtype="<f4")
    assert raw.size == 40 * 64
    assert (path / "masks.u8").stat().st_size == 40 * 64
    assert (path / "labels.u8").stat().st_size == 40


# ---- lesions -------------------------------------------------------------------

def _disc(radius, pad=2):
    r = radius + pad
    yy, xx = np.mgrid[-r : r + 1, -r : r + 1]
    return yy**2 + xx**2 <= radius**2


@pytest.mark.parametrize("radius", [8, 12, 20])
def test_disc_is_regular(radius):
    c = compactness(_disc(radius))
    assert c > 0.8
    assert lesion_mod.classify(c, LesionConfig()) == lesion_mod.REGULAR
    if radius >= 20:
        assert c > 0.85


def test_bar_is_irregular():
    c = compactness(np.ones((1, 40), bool))
    assert c < 0.1
    assert lesion_mod.classify(c, LesionConfig()) == lesion_mod.IRREGULAR


def test_middle_compactness_discarded():
    assert lesion_mod.classify(0.6, LesionConfig()) is None


def test_square_formula():
    s = 7
    assert lesion_mod.compactness_value(s * s, 4 * s) == pytest.approx(np.pi / 4)


def test_marching_squares_perimeter_square():
    s = 9
    assert lesion_mod.perimeter(np.ones((s, s))) == pytest.approx(4 * (s - 1) + 2 * np.sqrt(2))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 20), st.integers(0, 20))
def test_compactness_translation_invariant(dr, dc):
    blob = np.zeros((40, 40), bool)
    blob[2:9, 3:7] = True
    blob[5:12, 6:9] = True
    moved = np.zeros((60, 60), bool)
    moved[dr : dr + 40, dc : dc + 40] = blob
    assert compactness(moved) == compactness(blob)


def test_compactness_rejects_bad_masks():
    with pytest.raises(InvalidInputError):
        compactness(np.zeros((5, 5)))
    two = np.zeros((5, 5), bool)
    two[0, 0] = two[4, 4] = True
    with pytest.raises(InvalidInputError):
        compactness(two)


def test_lesion_bank_classes():
    cfg = LesionConfig()
    bank = synth_lesion_masks(cfg, 5, np.random.default_rng(0))
    for cls, items in bank.items():
        assert len(items) == 5
        for mask, c in items:
            assert mask.dtype == bool and mask.any()
            if cls == lesion_mod.REGULAR:
                assert c >= 0.8
            else:
                assert c <= 0.4


def test_compose_alpha_zero_and_empty():
    rng = np.random.default_rng(0)
    bg = rng.random((20, 20))
    lesion = np.ones((3, 3), bool)
    img, agg = compose_lesion_image(bg, [lesion], 0.0, rng)
    np.testing.assert_array_equal(img[~agg], bg[~agg])
    assert np.all(img[agg] == 0.0)
    img, agg = compose_lesion_image(bg, [], 0.5, rng)
    np.testing.assert_array_equal(img, bg)
    assert not agg.any()


def test_compose_blend_and_no_overlap():
    rng = np.random.default_rng(3)
    bg = np.full((30, 30), 0.2)
    masks = [np.ones((4, 4), bool)] * 4
    img, agg = compose_lesion_image(bg, masks, 0.5, rng, bbox=(5, 5, 25, 25))
    assert agg.sum() == 4 * 16  # no overlap
    np.testing.assert_allclose(img[agg], 0.5)
    assert not agg[:5].any() and not agg[25:].any()


def test_lesion_dataset():
    ds = gen_lesions(LesionConfig(n_samples=30, seed=4))
    assert ds.images.shape == (30, 64 * 64)
    assert np.all(ds.gt_masks.sum(axis=1) > 0)
    assert ds.provenance["background"] == "procedural"
    assert set(ds.split) == {"train", "val", "test"}
