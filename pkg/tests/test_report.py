import numpy as np
from PIL import Image

from patternlocal.report import heatmap_grid, metric_chart_svg, save_heatmap, summarize, to_gray, write_charts, write_summary


def _rows():
    rows = []
    for method, base in (("lime", 0.3), ("patternlocal", 0.1)):
        for alpha in (0.0, 0.5):
            for i in range(4):
                rows.append(
                    {
                        "dataset": "xor",
                        "scenario": "XOR",
                        "model": "MLPModel",
                        "method": method,
                        "alpha_beta": alpha,
                        "emd": base + 0.01 * i,
                        "ime": float("nan") if i == 0 else 0.5,
                        "mse": 0.2,
                        "zero_map": i == 0,
                    }
                )
    return rows


def test_to_gray_fixed_mapping():
    np.testing.assert_array_equal(to_gray([-1.0, 0.0, 1.0, 3.0]), [0, 128, 255, 255])


def test_summarize():
    s = summarize(_rows())
    assert len(s) == 4
    rec = s[0]
    assert (rec["method"], rec["alpha_beta"], rec["n"]) == ("lime", 0.0, 4)
    assert np.isclose(rec["emd_mean"], 0.315)
    assert rec["ime_mean"] == 0.5 and rec["zero_maps"] == 1


def test_summary_and_charts_deterministic(tmp_path):
    s = summarize(_rows())
    write_summary(tmp_path / "a.csv", s)
    write_summary(tmp_path / "b.csv", summarize(list(reversed(_rows()))))
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    (p,) = write_charts(tmp_path, s)
    svg = p.read_text()
    assert svg.startswith("<svg") and svg.count("<polyline") == 6
    for m in ("EMD", "IME", "MSE"):
        assert f">{m}<" in svg
    assert metric_chart_svg(s) == metric_chart_svg(s)


def test_single_point_chart():
    s = summarize([r for r in _rows() if r["alpha_beta"] == 0.0])
    assert "<circle" in metric_chart_svg(s)


def test_heatmaps(tmp_path):
    m = np.linspace(-1, 1, 64)
    save_heatmap(tmp_path / "h.png", m, (8, 8))
    img = Image.open(tmp_path / "h.png")
    assert img.mode == "L" and img.size == (64, 64)
    heatmap_grid(tmp_path / "g.png", [[m, -m, m], [m, m, m]], (8, 8), scale=2, pad=1)
    g = np.asarray(Image.open(tmp_path / "g.png"))
    assert g.shape == (2 * 17 + 1, 3 * 17 + 1)
    assert g[1, 1] == 0 and g[1, 18] == 255
