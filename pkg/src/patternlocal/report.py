"""Summary tables, SVG metric curves and PNG heatmap grids.

All outputs are byte-deterministic for identical inputs: floats are written
with fixed formatting and images carry no timestamps.
"""
import csv
from collections import defaultdict
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np
from PIL import Image

METRICS = ("emd", "ime", "mse")
SUMMARY_FIELDS = ("dataset", "scenario", "model", "method", "alpha_beta", "n", "emd_mean", "emd_std", "ime_mean", "ime_std", "mse_mean", "mse_std", "zero_maps")
PALETTE = ("#1b6ca8", "#d1495b", "#2e933c", "#edae49", "#6a4c93", "#00798c", "#8d6a9f", "#585123", "#c3423f", "#404e4d")


# ---- images -----------------------------------------------------------------------------

def to_gray(importance_map):
    """Fixed diverging mapping: -1 -> 0 (black), 0 -> 128, +1 -> 255 (white)."""
    v = np.clip(np.asarray(importance_map, dtype=np.float64), -1.0, 1.0)
    return np.round(127.5 * (v + 1.0)).astype(np.uint8)


def _upscale(a, factor):
    return np.kron(a, np.ones((factor, factor), dtype=a.dtype)) if factor > 1 else a


def save_heatmap(path, importance_map, image_shape, scale=None):
    """8-bit grayscale PNG of a map in [-1, 1]."""
    g = to_gray(np.asarray(importance_map).reshape(image_shape))
    if g.ndim == 1:
        g = g[None, :]
    factor = scale or max(1, 64 // max(g.shape))
    Image.fromarray(_upscale(g, factor)).save(path, format="PNG")
    return Path(path)


def unit_scale(img):
    """Scale to max |value| = 1 (for showing raw images with the map colormap)."""
    img = np.asarray(img, dtype=np.float64)
    peak = np.max(np.abs(img))
    return img / peak if peak > 0 else img


def heatmap_grid(path, rows, image_shape, scale=None, pad=2):
    """Grid PNG; each row is a list of maps in [-1, 1] (instance, ground truth, methods...)."""
    tiles = [[to_gray(np.asarray(m).reshape(image_shape)) for m in row] for row in rows]
    h, w = tiles[0][0].shape if len(image_shape) == 2 else (1, image_shape[0])
    factor = scale or max(1, 64 // max(h, w))
    th, tw = h * factor, w * factor
    n_cols = max(len(r) for r in tiles)
    canvas = np.full((len(tiles) * (th + pad) + pad, n_cols * (tw + pad) + pad), 255, dtype=np.uint8)
    for i, row in enumerate(tiles):
        for j, t in enumerate(row):
            t = t.reshape(h, w)
            y, x = pad + i * (th + pad), pad + j * (tw + pad)
            canvas[y : y + th, x : x + tw] = _upscale(t, factor)
    Image.fromarray(canvas).save(path, format="PNG")
    return Path(path)


# ---- aggregation ------------------------------------------------------------------------

def _stats(values):
    v = np.asarray(values, dtype=np.float64)
    v = v[np.isfinite(v)]
    if v.size == 0:
        return float("nan"), float("nan")
    return float(v.mean()), float(v.std())


def summarize(rows):
    """Mean and std of every metric per (dataset, scenario, model, method, alpha/beta)."""
    groups = defaultdict(list)
    for r in rows:
        key = (r["dataset"], r["scenario"], r["model"], r["method"], float(r["alpha_beta"]))
        groups[key].append(r)
    out = []
    for key in sorted(groups):
        g = groups[key]
        rec = dict(zip(("dataset", "scenario", "model", "method", "alpha_beta"), key))
        rec["n"] = len(g)
        for m in METRICS:
            rec[f"{m}_mean"], rec[f"{m}_std"] = _stats([r[m] for r in g])
        rec["zero_maps"] = int(sum(bool(r["zero_map"]) for r in g))
        out.append(rec)
    return out


def _fmt(v):
    if isinstance(v, float):
        return "nan" if not np.isfinite(v) else f"{v:.6g}"
    return str(v)


def write_summary(path, summary):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_FIELDS)
        for rec in summary:
            w.writerow([_fmt(rec[k]) for k in SUMMARY_FIELDS])
    return Path(path)


# ---- charts -----------------------------------------------------------------------------

def _ticks(lo, hi, n=5):
    if hi == lo:
        return [lo]
    return list(np.linspace(lo, hi, n))


def metric_chart_svg(summary, x_label="alpha", title="", metrics=METRICS, panel_w=260, panel_h=200):
    """Side-by-side panels (one per metric) of mean curves with +-1 std bands."""
    methods = sorted({r["method"] for r in summary})
    margin_l, margin_t, margin_b, gap = 48, 40, 40, 24
    width = margin_l + len(metrics) * (panel_w + gap) + 110
    height = margin_t + panel_h + margin_b
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" viewBox="0 0 {width} {height}">',
        '<rect width="100%" height="100%" fill="white"/>',
    ]
    if title:
        parts.append(f'<text x="{width / 2:.1f}" y="16" text-anchor="middle" font-family="sans-serif" font-size="13">{escape(title)}</text>')
    xs_all = sorted({r["alpha_beta"] for r in summary})
    x_lo, x_hi = (xs_all[0], xs_all[-1]) if xs_all else (0.0, 1.0)
    for p, metric in enumerate(metrics):
        ox = margin_l + p * (panel_w + gap)
        lo_hi = [
            (r[f"{metric}_mean"] - r[f"{metric}_std"], r[f"{metric}_mean"] + r[f"{metric}_std"])
            for r in summary
            if np.isfinite(r[f"{metric}_mean"])
        ]
        y_lo = min([a for a, _ in lo_hi] + [0.0])
        y_hi = max([b for _, b in lo_hi] + [1e-12])

        def sx(v):
            return ox + (panel_w / 2 if x_hi == x_lo else (v - x_lo) / (x_hi - x_lo) * panel_w)

        def sy(v):
            return margin_t + panel_h - (v - y_lo) / (y_hi - y_lo) * panel_h

        parts.append(f'<rect x="{ox}" y="{margin_t}" width="{panel_w}" height="{panel_h}" fill="none" stroke="#444"/>')
        parts.append(f'<text x="{ox + panel_w / 2:.1f}" y="{margin_t - 6}" text-anchor="middle" font-family="sans-serif" font-size="12">{metric.upper()}</text>')
        for t in _ticks(y_lo, y_hi):
            parts.append(f'<text x="{ox - 4}" y="{sy(t) + 4:.1f}" text-anchor="end" font-family="sans-serif" font-size="9">{t:.3g}</text>')
        for t in xs_all:
            parts.append(f'<text x="{sx(t):.1f}" y="{margin_t + panel_h + 14}" text-anchor="middle" font-family="sans-serif" font-size="9">{t:.3g}</text>')
        parts.append(f'<text x="{ox + panel_w / 2:.1f}" y="{margin_t + panel_h + 30}" text-anchor="middle" font-family="sans-serif" font-size="11">{escape(x_label)}</text>')
        for k, method in enumerate(methods):
            color = PALETTE[k % len(PALETTE)]
            pts = sorted((r["alpha_beta"], r[f"{metric}_mean"], r[f"{metric}_std"]) for r in summary if r["method"] == method and np.isfinite(r[f"{metric}_mean"]))
            if not pts:
                continue
            upper = " ".join(f"{sx(x):.2f},{sy(m + s):.2f}" for x, m, s in pts)
            lower = " ".join(f"{sx(x):.2f},{sy(m - s):.2f}" for x, m, s in reversed(pts))
            parts.append(f'<polygon points="{upper} {lower}" fill="{color}" fill-opacity="0.18" stroke="none"/>')
            line = " ".join(f"{sx(x):.2f},{sy(m):.2f}" for x, m, _ in pts)
            parts.append(f'<polyline points="{line}" fill="none" stroke="{color}" stroke-width="1.8"/>')
            for x, m, _ in pts:
                parts.append(f'<circle cx="{sx(x):.2f}" cy="{sy(m):.2f}" r="2.5" fill="{color}"/>')
    lx = margin_l + len(metrics) * (panel_w + gap)
    for k, method in enumerate(methods):
        y = margin_t + 12 + 16 * k
        parts.append(f'<line x1="{lx}" y1="{y - 4}" x2="{lx + 16}" y2="{y - 4}" stroke="{PALETTE[k % len(PALETTE)]}" stroke-width="2"/>')
        parts.append(f'<text x="{lx + 20}" y="{y}" font-family="sans-serif" font-size="10">{escape(method)}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def write_charts(out_dir, summary, x_label="alpha"):
    """One three-panel SVG per (dataset family, scenario, model)."""
    out_dir = Path(out_dir)
    paths = []
    by = defaultdict(list)
    for r in summary:
        by[(r["scenario"], r["model"])].append(r)
    for (scenario, model), recs in sorted(by.items()):
        path = out_dir / f"metrics_{scenario}_{model}.svg"
        path.write_text(metric_chart_svg(recs, x_label, f"{scenario} / {model}"))
        paths.append(path)
    return paths


__all__ = [
    "METRICS",
    "SUMMARY_FIELDS",
    "heatmap_grid",
    "metric_chart_svg",
    "save_heatmap",
    "summarize",
    "to_gray",
    "unit_scale",
    "write_charts",
    "write_summary",
]
