"""Time the compiled kernels against the pure-Python fallback.

Usage::

    python benchmarks/bench_kernels.py [--repeat 5]

Each kernel is run on identical inputs with both backends; results are
checked for agreement before timings are reported.
"""
import argparse
import time

import numpy as np

from patternlocal import kernels


def _emd_case(side, rng):
    n = side * side
    yy, xx = np.divmod(np.arange(n), side)
    cost = np.hypot(yy[:, None] - yy[None, :], xx[:, None] - xx[None, :])
    a = rng.random(n)
    b = rng.random(n)
    scale = kernels.MASS_SCALE
    a = np.floor(a / a.sum() * scale).astype(np.int64)
    b = np.floor(b / b.sum() * scale).astype(np.int64)
    a[0] += scale - a.sum()
    b[0] += scale - b.sum()
    return (a, b, cost)


def _lasso_case(d, rng):
    X = rng.standard_normal((4 * d, d))
    y = X[:, : d // 4].sum(axis=1) + 0.1 * rng.standard_normal(4 * d)
    return (X.T @ X / len(X), X.T @ y / len(X), 0.05, np.zeros(d), 1e-10, 10000)


def _slic_case(side, rng):
    image = rng.random((side, side))
    step = side / 8
    g = (np.arange(8) + 0.5) * step
    cy, cx = np.meshgrid(g, g, indexing="ij")
    centers = np.column_stack([np.full(64, 0.5), cy.ravel(), cx.ravel()])
    return (image, centers, step, 10.0)


CASES = {
    "transport_simplex (8x8 EMD)": ("transport_simplex", lambda rng: _emd_case(8, rng)),
    "transport_simplex (16x16 EMD)": ("transport_simplex", lambda rng: _emd_case(16, rng)),
    "lasso_cd_gram (d=64)": ("lasso_cd_gram", lambda rng: _lasso_case(64, rng)),
    "lasso_cd_gram (d=256)": ("lasso_cd_gram", lambda rng: _lasso_case(256, rng)),
    "slic_assign (64x64)": ("slic_assign", lambda rng: _slic_case(64, rng)),
}


def _copy(args):
    return tuple(a.copy() if isinstance(a, np.ndarray) else a for a in args)


def _time(fn, args, repeat):
    best = np.inf
    out = None
    for _ in range(repeat):
        call = _copy(args)
        t0 = time.perf_counter()
        out = fn(*call)
        best = min(best, time.perf_counter() - t0)
    return best, out


def _first(out):
    return np.asarray(out[0] if isinstance(out, tuple) else out, dtype=np.float64)


def run(repeat=5, seed=0):
    if kernels.compiled is None:
        raise SystemExit("compiled extension not available; build with `pip install -e . --no-build-isolation`")
    rows = []
    for label, (name, make) in CASES.items():
        args = make(np.random.default_rng(seed))
        t_py, out_py = _time(getattr(kernels.python, name), args, repeat)
        t_c, out_c = _time(getattr(kernels.compiled, name), args, repeat)
        agree = np.allclose(_first(out_py), _first(out_c), rtol=1e-6, atol=1e-9)
        rows.append((label, t_py, t_c, agree))
    return rows


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    rows = run(args.repeat, args.seed)
    print(f"{'kernel':34s} {'python [ms]':>12s} {'compiled [ms]':>14s} {'speedup':>8s}  agree")
    for label, t_py, t_c, agree in rows:
        print(f"{label:34s} {1e3 * t_py:12.2f} {1e3 * t_c:14.3f} {t_py / t_c:8.1f}x  {agree}")


if __name__ == "__main__":
    main()
