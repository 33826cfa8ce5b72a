import importlib.util
from pathlib import Path

import pytest

from patternlocal import kernels

BENCH = Path(__file__).resolve().parents[1] / "benchmarks" / "bench_kernels.py"


@pytest.mark.skipif(kernels.compiled is None, reason="compiled extension not built")
def test_benchmark_backends_agree(capsys):
    spec = importlib.util.spec_from_file_location("bench_kernels", BENCH)
    bench = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(bench)
    rows = bench.run(repeat=1, seed=1)
    assert len(rows) == len(bench.CASES)
    assert all(agree for *_, agree in rows)
    bench.main(["--repeat", "1"])
    assert "speedup" in capsys.readouterr().out
