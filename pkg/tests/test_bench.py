"""Latency microbenchmark: statistics, reproducibility, and cost scaling."""
from __future__ import annotations

import math

import numpy as np
import pytest

from outliernets import count_flops, make_template
from outliernets.arch import ModelBundle, count_params
from outliernets.bench import BenchConfig, BenchResult, run_bench, write_bench_csv
from outliernets.nn import kernels

FAST = BenchConfig(warmup_iters=5, measure_iters=40)


def _bundle(family="fan_conv", mult=0.25, depth=2, **kwargs):
    spec = make_template(family, mult, depth, **kwargs)
    rng = np.random.default_rng(7)
    weights = rng.normal(0, 0.1, count_params(spec)).astype(np.float32)
    return ModelBundle(arch=spec, weights=weights, norm_stats=(-5.0, 4.0))


def test_config_validation():
    with pytest.raises(ValueError):
        BenchConfig(warmup_iters=-1)
    with pytest.raises(ValueError):
        BenchConfig(measure_iters=0)
    with pytest.raises(ValueError):
        BenchConfig(batch=0)


def test_result_statistics_are_ordered():
    bundle = _bundle()
    res = run_bench(bundle, FAST)
    assert res.arch_name == bundle.arch.name
    assert res.backend in kernels.available_backends()
    assert res.batch == 1
    assert res.iters == 40
    assert 0.0 < res.min_us <= res.median_us <= res.p95_us
    assert res.min_us <= res.mean_us
    assert math.isfinite(res.checksum)
    assert isinstance(res.low_confidence, bool)


def test_checksum_reproducible_per_backend():
    bundle = _bundle()
    for backend in kernels.available_backends():
        a = run_bench(bundle, FAST, backend=backend)
        b = run_bench(bundle, FAST, backend=backend)
        assert a.checksum == b.checksum
        assert a.backend == backend


def test_backend_override_restores_active_backend():
    bundle = _bundle()
    before = kernels.active_backend()
    for backend in kernels.available_backends():
        run_bench(bundle, FAST, backend=backend)
        assert kernels.active_backend() == before


def test_median_roughly_stable_across_runs():
    bundle = _bundle()
    cfg = BenchConfig(warmup_iters=20, measure_iters=120)
    medians = [run_bench(bundle, cfg).median_us for _ in range(3)]
    assert all(m > 0 for m in medians)
    # Very loose bound: same workload, same machine, microseconds apart.
    assert max(medians) <= 25.0 * min(medians)


def test_batch_size_scales_work():
    bundle = _bundle()
    single = run_bench(bundle, BenchConfig(warmup_iters=10, measure_iters=60))
    batched = run_bench(
        bundle, BenchConfig(warmup_iters=10, measure_iters=60, batch=8)
    )
    assert batched.batch == 8
    assert batched.median_us > single.median_us


def test_larger_flop_budget_costs_more_time():
    """A model with >10x the FLOPs must have a strictly larger median latency."""
    small = _bundle("fan_conv", 0.25, 2)
    big = _bundle("fan_conv", 2.0, 3)
    ratio = count_flops(big.arch) / count_flops(small.arch)
    assert ratio > 10.0
    cfg = BenchConfig(warmup_iters=20, measure_iters=150)
    res_small = run_bench(small, cfg)
    res_big = run_bench(big, cfg)
    assert res_big.median_us > res_small.median_us


def test_write_bench_csv_schema_and_determinism(tmp_path):
    bundle = _bundle()
    res = run_bench(bundle, FAST)
    fake = BenchResult(
        arch_name="x", backend="python", batch=1, iters=10, median_us=1.5,
        mean_us=1.6, p95_us=2.0, min_us=1.2, checksum=3.25, low_confidence=True,
    )
    pa, pb = tmp_path / "a.csv", tmp_path / "b.csv"
    write_bench_csv([res, fake], pa)
    write_bench_csv([res, fake], pb)
    assert pa.read_bytes() == pb.read_bytes()
    lines = pa.read_text().splitlines()
    assert lines[0].split(",") == [
        "arch", "backend", "batch", "iters", "median_us", "mean_us",
        "p95_us", "min_us", "checksum", "low_confidence",
    ]
    assert len(lines) == 3
    row = lines[2].split(",")
    assert row[0] == "x"
    assert row[-1] == "1"  # low_confidence flag serialized as 0/1
    assert float(row[4]) == pytest.approx(1.5)
