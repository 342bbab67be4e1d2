"""Single-threaded CPU latency microbenchmark for trained bundles.

Measures wall time per forward pass of one crop batch with
``time.perf_counter_ns``, after a warmup phase. The input tensor is seeded
and fixed, and the output checksum is reported so two runs of the same
bundle on the same backend can be checked for numerical agreement. Latency
statistics are medians/percentiles over per-iteration samples; the
``low_confidence`` flag is set when the median is within 100x of the
clock's measured resolution.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .anomaly import model_from_bundle
from .arch import ModelBundle
from .nn import kernels


@dataclass(frozen=True)
class BenchConfig:
    """Benchmark controls.

    ``batch`` is the number of crops per forward pass (1 mimics streaming
    inference). The input tensor is drawn once from ``input_seed`` and held
    fixed across iterations; latency does not depend on its values.
    """

    warmup_iters: int = 200
    measure_iters: int = 1000
    batch: int = 1
    input_seed: int = 0

    def __post_init__(self):
        if self.warmup_iters < 0:
            raise ValueError(f"warmup_iters must be >= 0, got {self.warmup_iters}")
        if self.measure_iters < 1:
            raise ValueError(f"measure_iters must be >= 1, got {self.measure_iters}")
        if self.batch < 1:
            raise ValueError(f"batch must be >= 1, got {self.batch}")


@dataclass(frozen=True)
class BenchResult:
    """Latency summary for one (bundle, backend) pair. Times in microseconds."""

    arch_name: str
    backend: str
    batch: int
    iters: int
    median_us: float
    mean_us: float
    p95_us: float
    min_us: float
    checksum: float
    low_confidence: bool


def _clock_resolution_ns() -> int:
    """Smallest positive observed delta of perf_counter_ns over a few probes."""
    best = None
    for _ in range(64):
        a = time.perf_counter_ns()
        b = time.perf_counter_ns()
        delta = b - a
        if delta > 0 and (best is None or delta < best):
            best = delta
    return best if best is not None else 1


def run_bench(
    bundle: ModelBundle,
    cfg: BenchConfig = BenchConfig(),
    backend: str | None = None,
) -> BenchResult:
    """Measure forward-pass latency of a bundle on one kernel backend.

    The active backend is restored afterwards when ``backend`` overrides it.
    """
    previous = kernels.active_backend()
    if backend is not None:
        kernels.set_backend(backend)
    try:
        model = model_from_bundle(bundle)
        rng = np.random.default_rng(cfg.input_seed)
        x = rng.random((cfg.batch, *bundle.arch.input_shape), dtype=np.float32)

        for _ in range(cfg.warmup_iters):
            out = model.forward(x, training=False)

        samples_ns = np.empty(cfg.measure_iters, dtype=np.int64)
        for i in range(cfg.measure_iters):
            t0 = time.perf_counter_ns()
            out = model.forward(x, training=False)
            samples_ns[i] = time.perf_counter_ns() - t0
        checksum = float(np.sum(out, dtype=np.float64))
    finally:
        kernels.set_backend(previous)

    samples_us = samples_ns.astype(np.float64) / 1000.0
    median_us = float(np.median(samples_us))
    resolution_us = _clock_resolution_ns() / 1000.0
    return BenchResult(
        arch_name=bundle.arch.name,
        backend=backend if backend is not None else previous,
        batch=cfg.batch,
        iters=cfg.measure_iters,
        median_us=median_us,
        mean_us=float(samples_us.mean()),
        p95_us=float(np.percentile(samples_us, 95)),
        min_us=float(samples_us.min()),
        checksum=checksum,
        low_confidence=median_us < 100.0 * resolution_us,
    )


def write_bench_csv(results: list[BenchResult], path) -> None:
    """One CSV row per benchmark result."""
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["arch", "backend", "batch", "iters", "median_us", "mean_us",
             "p95_us", "min_us", "checksum", "low_confidence"]
        )
        for r in results:
            writer.writerow(
                [r.arch_name, r.backend, r.batch, r.iters, f"{r.median_us:.3f}",
                 f"{r.mean_us:.3f}", f"{r.p95_us:.3f}", f"{r.min_us:.3f}",
                 f"{r.checksum:.9g}", int(r.low_confidence)]
            )
    tmp.replace(path)
