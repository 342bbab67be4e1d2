#!/usr/bin/env python3
"""Compare the compiled and pure-Python kernel backends.

Measures, for a few template networks:
  * single-crop forward latency (the deployment path), via the
    microbenchmark harness;
  * one full training step (forward + backward + optimizer update) on a
    synthetic batch, timed directly.

Also cross-checks that both backends produce numerically matching forward
outputs before timing anything. Run from the repository root:

    python3 benchmarks/compare_backends.py [--iters N] [--batch N]
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from outliernets import count_flops, count_macs, count_params, make_template
from outliernets.arch import ModelBundle
from outliernets.bench import BenchConfig, run_bench
from outliernets.nn import Adam, Sequential, kernels
from outliernets.nn.loss import mse

CONFIGS = [
    ("fan_conv", 0.5, 2, None),
    ("fan_conv", 1.0, 2, None),
    ("fan_conv", 2.0, 3, None),
    ("slider_dense_bottleneck", 0.5, 3, 16),
]


def build_bundle(family, mult, depth, bottleneck, seed=0):
    spec = make_template(family, mult, depth, bottleneck_dim=bottleneck)
    rng = np.random.default_rng(seed)
    weights = rng.normal(0.0, 0.1, count_params(spec)).astype(np.float32)
    return ModelBundle(arch=spec, weights=weights, norm_stats=(-1.0, 1.0))


def check_parity(bundle, rtol=1e-4):
    """Max relative forward disagreement between the two backends."""
    from outliernets.anomaly import model_from_bundle

    x = np.random.default_rng(1).random(
        (2, *bundle.arch.input_shape), dtype=np.float32
    )
    outs = {}
    for backend in kernels.available_backends():
        kernels.set_backend(backend)
        outs[backend] = model_from_bundle(bundle).forward(x, training=False)
    if len(outs) < 2:
        return 0.0
    a, b = outs.values()
    denom = np.maximum(np.abs(b), 1e-6)
    worst = float(np.max(np.abs(a - b) / denom))
    if worst > rtol:
        raise SystemExit(f"backend outputs disagree (rel {worst:.2e})")
    return worst


def time_train_step(spec, backend, batch, iters, seed=0):
    """Median seconds for one forward+backward+Adam step."""
    kernels.set_backend(backend)
    model = Sequential(spec.layers, spec.input_shape)
    model.init(seed)
    opt = Adam(model.params())
    x = np.random.default_rng(seed).random(
        (batch, *spec.input_shape), dtype=np.float32
    )
    times = []
    for i in range(iters + 2):
        t0 = time.perf_counter()
        out = model.forward(x, training=True)
        _, grad = mse(out, x)
        model.backward(grad)
        opt.step()
        if i >= 2:  # first steps include allocation warmup
            times.append(time.perf_counter() - t0)
    return float(np.median(times))


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--iters", type=int, default=300,
                        help="forward-pass measurement iterations")
    parser.add_argument("--train-iters", type=int, default=10,
                        help="training-step measurement iterations")
    parser.add_argument("--batch", type=int, default=64,
                        help="training batch size")
    args = parser.parse_args()

    backends = kernels.available_backends()
    previous = kernels.active_backend()
    print(f"backends: {', '.join(backends)}\n")
    header = (
        f"{'architecture':<28} {'params':>7} {'kMACs':>7} "
        + " ".join(f"{b + ' fwd us':>14}" for b in backends)
        + " " + " ".join(f"{b + ' step ms':>15}" for b in backends)
        + f" {'speedup':>8}"
    )
    print(header)
    print("-" * len(header))

    try:
        for family, mult, depth, bottleneck in CONFIGS:
            bundle = build_bundle(family, mult, depth, bottleneck)
            spec = bundle.arch
            check_parity(bundle)

            fwd_us = {}
            cfg = BenchConfig(warmup_iters=50, measure_iters=args.iters)
            for backend in backends:
                fwd_us[backend] = run_bench(bundle, cfg, backend=backend).median_us

            step_ms = {}
            for backend in backends:
                step_ms[backend] = 1e3 * time_train_step(
                    spec, backend, args.batch, args.train_iters
                )

            if len(backends) == 2:
                first, second = backends
                speedup = fwd_us[second] / fwd_us[first]
                speed_txt = f"{speedup:7.1f}x"
            else:
                speed_txt = "     n/a"
            print(
                f"{spec.name:<28} {count_params(spec):>7} "
                f"{count_macs(spec) / 1e3:>7.0f} "
                + " ".join(f"{fwd_us[b]:>14.1f}" for b in backends)
                + " " + " ".join(f"{step_ms[b]:>15.2f}" for b in backends)
                + f" {speed_txt}"
            )
    finally:
        kernels.set_backend(previous)

    print(
        "\nfwd = median single-crop forward latency; "
        "step = median full training step "
        f"(batch {args.batch}); speedup = {backends[-1]} / {backends[0]} forward."
    )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
