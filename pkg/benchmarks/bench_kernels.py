#!/usr/bin/env python3
"""Benchmark: numba kernels against the numpy fallbacks.

Times the indicator sum (2D plane 200^2 x 64 sensors, 3D box 80^3 x 100
sensors), ball carving and the forward synthesis under both backends, then
the numba indicator at increasing thread counts.

Usage:
    python3 benchmarks/bench_kernels.py [--repeat N] [--threads 1 2 4 8] [--quick]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from wavesrc import _accel, kernels
from wavesrc.arrays import ArraySpec, generate
from wavesrc.reconstruct import SamplingGrid
from wavesrc.signal import Signal, TimeGrid


def best_of(fn, repeat):
    fn()  # warm-up (jit compile, caches)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(quick):
    rng = np.random.default_rng(0)
    n2, n3 = (100, 40) if quick else (200, 80)
    plane = SamplingGrid.plane((-2, -2), (2, 2), n2).points()
    circ = generate(ArraySpec("circle", 64, radius=3.5)).positions
    box = SamplingGrid.box((-4, -4, -4), (4, 4, 4), n3).points()
    fib = generate(ArraySpec("fibonacci", 100, radius=5.0)).positions
    r2 = np.linalg.norm(circ, axis=1) - 1 + rng.uniform(0, 0.1, len(circ))
    r3 = np.linalg.norm(fib, axis=1) - 1 + rng.uniform(0, 0.1, len(fib))

    sig = Signal.standard_pulse()
    grid = TimeGrid(15.0, 8192 if quick else 32768)
    dist = rng.uniform(1.5, 8, (64, 50))
    amp = rng.uniform(0.1, 1, (64, 50))
    fargs = (dist, amp, grid.times, 1.0, sig.onset, *sig.kernel_args())

    return {
        f"indicator 2D {n2}^2 x 64": lambda b: kernels.indicator_sum(plane, circ, r2, kernels.KERNEL_ABS, 1e6, b),
        f"indicator 3D {n3}^3 x 100": lambda b: kernels.indicator_sum(box, fib, r3, kernels.KERNEL_ABS, 1e6, b),
        f"carve 3D {n3}^3 x 100": lambda b: kernels.carve_mask(box, fib, r3, 0.15, b),
        f"forward 64 x 50 x {grid.steps}": lambda b: kernels.forward_sum(*fargs, backend=b),
    }, (box, fib, r3)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--threads", type=int, nargs="+", default=[1, 2, 4, 8])
    ap.add_argument("--quick", action="store_true", help="smaller problem sizes")
    args = ap.parse_args(argv)

    if not _accel.HAVE_NUMBA:
        raise SystemExit("numba is unavailable (or WAVESRC_NUMBA=0); nothing to compare")
    limit = _accel.numba.config.NUMBA_NUM_THREADS
    print(f"numba threads available: {limit}")

    table, (box, fib, r3) = cases(args.quick)
    _accel.set_threads(1)
    print(f"\n{'case':34s} {'numpy [s]':>10s} {'numba [s]':>10s} {'ratio':>7s}   (1 thread)")
    for name, fn in table.items():
        t_np = best_of(lambda: fn("numpy"), args.repeat)
        t_nb = best_of(lambda: fn("numba"), args.repeat)
        print(f"{name:34s} {t_np:10.4f} {t_nb:10.4f} {t_np / t_nb:7.2f}")

    print(f"\n{'threads':>7s} {'indicator 3D [s]':>17s} {'speedup':>8s}")
    base = None
    for n in args.threads:
        used = _accel.set_threads(n)
        t = best_of(lambda: kernels.indicator_sum(box, fib, r3, kernels.KERNEL_ABS, 1e6, "numba"), args.repeat)
        base = base or t
        note = "" if used == n else f"  (capped at {used})"
        print(f"{n:7d} {t:17.4f} {base / t:8.2f}{note}")
    _accel.set_threads(None)


if __name__ == "__main__":
    main()
