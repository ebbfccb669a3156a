#!/usr/bin/env python3
"""Benchmark the numba kernels against their pure-numpy fallbacks.

Runs the boundary-path dynamic program and the phantom tube/shadow pass on
clinically sized grids with both backends and prints the speedups. The
backends are bit-identical (asserted here for the DP paths), so the env
flag OCT_CASCADE_NO_NUMBA only trades speed.
"""

import time

import numpy as np

from oct_cascade import kernels


def time_fn(fn, repeats=5):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_dp():
    rng = np.random.default_rng(0)
    height, width, n_slices = 496, 384, 16
    costs = [rng.uniform(0, 1, size=(height, width)) for _ in range(n_slices)]
    lo = np.zeros(width, dtype=np.int64)
    hi = np.full(width, height - 1, dtype=np.int64)

    def run_numba():
        return [kernels._dp_suffix_numba(c, lo, hi, 0.5, 2) for c in costs]

    def run_numpy():
        return [kernels._dp_suffix_numpy(c, lo, hi, 0.5, 2) for c in costs]

    if kernels.USING_NUMBA:
        run_numba()  # JIT warmup outside the timer
        t_jit = time_fn(run_numba)
    else:
        t_jit = None
    t_np = time_fn(run_numpy)

    if t_jit is not None:
        paths_jit = [kernels._reconstruct(t, lo, hi, 0.5, 2) for t, _ in run_numba()]
        paths_np = [kernels._reconstruct(t, lo, hi, 0.5, 2) for t, _ in run_numpy()]
        assert all(np.array_equal(a, b) for a, b in zip(paths_jit, paths_np))
    return "boundary DP (16 B-scans, 496x384)", t_jit, t_np


def bench_phantom_pass():
    rng = np.random.default_rng(1)
    n_vessels, n_slices, height, width = 8, 32, 496, 384
    zc = rng.uniform(120, 180, size=(n_vessels, n_slices))
    xc = rng.uniform(20, width - 20, size=(n_vessels, n_slices))

    def make_inputs():
        data = np.full((n_slices, height, width), 0.4)
        vmask = np.zeros(data.shape, dtype=bool)
        return data, vmask

    def run(jit):
        data, vmask = make_inputs()
        raster = kernels._raster_tubes_numba if jit else kernels._raster_tubes_numpy
        shadow = kernels._apply_shadows_numba if jit else kernels._apply_shadows_numpy
        raster(data, vmask, zc, xc, 2.5, 0.7)
        shadow(data, vmask, zc, xc, 2.5, 0.4)
        return data

    if kernels.USING_NUMBA:
        run(True)
        t_jit = time_fn(lambda: run(True))
    else:
        t_jit = None
    t_np = time_fn(lambda: run(False))
    return "tube raster + shadows (8 vessels, 32x496x384)", t_jit, t_np


def main():
    print(f"numba available and enabled: {kernels.USING_NUMBA}")
    print(f"{'kernel':<46} {'numba':>10} {'numpy':>10} {'speedup':>9}")
    for bench in (bench_dp, bench_phantom_pass):
        name, t_jit, t_np = bench()
        jit_s = f"{t_jit * 1e3:.1f} ms" if t_jit is not None else "n/a"
        ratio = f"{t_np / t_jit:.1f}x" if t_jit else "-"
        print(f"{name:<46} {jit_s:>10} {t_np * 1e3:>7.1f} ms {ratio:>9}")


if __name__ == "__main__":
    main()
