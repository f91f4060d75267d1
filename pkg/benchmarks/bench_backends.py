"""Timing comparison of the numba and pure-numpy kernel backends.

Run twice to compare:

    LANDAU_NUMBA=1 python benchmarks/bench_backends.py
    LANDAU_NUMBA=0 python benchmarks/bench_backends.py

The hot paths measured here are the ones inner to every operator apply:
symmetric-tensor contraction, the anisotropic gradient combine, weighted
reductions, and a full linearized-operator application at N = 32.
"""

import time

import numpy as np

from landaulab import accel
from landaulab.grid import build_grid
from landaulab.operators import landau_context


def timeit(label, fn, repeat=20):
    fn()  # warm-up / jit compile
    t0 = time.perf_counter()
    for _ in range(repeat):
        fn()
    dt = (time.perf_counter() - t0) / repeat
    print(f"{label:38s} {dt * 1e3:9.3f} ms")
    return dt


def main():
    backend = "numba" if accel.using_numba() else "numpy"
    print(f"backend: {backend} (threads: {accel.thread_count()})")

    n = 48 ** 3
    rng = np.random.default_rng(0)
    a6 = rng.standard_normal((6, n))
    h6 = rng.standard_normal((6, n))
    g3 = tuple(rng.standard_normal(n) for _ in range(3))
    v3 = tuple(rng.standard_normal(n) * 3.0 for _ in range(3))
    r2 = sum(v * v for v in v3)
    hv = np.sqrt(1.0 + r2)
    w = rng.uniform(0.5, 2.0, n)

    timeit("sym_contract (48^3)", lambda: accel.sym_contract(a6, h6))
    timeit("sym_quadform (48^3)", lambda: accel.sym_quadform(a6, g3))
    timeit("aniso_combine (48^3)",
           lambda: accel.aniso_combine(*v3, r2, hv, g3))
    timeit("weighted_sumsq (48^3)", lambda: accel.weighted_sumsq(w, h6[0]))
    timeit("weighted_dot3 (48^3)", lambda: accel.weighted_dot3(w, g3, g3))

    grid = build_grid(8.0, 32)
    ctx = landau_context(grid, -3.0)
    f = np.sin(grid.vx) * grid.mu
    timeit("apply_B (N=32)", lambda: ctx.apply_B0(f), repeat=10)
    timeit("apply_L (N=32)", lambda: ctx.apply_L(f), repeat=10)


if __name__ == "__main__":
    main()
