#!/usr/bin/env python3
"""Benchmark the numba-jitted kernels against the pure-numpy fallback.

Run directly: `python3 benchmarks/bench_kernels.py`. Setting
SDCPS_NO_NUMBA=1 makes the package-level bindings fall back to numpy; this
script times both implementations explicitly regardless of the flag.
"""

import time

import numpy as np

from sdcps import kernels
from sdcps.kernels import graph_to_csr


def ring_csr(n):
    adj = {i: {(i - 1) % n: 1.0, (i + 1) % n: 1.0} for i in range(n)}
    idx, ptr, _ = graph_to_csr(adj)
    return idx, ptr


def timeit(fn, *args, repeat=5):
    fn(*args)  # warm-up (numba compiles here)
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    print(f"numba available: {kernels.HAS_NUMBA}")
    rng = np.random.default_rng(0)

    n, steps = 512, 2000
    idx, ptr = ring_csr(n)
    x0 = rng.normal(size=n)

    rows = []
    rows.append(("consensus_rollout",
                 timeit(kernels.consensus_rollout_numpy, x0, idx, ptr, 0.2, steps),
                 timeit(kernels.consensus_rollout_numba, x0, idx, ptr, 0.2, steps)
                 if kernels.HAS_NUMBA else None))
    rows.append(("sync_offsets",
                 timeit(kernels.sync_offsets_numpy, x0, idx, ptr, 0.5, steps),
                 timeit(kernels.sync_offsets_numba, x0, idx, ptr, 0.5, steps)
                 if kernels.HAS_NUMBA else None))

    A = np.array([[0.9, 0.1], [0.0, 0.8]])
    B = np.eye(2)
    K = 0.1 * np.eye(2)
    x = np.array([1.0, -1.0])
    rows.append(("closed_loop_norms",
                 timeit(kernels.closed_loop_norms_numpy, A, B, K, x, 200_000),
                 timeit(kernels.closed_loop_norms_numba, A, B, K, x, 200_000)
                 if kernels.HAS_NUMBA else None))

    print(f"{'kernel':<20}{'numpy (s)':>12}{'numba (s)':>12}{'speedup':>10}")
    for name, t_np, t_nb in rows:
        if t_nb is None:
            print(f"{name:<20}{t_np:>12.4f}{'n/a':>12}{'n/a':>10}")
        else:
            print(f"{name:<20}{t_np:>12.4f}{t_nb:>12.4f}{t_np / t_nb:>9.1f}x")


if __name__ == "__main__":
    main()
