"""numba vs pure-numpy timings for the three hot kernels.

    python benchmarks/bench_kernels.py [--repeat N]

The numba variants are called once before timing so compile cost is
excluded (it is reported separately).
"""
import argparse
import time

import numpy as np

from qfcsim import _accel, kernels
from qfcsim.filters import FilterElement


def timeit(f, repeat):
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        f()
        best = min(best, time.perf_counter() - t)
    return best


def cases():
    rng = np.random.default_rng(0)
    # dead time: 2e6 clicks at ~200 kcps, tau = 20 us
    ts = np.cumsum(rng.exponential(5e6, 2_000_000)).astype(np.int64)
    yield "dead_time 2e6 events", (lambda: kernels.dead_time_keep_nb(ts, 20_000_000)), \
        (lambda: kernels.dead_time_keep_np(ts, 20_000_000))

    # LM: 1000 Monte Carlo datasets of 10 points
    p = np.linspace(0.02, 0.2, 10)
    y0 = 0.95 * np.sin(2.7 * np.sqrt(0.54 * p)) ** 2
    s = np.broadcast_to(0.01 * y0, (1000, 10)).copy()
    y = y0 + s * rng.standard_normal((1000, 10))
    p0 = np.tile([0.54, 0.95], (1000, 1))
    yield "lm_sin2 1000 fits", (lambda: kernels.lm_sin2_nb(p, y, s, 2.7, p0, 200, 1e-12)), \
        (lambda: kernels.lm_sin2_np(p, y, s, 2.7, p0, 200, 1e-12))

    # lock loop: 60 s at 1 kHz
    cav = FilterElement("FabryPerot", 12.5e6, finesse=100.0)
    n = 60_001
    normals = rng.standard_normal(n)
    args = (n, 1e-3, 30.0, 0.5, 0.0, 1.25e6, 0.4e6, normals, 0.0, 1.25e6, 0, 0.0, 0.0, cav.fsr_hz,
            cav.airy_coefficient, 1.0, 0.0)
    yield "lock_loop 60 s", (lambda: kernels.lock_loop_nb(*args)), (lambda: kernels.lock_loop_np(*args))


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    a = ap.parse_args()
    if not _accel.NUMBA_AVAILABLE:
        print("numba not installed; the _nb kernels are the plain Python functions")
    print(f"{'kernel':<24}{'compile s':>11}{'numba s':>11}{'numpy s':>11}{'speedup':>9}")
    for name, nb, npf in cases():
        t = time.perf_counter()
        nb()
        compile_s = time.perf_counter() - t
        t_nb = timeit(nb, a.repeat)
        t_np = timeit(npf, a.repeat)
        print(f"{name:<24}{compile_s:>11.3f}{t_nb:>11.4f}{t_np:>11.4f}{t_np / t_nb:>9.1f}")


if __name__ == "__main__":
    main()
