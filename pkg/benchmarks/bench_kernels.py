"""Time the hot numeric kernels: compiled extension vs NumPy fallback.

Run from the repository root:

    python3 benchmarks/bench_kernels.py [--repeats N] [--scale X]

Both implementations share signatures and semantics (the test suite runs
against either via LTASIM_PURE=1); this script only reports speed.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from ltasim import _kernels_py

try:
    from ltasim import _kernels
except ImportError:
    _kernels = None


def best_of(fn, repeats):
    timings = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        timings.append(time.perf_counter() - t0)
    return min(timings)


def spectral_case(scale):
    rng = np.random.default_rng(1)
    n = int(200_000 * scale)
    times = np.sort(rng.uniform(0, 3.0e6, n))
    states = rng.integers(0, 2, n).astype(np.float64)
    omegas = 2 * np.pi / (3600.0 * np.array(
        [1, 2, 3, 4, 6, 8, 12, 24, 48, 72, 96, 120, 144, 168]))

    def run(impl):
        sums = np.zeros((2, omegas.size), dtype=np.complex128)
        impl.spectral_accumulate(times, states, omegas, sums)
        return sums

    return "spectral_accumulate", run, f"{n} obs x {omegas.size} periods"


def reconstruct_case(scale):
    rng = np.random.default_rng(2)
    n = int(500_000 * scale)
    times = rng.uniform(0, 3.0e6, n)
    omegas = 2 * np.pi / (3600.0 * np.array([6.0, 12.0, 24.0, 168.0]))
    gammas = rng.normal(0, 0.2, 4) + 1j * rng.normal(0, 0.2, 4)

    def run(impl):
        return impl.reconstruct(times, 0.5, omegas, gammas)

    return "reconstruct", run, f"{n} times x {omegas.size} components"


def value_iteration_case(scale):
    rng = np.random.default_rng(3)
    n = int(400 * scale)
    m = 4 * n
    src = rng.integers(0, n, m)
    tgt = (src + rng.integers(1, n, m)) % n
    p = rng.uniform(0.2, 0.99, m)
    d = rng.uniform(1, 60, m)
    r = rng.uniform(1, 120, m)
    kappa = rng.uniform(0.01, 0.2, m)

    def run(impl):
        return impl.value_iteration(n, src, tgt, p, d, r, kappa, 1e4,
                                    0, 1e-6, 10_000)

    return "value_iteration", run, f"{n} nodes, {m} edges"


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=5,
                        help="take the best of this many runs (default 5)")
    parser.add_argument("--scale", type=float, default=1.0,
                        help="multiply workload sizes (default 1.0)")
    args = parser.parse_args()

    if _kernels is None:
        print("compiled extension not importable; timing the fallback only")

    print(f"{'kernel':<22} {'workload':<28} {'python':>10} "
          f"{'compiled':>10} {'speedup':>8}")
    for case in (spectral_case, reconstruct_case, value_iteration_case):
        name, run, workload = case(args.scale)
        t_py = best_of(lambda: run(_kernels_py), args.repeats)
        if _kernels is not None:
            t_cy = best_of(lambda: run(_kernels), args.repeats)
            speedup = f"{t_py / t_cy:7.2f}x"
            t_cy_text = f"{t_cy * 1e3:8.2f}ms"
        else:
            speedup, t_cy_text = "      --", "        --"
        print(f"{name:<22} {workload:<28} {t_py * 1e3:8.2f}ms "
              f"{t_cy_text} {speedup}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
