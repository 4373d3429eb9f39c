"""Backend equivalence: the compiled kernels must match the NumPy fallback."""
from __future__ import annotations

import numpy as np
import pytest

from ltasim import _kernels_py

compiled = pytest.importorskip(
    "ltasim._kernels", reason="compiled extension not built"
)


def test_backend_tags_differ():
    assert _kernels_py.BACKEND == "python"
    assert compiled.BACKEND == "cython"


def test_spectral_accumulate_matches():
    rng = np.random.default_rng(1)
    for _ in range(20):
        n = int(rng.integers(1, 200))
        times = rng.uniform(0, 1e6, n)
        states = rng.integers(0, 2, n).astype(np.float64)
        omegas = 2 * np.pi / rng.uniform(3600, 7 * 86400, 8)
        sums_a = np.zeros((2, 8), dtype=np.complex128)
        sums_b = sums_a.copy()
        na, ta = _kernels_py.spectral_accumulate(times, states, omegas, sums_a)
        nb, tb = compiled.spectral_accumulate(times, states, omegas, sums_b)
        assert na == nb == n
        assert ta == pytest.approx(tb, abs=0)
        np.testing.assert_allclose(sums_a, sums_b, rtol=0, atol=1e-9)


def test_reconstruct_matches():
    rng = np.random.default_rng(2)
    for _ in range(20):
        times = rng.uniform(0, 1e6, int(rng.integers(1, 300)))
        k = int(rng.integers(0, 4))
        omegas = 2 * np.pi / rng.uniform(3600, 7 * 86400, k)
        gammas = rng.normal(size=k) + 1j * rng.normal(size=k)
        mu = rng.uniform(0, 1)
        a = _kernels_py.reconstruct(times, mu, omegas, gammas)
        b = compiled.reconstruct(times, mu, omegas, gammas)
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-9)


def test_value_iteration_matches():
    rng = np.random.default_rng(3)
    for _ in range(20):
        n = int(rng.integers(2, 6))
        m = int(rng.integers(1, 9))
        src = rng.integers(0, n, m)
        tgt = rng.integers(0, n, m)
        p = rng.uniform(0.05, 1.0, m)
        d = rng.uniform(1, 60, m)
        r = rng.uniform(1, 120, m)
        kappa = rng.uniform(0.0, 0.3, m)
        goal = int(rng.integers(0, n))
        args = (n, src, tgt, p, d, r, kappa, 1e4, goal, 1e-9, 10_000)
        va, sa, ra = _kernels_py.value_iteration(*args)
        vb, sb, rb = compiled.value_iteration(*args)
        assert sa == sb
        np.testing.assert_allclose(va, vb, rtol=0, atol=1e-9)
        assert ra == pytest.approx(rb, abs=1e-12)
