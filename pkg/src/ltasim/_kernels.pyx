# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled numeric kernels: spectral accumulation, reconstruction, and
value-iteration sweeps. Mirrors ltasim._kernels_py; ltasim.kernels selects
whichever is available."""

import numpy as np

cimport numpy as cnp
from libc.math cimport cos, sin, fabs, INFINITY

cnp.import_array()

BACKEND = "cython"


def spectral_accumulate(times, states, omegas, sums):
    """Fold a batch of binary observations into running spectral sums.

    ``sums`` is a complex128 array of shape (2, n_omega), updated in place.
    Returns ``(n_added, state_total)``.
    """
    cdef double[::1] t = np.ascontiguousarray(times, dtype=np.float64)
    cdef double[::1] s = np.ascontiguousarray(states, dtype=np.float64)
    cdef double[::1] w = np.ascontiguousarray(omegas, dtype=np.float64)
    if t.shape[0] != s.shape[0]:
        raise ValueError("times and states must have identical shapes")
    cdef double complex[:, ::1] acc = sums
    cdef Py_ssize_t i, j, n = t.shape[0], m = w.shape[0]
    cdef double total = 0.0, ph
    cdef double complex e
    for i in range(n):
        total += s[i]
        for j in range(m):
            ph = -w[j] * t[i]
            e = cos(ph) + 1j * sin(ph)
            acc[0, j] = acc[0, j] + e * s[i]
            acc[1, j] = acc[1, j] + e
    return n, total


def reconstruct(times, mu, omegas, amplitudes):
    """Evaluate mu + sum_j 2*Re(gamma_j * exp(1j*w_j*t)) without clamping."""
    cdef double[::1] t = np.ascontiguousarray(times, dtype=np.float64)
    cdef double[::1] w = np.ascontiguousarray(omegas, dtype=np.float64)
    cdef double complex[::1] g = np.ascontiguousarray(amplitudes, dtype=np.complex128)
    cdef Py_ssize_t i, j, n = t.shape[0], m = w.shape[0]
    out_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef double acc, ph, base = mu
    cdef double complex e
    for i in range(n):
        acc = base
        for j in range(m):
            ph = w[j] * t[i]
            e = cos(ph) + 1j * sin(ph)
            acc += 2.0 * (g[j] * e).real
        out[i] = acc
    return out_arr


def value_iteration(Py_ssize_t n_states, edge_src, edge_tgt, p, d, r, kappa,
                    double c_fatal, Py_ssize_t goal, double tol,
                    Py_ssize_t max_sweeps):
    """Synchronous value iteration with per-action self-loop solving.

    Semantics match ltasim._kernels_py.value_iteration. Returns
    ``(V, sweeps, residual)``.
    """
    cdef cnp.int64_t[::1] src = np.ascontiguousarray(edge_src, dtype=np.int64)
    cdef cnp.int64_t[::1] tgt = np.ascontiguousarray(edge_tgt, dtype=np.int64)
    cdef double[::1] pe = np.ascontiguousarray(p, dtype=np.float64)
    cdef double[::1] de = np.ascontiguousarray(d, dtype=np.float64)
    cdef double[::1] re = np.ascontiguousarray(r, dtype=np.float64)
    cdef double[::1] ke = np.ascontiguousarray(kappa, dtype=np.float64)
    cdef Py_ssize_t n_edges = src.shape[0]

    cost_arr = np.empty(n_edges, dtype=np.float64)
    denom_arr = np.empty(n_edges, dtype=np.float64)
    cdef double[::1] cost = cost_arr
    cdef double[::1] denom = denom_arr
    cdef Py_ssize_t e, i
    cdef double q_stay, q_fatal
    for e in range(n_edges):
        q_stay = (1.0 - pe[e]) * (1.0 - ke[e])
        q_fatal = (1.0 - pe[e]) * ke[e]
        cost[e] = pe[e] * de[e] + q_stay * re[e] + q_fatal * c_fatal
        denom[e] = pe[e] + q_fatal
        if denom[e] <= 0.0:
            raise ValueError(
                "action with zero progress probability and zero fatal mass")

    v_arr = np.full(n_states, np.inf)
    vn_arr = np.empty(n_states, dtype=np.float64)
    cdef double[::1] v = v_arr
    cdef double[::1] vn = vn_arr
    v[goal] = 0.0
    cdef double residual = INFINITY, q, diff
    cdef Py_ssize_t sweeps = 0
    while sweeps < max_sweeps:
        for i in range(n_states):
            vn[i] = INFINITY
        for e in range(n_edges):
            q = (cost[e] + pe[e] * v[tgt[e]]) / denom[e]
            if q < vn[src[e]]:
                vn[src[e]] = q
        vn[goal] = 0.0
        residual = 0.0
        for i in range(n_states):
            if v[i] == INFINITY and vn[i] == INFINITY:
                continue
            diff = fabs(vn[i] - v[i])
            if diff > residual:
                residual = diff
            v[i] = vn[i]
        sweeps += 1
        if residual < tol:
            break
    return v_arr, sweeps, residual
