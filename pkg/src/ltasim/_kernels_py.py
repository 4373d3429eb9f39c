"""NumPy implementations of the hot numeric kernels.

These are the fallback used when the compiled extension (ltasim._kernels)
is unavailable; ltasim.kernels performs the selection. Both implementations
share the same signatures and semantics.
"""
from __future__ import annotations

import numpy as np

BACKEND = "python"


def spectral_accumulate(times, states, omegas, sums):
    """Fold a batch of binary observations into running spectral sums.

    ``sums`` is a complex128 array of shape (2, n_omega), updated in place:
    row 0 accumulates sum_i s_i * exp(-1j * w * t_i) and row 1 accumulates
    sum_i exp(-1j * w * t_i). Returns ``(n_added, state_total)``.
    """
    t = np.ascontiguousarray(times, dtype=np.float64)
    s = np.ascontiguousarray(states, dtype=np.float64)
    w = np.ascontiguousarray(omegas, dtype=np.float64)
    if t.shape != s.shape:
        raise ValueError("times and states must have identical shapes")
    e = np.exp(-1j * np.outer(w, t))
    sums[0] += e @ s
    sums[1] += e.sum(axis=1)
    return int(t.size), float(s.sum())


def reconstruct(times, mu, omegas, amplitudes):
    """Evaluate mu + sum_j 2*Re(gamma_j * exp(1j * w_j * t)) without clamping.

    ``omegas`` and ``amplitudes`` (complex gamma_j) describe the retained
    components. Returns a float64 array shaped like ``times``.
    """
    t = np.ascontiguousarray(times, dtype=np.float64)
    w = np.ascontiguousarray(omegas, dtype=np.float64)
    if w.size == 0:
        return np.full(t.shape, float(mu))
    g = np.ascontiguousarray(amplitudes, dtype=np.complex128)
    e = np.exp(1j * np.outer(t, w))
    return mu + 2.0 * (e @ g).real


def value_iteration(n_states, edge_src, edge_tgt, p, d, r, kappa, c_fatal,
                    goal, tol, max_sweeps):
    """Synchronous value iteration over a retry-or-die edge MDP.

    Each action (edge) from state ``src`` reaches ``tgt`` with probability
    ``p`` at cost ``d``, stays at ``src`` with probability (1-p)*(1-kappa)
    at cost ``r``, and is absorbed fatally with probability (1-p)*kappa at
    cost ``c_fatal``. The self-transition is solved in closed form per
    action, so each sweep applies

        Q(e) = (c_e + p_e * V[tgt_e]) / (p_e + (1 - p_e) * kappa_e)

    with c_e the expected one-step cost. Returns ``(V, sweeps, residual)``
    where V[goal] == 0 and unreachable states hold +inf.
    """
    src = np.ascontiguousarray(edge_src, dtype=np.int64)
    tgt = np.ascontiguousarray(edge_tgt, dtype=np.int64)
    p = np.ascontiguousarray(p, dtype=np.float64)
    d = np.ascontiguousarray(d, dtype=np.float64)
    r = np.ascontiguousarray(r, dtype=np.float64)
    kappa = np.ascontiguousarray(kappa, dtype=np.float64)

    q_stay = (1.0 - p) * (1.0 - kappa)
    q_fatal = (1.0 - p) * kappa
    cost = p * d + q_stay * r + q_fatal * c_fatal
    denom = p + q_fatal
    if np.any(denom <= 0.0):
        raise ValueError("action with zero progress probability and zero fatal mass")

    v = np.full(n_states, np.inf)
    v[goal] = 0.0
    residual = np.inf
    sweeps = 0
    while sweeps < max_sweeps:
        q = (cost + p * v[tgt]) / denom
        v_new = np.full(n_states, np.inf)
        np.minimum.at(v_new, src, q)
        v_new[goal] = 0.0
        both_inf = np.isinf(v) & np.isinf(v_new)
        with np.errstate(invalid="ignore"):
            diff = np.where(both_inf, 0.0, np.abs(v_new - v))
        residual = float(diff.max()) if diff.size else 0.0
        v = v_new
        sweeps += 1
        if residual < tol:
            break
    return v, sweeps, residual
