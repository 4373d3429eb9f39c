"""Spectral temporal model for sparse, irregular binary observations.

The model maintains constant-size running sums over a fixed grid of candidate
periods: for each angular frequency w it accumulates sum_i s_i*exp(-1j*w*t_i)
and sum_i exp(-1j*w*t_i). An explicit rebuild step turns the sums into a mean
``mu`` plus complex coefficients

    gamma_j = (1/n) * sum_i s_i*exp(-1j*w_j*t_i) - mu * (1/n) * sum_i exp(-1j*w_j*t_i)

ranked by magnitude, keeping the strongest ``order`` components. Prediction
reconstructs the state probability at any instant,

    p(t) = clamp(mu + sum_retained 2*Re(gamma_j * exp(1j*w_j*t)), eps, 1-eps)

and reports the binary entropy of p alongside it. Rebuilds are explicit:
predicting from a model with pending observations is an error rather than a
silent fallback, so callers decide when a re-ranking happens (nightly, in the
deployments here).
"""
from __future__ import annotations

import cmath
import json
import math
from dataclasses import dataclass

import numpy as np

from ltasim import kernels
from ltasim.errors import EmptyModelError, StaleModelError

DEFAULT_PERIODS_H = (1, 2, 3, 4, 6, 8, 12, 24, 48, 72, 96, 120, 144, 168)
DEFAULT_ORDER = 2
DEFAULT_EPS = 0.01
MODEL_SCHEMA_VERSION = 1


def binary_entropy(p: float) -> float:
    """Entropy of a Bernoulli(p) variable in bits; 0 at p in {0, 1}."""
    if p <= 0.0 or p >= 1.0:
        return 0.0
    return -p * math.log2(p) - (1.0 - p) * math.log2(1.0 - p)


@dataclass(frozen=True)
class Prediction:
    p: float
    h: float


class FremenModel:
    """Online spectral model of a binary process.

    Parameters
    ----------
    periods_s:
        Candidate periods in seconds. Defaults to a grid from one hour up to
        one week (DEFAULT_PERIODS_H, converted to seconds).
    order:
        Number of spectral components retained at rebuild (K).
    eps:
        Probability clamp: predictions lie in [eps, 1-eps].
    """

    def __init__(self, periods_s=None, order: int = DEFAULT_ORDER,
                 eps: float = DEFAULT_EPS):
        if periods_s is None:
            periods_s = [h * 3600.0 for h in DEFAULT_PERIODS_H]
        periods = [float(p) for p in periods_s]
        if any(p <= 0 for p in periods):
            raise ValueError("candidate periods must be positive")
        if len(set(periods)) != len(periods):
            raise ValueError("candidate periods must be distinct")
        if order < 0:
            raise ValueError("order must be >= 0")
        if not 0.0 < eps < 0.5:
            raise ValueError("eps must lie in (0, 0.5)")
        self.periods_s = tuple(periods)
        self.order = int(order)
        self.eps = float(eps)
        self.omegas = np.array([2.0 * math.pi / p for p in periods])
        self.sums = np.zeros((2, len(periods)), dtype=np.complex128)
        self.n = 0
        self.sum_s = 0.0
        self.mu = 0.0
        # Retained (omega, gamma) pairs; None until the first rebuild.
        self._components: list[tuple[float, complex]] | None = None
        self._gammas: np.ndarray | None = None
        self._dirty = False

    # -- observation intake -------------------------------------------------

    def add_observation(self, t: float, state) -> None:
        """Fold one observation (time in seconds, binary state) into the sums."""
        s = 1.0 if state else 0.0
        t = float(t)
        e = np.exp(-1j * self.omegas * t)
        self.sums[0] += e * s
        self.sums[1] += e
        self.n += 1
        self.sum_s += s
        self._dirty = True

    def add_observations(self, times, states) -> None:
        """Batch version of add_observation (kernel-accelerated)."""
        times = np.asarray(times, dtype=np.float64)
        states = np.asarray([1.0 if s else 0.0 for s in np.ravel(states)])
        if times.size == 0:
            return
        n, total = kernels.spectral_accumulate(times, states, self.omegas, self.sums)
        self.n += n
        self.sum_s += total
        self._dirty = True

    # -- rebuild and prediction ---------------------------------------------

    def rebuild(self) -> None:
        """Re-rank candidate components and retain the strongest ``order``."""
        if self.n == 0:
            raise EmptyModelError("cannot rebuild a model with no observations")
        self.mu = self.sum_s / self.n
        gammas = self.sums[0] / self.n - self.mu * (self.sums[1] / self.n)
        self._gammas = gammas
        ranked = sorted(
            range(len(self.periods_s)),
            key=lambda j: (-abs(gammas[j]), j),
        )
        self._components = [
            (float(self.omegas[j]), complex(gammas[j]))
            for j in ranked[: self.order]
        ]
        self._dirty = False

    @property
    def rebuilt(self) -> bool:
        return self._components is not None and not self._dirty

    def _require_fresh(self) -> None:
        if self.n == 0:
            raise EmptyModelError("model has no observations")
        if self._components is None or self._dirty:
            raise StaleModelError(
                "model has observations pending a rebuild; call rebuild() first"
            )

    def predict(self, t: float) -> Prediction:
        """Probability that the process is in state 1 at time t, with entropy."""
        self._require_fresh()
        raw = self.mu
        for omega, gamma in self._components:
            raw += 2.0 * (gamma * cmath.exp(1j * omega * t)).real
        p = min(max(raw, self.eps), 1.0 - self.eps)
        return Prediction(p=p, h=binary_entropy(p))

    def predict_many(self, times) -> np.ndarray:
        """Vectorised prediction over an array of times (probabilities only)."""
        self._require_fresh()
        omegas = np.array([c[0] for c in self._components])
        gammas = np.array([c[1] for c in self._components], dtype=np.complex128)
        raw = kernels.reconstruct(np.asarray(times, dtype=np.float64),
                                  self.mu, omegas, gammas)
        return np.clip(raw, self.eps, 1.0 - self.eps)

    def spectrum(self) -> list[tuple[float, float]]:
        """(period_s, reconstruction amplitude 2*|gamma|) for every candidate,
        in candidate-grid order. Requires a rebuild."""
        self._require_fresh()
        return [
            (self.periods_s[j], 2.0 * abs(self._gammas[j]))
            for j in range(len(self.periods_s))
        ]

    def retained_components(self) -> list[tuple[float, complex]]:
        self._require_fresh()
        return list(self._components)

    # -- serialization -------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "schema_version": MODEL_SCHEMA_VERSION,
            "periods_s": list(self.periods_s),
            "order": self.order,
            "eps": self.eps,
            "n": self.n,
            "sum_s": self.sum_s,
            "sums": [
                {
                    "period_s": self.periods_s[j],
                    "state_re": self.sums[0, j].real,
                    "state_im": self.sums[0, j].imag,
                    "basis_re": self.sums[1, j].real,
                    "basis_im": self.sums[1, j].imag,
                }
                for j in range(len(self.periods_s))
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "FremenModel":
        model = cls(periods_s=doc["periods_s"], order=doc["order"], eps=doc["eps"])
        model.n = int(doc["n"])
        model.sum_s = float(doc["sum_s"])
        for j, row in enumerate(doc["sums"]):
            model.sums[0, j] = complex(row["state_re"], row["state_im"])
            model.sums[1, j] = complex(row["basis_re"], row["basis_im"])
        # Loaded models carry sums only; a rebuild is required before predicting.
        model._dirty = model.n > 0
        return model

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, **kwargs)

    @classmethod
    def from_json(cls, text: str) -> "FremenModel":
        return cls.from_dict(json.loads(text))

    def state_equal(self, other: "FremenModel", tol: float = 0.0) -> bool:
        """Compare accumulated state (not retained components) within tol."""
        return (
            self.periods_s == other.periods_s
            and self.order == other.order
            and self.eps == other.eps
            and self.n == other.n
            and abs(self.sum_s - other.sum_s) <= tol
            and bool(np.all(np.abs(self.sums - other.sums) <= tol))
        )
