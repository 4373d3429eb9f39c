"""Information-terminal visit planning.

Each terminal node carries a spectral model of the binary "somebody
interacted during a visit" process. A day plan samples (node, half-hour
slot) pairs without replacement, weighted by

    w = beta * p_hat + (1 - beta) * h(p_hat)

so exploitation (predicted interaction probability) and exploration (binary
entropy of the prediction) mix additively; beta = 1 is pure exploitation and
beta = 0 pure exploration. Slot times are pairwise distinct within a plan.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ltasim.errors import UnknownNodeError
from ltasim.fremen import FremenModel, binary_entropy

DEFAULT_BETA = 0.5
DEFAULT_SLOT_S = 1800.0
PRIOR_P = 0.5


@dataclass(frozen=True)
class PlannedVisit:
    node: str
    slot_start: float
    weight: float
    p_hat: float
    entropy: float


@dataclass(frozen=True)
class VisitPlan:
    day: int
    visits: tuple[PlannedVisit, ...]
    uniform_fallback: bool


class InteractionModelSet:
    """One spectral interaction model per terminal node."""

    def __init__(self, terminal_nodes, periods_s=None, order=None, eps=None,
                 slot_s: float = DEFAULT_SLOT_S):
        kwargs = {}
        if periods_s is not None:
            kwargs["periods_s"] = periods_s
        if order is not None:
            kwargs["order"] = order
        if eps is not None:
            kwargs["eps"] = eps
        self._model_kwargs = kwargs
        self.slot_s = float(slot_s)
        self.models: dict[str, FremenModel] = {
            nid: FremenModel(**kwargs) for nid in sorted(terminal_nodes)
        }

    def __getitem__(self, node_id: str) -> FremenModel:
        try:
            return self.models[node_id]
        except KeyError:
            raise UnknownNodeError(node_id) from None

    def record_outcome(self, node_id: str, t: float, interacted: bool) -> None:
        """Fold a visit outcome in; non-interactions count as zeros."""
        self[node_id].add_observation(t, interacted)

    def rebuild(self) -> None:
        for model in self.models.values():
            if model.n > 0:
                model.rebuild()

    def snapshot(self) -> "InteractionModelSet":
        snap = InteractionModelSet(
            self.models.keys(), slot_s=self.slot_s, **self._model_kwargs
        )
        for nid, model in self.models.items():
            copy = FremenModel.from_dict(model.to_dict())
            if copy.n > 0:
                copy.rebuild()
            snap.models[nid] = copy
        return snap

    def predict(self, node_id: str, t: float) -> tuple[float, float]:
        """(p_hat, entropy) at time t; empty models fall back to the
        uninformed prior p = 0.5 (entropy 1)."""
        model = self[node_id]
        if model.n == 0:
            return PRIOR_P, binary_entropy(PRIOR_P)
        pred = model.predict(t)
        return pred.p, pred.h

    def to_dict(self) -> dict:
        return {
            "slot_s": self.slot_s,
            "models": {nid: m.to_dict() for nid, m in self.models.items()},
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "InteractionModelSet":
        obj = cls(doc["models"].keys(), slot_s=doc["slot_s"])
        for nid, mdoc in doc["models"].items():
            obj.models[nid] = FremenModel.from_dict(mdoc)
        return obj

    def state_equal(self, other: "InteractionModelSet", tol: float = 0.0) -> bool:
        if sorted(self.models) != sorted(other.models):
            return False
        return all(
            self.models[nid].state_equal(other.models[nid], tol=tol)
            for nid in self.models
        )


def day_slots(day: int, window_h: tuple[float, float],
              slot_s: float = DEFAULT_SLOT_S) -> list[float]:
    """Slot start times (absolute seconds) covering one day's window."""
    base = day * 86_400.0
    start = base + window_h[0] * 3600.0
    end = base + window_h[1] * 3600.0
    slots = []
    t = start
    while t + slot_s <= end + 1e-9:
        slots.append(t)
        t += slot_s
    return slots


def sample_plan(models: InteractionModelSet, day: int, n_visits: int, rng,
                window_h: tuple[float, float] = (8.0, 18.0),
                beta: float = DEFAULT_BETA,
                uniform: bool = False) -> VisitPlan:
    """Sample a day's visit plan without replacement.

    Candidates are all (terminal node, slot) pairs in the day's window.
    Sampling a pair removes every candidate sharing its slot, keeping slot
    times pairwise distinct. All-zero weights (or ``uniform=True``) fall back
    to uniform sampling, flagged on the returned plan. Draws come from the
    injected ``rng`` (a numpy Generator) only.
    """
    if not 0.0 <= beta <= 1.0:
        raise ValueError("beta must lie in [0, 1]")
    slots = day_slots(day, window_h, models.slot_s)
    candidates: list[PlannedVisit] = []
    for nid in sorted(models.models):
        for slot in slots:
            # evaluate the model at the slot midpoint
            p_hat, h = models.predict(nid, slot + models.slot_s / 2.0)
            w = beta * p_hat + (1.0 - beta) * h
            candidates.append(PlannedVisit(
                node=nid, slot_start=slot, weight=w, p_hat=p_hat, entropy=h,
            ))
    n_slots = len(slots)
    if n_visits > n_slots:
        raise ValueError(
            f"cannot plan {n_visits} visits over {n_slots} distinct slots"
        )
    total = sum(c.weight for c in candidates)
    fallback = uniform or total <= 0.0
    chosen: list[PlannedVisit] = []
    pool = list(candidates)
    for _ in range(n_visits):
        if not pool:
            break
        if fallback:
            weights = np.ones(len(pool))
        else:
            weights = np.array([c.weight for c in pool])
            if weights.sum() <= 0.0:
                weights = np.ones(len(pool))
        probs = weights / weights.sum()
        idx = int(rng.choice(len(pool), p=probs))
        pick = pool[idx]
        chosen.append(pick)
        pool = [c for c in pool if c.slot_start != pick.slot_start]
    chosen.sort(key=lambda c: (c.slot_start, c.node))
    return VisitPlan(day=day, visits=tuple(chosen), uniform_fallback=fallback)


def plan_rows(plan: VisitPlan) -> list[tuple[int, float, str, float, float, float]]:
    """Rows for the plan dump: (day, slot_start, node, weight, p_hat, entropy)."""
    return [
        (plan.day, v.slot_start, v.node, v.weight, v.p_hat, v.entropy)
        for v in plan.visits
    ]
