"""Risk-aware topological navigation.

Per-edge statistics (a spectral success model, mean traversal duration, mean
recovery cost, and a smoothed fatal fraction) are frozen at a query time t
into a small MDP over map nodes plus an absorbing FATAL state. Each enabled
edge is an action from its source node:

    reach target  with probability p_e              at cost d_e
    stay at source with probability (1-p_e)*(1-k_e) at cost r_e
    go FATAL      with probability (1-p_e)*k_e      at cost c_fatal

Value iteration minimises expected time-to-goal with the fatal cost folded
in; the success probability S of the returned policy (reaching the goal
before FATAL) is computed exactly from the induced absorbing chain.
"""
from __future__ import annotations

import io
import json
import math
from dataclasses import dataclass, field

import numpy as np

from ltasim import kernels
from ltasim.errors import SolveError, UnknownEdgeError, UnknownNodeError
from ltasim.fremen import FremenModel
from ltasim.topomap import TopoMap

OUTCOMES = ("success", "recovered_failure", "fatal_failure")

PRIOR_P = 0.5
R_PRIOR_S = 30.0
KAPPA_PRIOR = 0.05
KAPPA_PSEUDO = 5.0
C_FATAL_FACTOR = 100.0
VI_TOL = 1e-6
VI_MAX_SWEEPS = 10_000
FATAL_STATE = "__FATAL__"

STATS_SCHEMA_VERSION = 1


@dataclass
class EdgeStat:
    """Running statistics for one edge."""

    success_model: FremenModel
    duration_total: float = 0.0
    duration_count: int = 0
    recovery_total: float = 0.0
    recovery_count: int = 0
    failure_count: int = 0
    fatal_count: int = 0

    @property
    def duration_mean(self) -> float | None:
        if self.duration_count == 0:
            return None
        return self.duration_total / self.duration_count

    @property
    def recovery_cost(self) -> float:
        """Mean observed recovery time; a 30 s prior before any failures."""
        if self.recovery_count == 0:
            return R_PRIOR_S
        return self.recovery_total / self.recovery_count

    @property
    def fatal_fraction(self) -> float:
        """Fatal share of failures under a Beta-style prior: the 0.05 prior
        carries a pseudo-count of 5 failures."""
        return (self.fatal_count + KAPPA_PRIOR * KAPPA_PSEUDO) / (
            self.failure_count + KAPPA_PSEUDO
        )


class EdgeStats:
    """Per-edge statistics for every edge of a map."""

    def __init__(self, edge_ids, periods_s=None, order=None, eps=None):
        kwargs = {}
        if periods_s is not None:
            kwargs["periods_s"] = periods_s
        if order is not None:
            kwargs["order"] = order
        if eps is not None:
            kwargs["eps"] = eps
        self._model_kwargs = kwargs
        self.stats: dict[str, EdgeStat] = {
            eid: EdgeStat(success_model=FremenModel(**kwargs))
            for eid in sorted(edge_ids)
        }

    def __getitem__(self, edge_id: str) -> EdgeStat:
        try:
            return self.stats[edge_id]
        except KeyError:
            raise UnknownEdgeError(edge_id) from None

    def __contains__(self, edge_id: str) -> bool:
        return edge_id in self.stats

    def record_traversal(self, edge_id: str, t: float, outcome: str,
                         duration: float) -> None:
        """Fold one attempt outcome into the edge's statistics.

        ``duration`` is the traversal time for a success and the time spent
        recovering for a recovered failure; it is ignored for fatal failures.
        """
        if outcome not in OUTCOMES:
            raise ValueError(f"unknown outcome {outcome!r}")
        if duration < 0:
            raise ValueError("duration must be >= 0")
        stat = self[edge_id]
        stat.success_model.add_observation(t, outcome == "success")
        if outcome == "success":
            stat.duration_total += duration
            stat.duration_count += 1
        elif outcome == "recovered_failure":
            stat.failure_count += 1
            stat.recovery_total += duration
            stat.recovery_count += 1
        else:
            stat.failure_count += 1
            stat.fatal_count += 1

    def rebuild(self) -> None:
        """Rebuild every success model that has observations."""
        for stat in self.stats.values():
            if stat.success_model.n > 0:
                stat.success_model.rebuild()

    def snapshot(self) -> "EdgeStats":
        """Deep copy with every non-empty model rebuilt; the copy is safe to
        use for planning while the original keeps accumulating observations."""
        snap = EdgeStats(self.stats.keys(), **self._model_kwargs)
        for eid, stat in self.stats.items():
            model = FremenModel.from_dict(stat.success_model.to_dict())
            if model.n > 0:
                model.rebuild()
            snap.stats[eid] = EdgeStat(
                success_model=model,
                duration_total=stat.duration_total,
                duration_count=stat.duration_count,
                recovery_total=stat.recovery_total,
                recovery_count=stat.recovery_count,
                failure_count=stat.failure_count,
                fatal_count=stat.fatal_count,
            )
        return snap

    def to_dict(self) -> dict:
        return {
            "schema_version": STATS_SCHEMA_VERSION,
            "edges": {
                eid: {
                    "success_model": stat.success_model.to_dict(),
                    "duration_total": stat.duration_total,
                    "duration_count": stat.duration_count,
                    "recovery_total": stat.recovery_total,
                    "recovery_count": stat.recovery_count,
                    "failure_count": stat.failure_count,
                    "fatal_count": stat.fatal_count,
                }
                for eid, stat in self.stats.items()
            },
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "EdgeStats":
        obj = cls(doc["edges"].keys())
        for eid, row in doc["edges"].items():
            obj.stats[eid] = EdgeStat(
                success_model=FremenModel.from_dict(row["success_model"]),
                duration_total=row["duration_total"],
                duration_count=row["duration_count"],
                recovery_total=row["recovery_total"],
                recovery_count=row["recovery_count"],
                failure_count=row["failure_count"],
                fatal_count=row["fatal_count"],
            )
        return obj

    def state_equal(self, other: "EdgeStats", tol: float = 0.0) -> bool:
        if sorted(self.stats) != sorted(other.stats):
            return False
        for eid, a in self.stats.items():
            b = other.stats[eid]
            if (a.duration_count, a.recovery_count, a.failure_count, a.fatal_count) != (
                b.duration_count, b.recovery_count, b.failure_count, b.fatal_count
            ):
                return False
            if abs(a.duration_total - b.duration_total) > tol:
                return False
            if abs(a.recovery_total - b.recovery_total) > tol:
                return False
            if not a.success_model.state_equal(b.success_model, tol=tol):
                return False
        return True


@dataclass(frozen=True)
class MdpEdge:
    edge_id: str
    source: str
    target: str
    p: float
    d: float
    r: float
    kappa: float

    def __post_init__(self):
        if not 0.0 < self.p <= 1.0:
            raise ValueError(f"edge {self.edge_id!r}: p must lie in (0, 1]")
        if not 0.0 <= self.kappa <= 1.0:
            raise ValueError(f"edge {self.edge_id!r}: kappa must lie in [0, 1]")
        if self.d < 0 or self.r < 0:
            raise ValueError(f"edge {self.edge_id!r}: costs must be >= 0")


@dataclass(frozen=True)
class NavMdp:
    """Edge MDP frozen at a query time."""

    nodes: tuple[str, ...]
    edges: tuple[MdpEdge, ...]
    c_fatal: float
    t: float = 0.0

    def __post_init__(self):
        node_set = set(self.nodes)
        for e in self.edges:
            if e.source not in node_set or e.target not in node_set:
                raise UnknownNodeError(e.source if e.source not in node_set else e.target)
        object.__setattr__(
            self, "edges",
            tuple(sorted(self.edges, key=lambda e: e.edge_id)),
        )


@dataclass(frozen=True)
class NavPolicy:
    goal: str
    t: float
    chosen: dict[str, str | None]
    values: dict[str, float]
    success: dict[str, float]
    sweeps: int
    residual: float


def build_mdp(topo: TopoMap, stats: EdgeStats, t: float,
              c_fatal: float | None = None) -> NavMdp:
    """Freeze per-edge beliefs at time t into an MDP over enabled edges.

    Edges whose success model has no observations fall back to the prior
    success probability (0.5) and the nominal traversal duration; models with
    pending observations raise StaleModelError (rebuild first).
    """
    if c_fatal is None:
        c_fatal = C_FATAL_FACTOR * sum(
            e.nominal_duration for e in topo.edges.values()
        )
    mdp_edges = []
    for e in topo.edges.values():
        if not e.enabled:
            continue
        stat = stats[e.id]
        if stat.success_model.n == 0:
            p = PRIOR_P
        else:
            p = stat.success_model.predict(t).p
        d = stat.duration_mean
        if d is None:
            d = e.nominal_duration
        mdp_edges.append(
            MdpEdge(
                edge_id=e.id,
                source=e.source,
                target=e.target,
                p=p,
                d=d,
                r=stat.recovery_cost,
                kappa=stat.fatal_fraction,
            )
        )
    return NavMdp(
        nodes=tuple(sorted(topo.nodes)),
        edges=tuple(mdp_edges),
        c_fatal=c_fatal,
        t=t,
    )


def _edge_q(e: MdpEdge, v_target: float, c_fatal: float) -> float:
    """Expected cost of committing to edge e given the target's value, with
    the self-transition solved in closed form."""
    q_stay = (1.0 - e.p) * (1.0 - e.kappa)
    q_fatal = (1.0 - e.p) * e.kappa
    cost = e.p * e.d + q_stay * e.r + q_fatal * c_fatal
    return (cost + e.p * v_target) / (e.p + q_fatal)


def solve(mdp: NavMdp, goal: str, tol: float = VI_TOL,
          max_sweeps: int = VI_MAX_SWEEPS) -> NavPolicy:
    """Value-iterate to the optimal expected-time policy toward ``goal``.

    Ties between edges are broken by the smaller edge id. Unreachable nodes
    keep V = +inf, no chosen edge, and S = 0.
    """
    if goal not in mdp.nodes:
        raise UnknownNodeError(goal)
    index = {nid: i for i, nid in enumerate(mdp.nodes)}
    goal_i = index[goal]
    n = len(mdp.nodes)

    if mdp.edges:
        src = np.array([index[e.source] for e in mdp.edges], dtype=np.int64)
        tgt = np.array([index[e.target] for e in mdp.edges], dtype=np.int64)
        p = np.array([e.p for e in mdp.edges])
        d = np.array([e.d for e in mdp.edges])
        r = np.array([e.r for e in mdp.edges])
        kappa = np.array([e.kappa for e in mdp.edges])
        v, sweeps, residual = kernels.value_iteration(
            n, src, tgt, p, d, r, kappa, mdp.c_fatal, goal_i, tol, max_sweeps
        )
        if residual >= tol:
            raise SolveError(residual, sweeps)
    else:
        v = np.full(n, np.inf)
        v[goal_i] = 0.0
        sweeps, residual = 0, 0.0

    # Greedy edge choice; edges are already sorted by id, so scanning with a
    # strict improvement test breaks exact ties toward the smaller edge id.
    chosen: dict[str, str | None] = {nid: None for nid in mdp.nodes}
    chosen_edge: dict[str, MdpEdge] = {}
    best_q: dict[str, float] = {}
    for e in mdp.edges:
        if e.source == goal:
            continue
        q = _edge_q(e, v[index[e.target]], mdp.c_fatal)
        if math.isinf(q):
            continue
        if e.source not in best_q or q < best_q[e.source]:
            best_q[e.source] = q
            chosen[e.source] = e.edge_id
            chosen_edge[e.source] = e

    # Success probability of the induced chain: transient states are the
    # non-goal nodes with a chosen edge; FATAL and the goal absorb.
    transient = [nid for nid in mdp.nodes if nid != goal and chosen[nid] is not None]
    t_index = {nid: i for i, nid in enumerate(transient)}
    success: dict[str, float] = {nid: 0.0 for nid in mdp.nodes}
    success[goal] = 1.0
    if transient:
        m = len(transient)
        a = np.zeros((m, m))
        b = np.zeros(m)
        for nid in transient:
            i = t_index[nid]
            e = chosen_edge[nid]
            stay = (1.0 - e.p) * (1.0 - e.kappa)
            a[i, i] = 1.0 - stay
            if e.target == goal:
                b[i] = e.p
            elif e.target in t_index:
                a[i, t_index[e.target]] -= e.p
            # other targets are unreachable-from themselves (S = 0)
        s = np.linalg.solve(a, b)
        for nid in transient:
            success[nid] = float(s[t_index[nid]])

    return NavPolicy(
        goal=goal,
        t=mdp.t,
        chosen=chosen,
        values={nid: float(v[index[nid]]) for nid in mdp.nodes},
        success=success,
        sweeps=int(sweeps),
        residual=float(residual),
    )


def policy_csv(policy: NavPolicy) -> str:
    """Render a policy as CSV rows (node, chosen_edge, V_seconds, S)."""
    out = io.StringIO()
    out.write("node,chosen_edge,V_seconds,S\n")
    for nid in sorted(policy.values):
        v = policy.values[nid]
        out.write(
            f"{nid},{policy.chosen[nid] or ''},"
            f"{'inf' if math.isinf(v) else repr(v)},{policy.success[nid]!r}\n"
        )
    return out.getvalue()


def stats_json(stats: EdgeStats, **kwargs) -> str:
    """Serialise edge statistics keyed by edge id."""
    return json.dumps(stats.to_dict(), sort_keys=True, **kwargs)
