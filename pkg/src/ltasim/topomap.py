"""Topological map: metric-posed nodes joined by directed, action-typed edges.

Maps are value objects: loading validates structure once, and gating an edge
(enable/disable) produces a new map rather than mutating in place. Route
queries run over enabled edges only, weighted by nominal traversal duration
(length / speed).
"""
from __future__ import annotations

import heapq
import json
import math
from dataclasses import dataclass, replace

from ltasim.errors import (
    MapValidationError,
    RouteNotFoundError,
    UnknownEdgeError,
    UnknownNodeError,
)

ACTIONS = ("move_base", "door_pass", "dock", "undock", "human_aware")
NODE_TAGS = ("dock", "door_side", "desk", "terminal_spot", "plain")

MAP_SCHEMA_VERSION = 1


def _normalize_theta(theta: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    t = theta % math.tau
    if t > math.pi:
        t -= math.tau
    return t


@dataclass(frozen=True)
class MetricPose:
    x: float
    y: float
    theta: float = 0.0

    def __post_init__(self):
        for name in ("x", "y", "theta"):
            v = getattr(self, name)
            if not math.isfinite(v):
                raise ValueError(f"pose {name} must be finite, got {v!r}")
        object.__setattr__(self, "theta", _normalize_theta(self.theta))


@dataclass(frozen=True)
class TopoNode:
    id: str
    label: str
    pose: MetricPose
    influence_radius: float = 1.0
    tags: frozenset[str] = frozenset({"plain"})

    def __post_init__(self):
        if self.influence_radius <= 0:
            raise ValueError(f"node {self.id!r}: influence_radius must be > 0")
        object.__setattr__(self, "tags", frozenset(self.tags))
        bad = self.tags - set(NODE_TAGS)
        if bad:
            raise ValueError(f"node {self.id!r}: unknown tags {sorted(bad)}")


@dataclass(frozen=True)
class TopoEdge:
    id: str
    source: str
    target: str
    action: str
    nominal_length: float
    nominal_speed: float
    enabled: bool = True

    def __post_init__(self):
        if self.action not in ACTIONS:
            raise ValueError(f"edge {self.id!r}: unknown action {self.action!r}")
        if self.nominal_length <= 0:
            raise ValueError(f"edge {self.id!r}: nominal_length must be > 0")
        if self.nominal_speed <= 0:
            raise ValueError(f"edge {self.id!r}: nominal_speed must be > 0")

    @property
    def nominal_duration(self) -> float:
        return self.nominal_length / self.nominal_speed


class TopoMap:
    """Immutable container of nodes and edges with route queries.

    ``load_map`` validates; programmatic construction can call ``validate``
    explicitly. Gating helpers return new maps.
    """

    def __init__(self, nodes, edges):
        nodes = list(nodes)
        edges = list(edges)
        self.nodes: dict[str, TopoNode] = {n.id: n for n in sorted(nodes, key=lambda n: n.id)}
        self.edges: dict[str, TopoEdge] = {e.id: e for e in sorted(edges, key=lambda e: e.id)}
        if len(self.nodes) != len(nodes):
            raise MapValidationError(_duplicates("node", [n.id for n in nodes]))
        if len(self.edges) != len(edges):
            raise MapValidationError(_duplicates("edge", [e.id for e in edges]))
        self._out: dict[str, list[TopoEdge]] = {nid: [] for nid in self.nodes}
        for e in self.edges.values():
            if e.source in self._out:
                self._out[e.source].append(e)

    def __eq__(self, other):
        return (
            isinstance(other, TopoMap)
            and self.nodes == other.nodes
            and self.edges == other.edges
        )

    @property
    def dock_node(self) -> TopoNode:
        docks = [n for n in self.nodes.values() if "dock" in n.tags]
        if len(docks) != 1:
            raise MapValidationError(
                f"expected exactly one dock node, found {len(docks)}"
            )
        return docks[0]

    def node(self, node_id: str) -> TopoNode:
        try:
            return self.nodes[node_id]
        except KeyError:
            raise UnknownNodeError(node_id) from None

    def edge(self, edge_id: str) -> TopoEdge:
        try:
            return self.edges[edge_id]
        except KeyError:
            raise UnknownEdgeError(edge_id) from None

    def neighbors(self, node_id: str) -> list[TopoEdge]:
        """Enabled out-edges of a node, ordered by edge id."""
        self.node(node_id)
        return [e for e in self._out[node_id] if e.enabled]

    def with_edge_enabled(self, edge_id: str, enabled: bool) -> "TopoMap":
        e = self.edge(edge_id)
        edges = [replace(e, enabled=enabled) if x.id == edge_id else x
                 for x in self.edges.values()]
        return TopoMap(list(self.nodes.values()), edges)

    def nominal_route(self, source: str, target: str) -> tuple[list[TopoEdge], float]:
        """Cheapest enabled route by nominal duration (Dijkstra).

        Returns ``(edge_list, total_duration_s)``; the route from a node to
        itself is ``([], 0.0)``.
        """
        self.node(source)
        self.node(target)
        if source == target:
            return [], 0.0
        dist: dict[str, float] = {source: 0.0}
        prev: dict[str, TopoEdge] = {}
        done: set[str] = set()
        heap: list[tuple[float, str]] = [(0.0, source)]
        while heap:
            d, u = heapq.heappop(heap)
            if u in done:
                continue
            done.add(u)
            if u == target:
                break
            for e in self.neighbors(u):
                nd = d + e.nominal_duration
                if nd < dist.get(e.target, math.inf):
                    dist[e.target] = nd
                    prev[e.target] = e
                    heapq.heappush(heap, (nd, e.target))
        if target not in done:
            raise RouteNotFoundError(source, target)
        route: list[TopoEdge] = []
        u = target
        while u != source:
            e = prev[u]
            route.append(e)
            u = e.source
        route.reverse()
        return route, dist[target]

    def validate(self) -> None:
        """Check structural invariants, raising MapValidationError with every
        violation found."""
        problems: list[str] = []
        docks = [n.id for n in self.nodes.values() if "dock" in n.tags]
        if len(docks) != 1:
            problems.append(
                f"expected exactly one dock node, found {len(docks)}"
                + (f" ({', '.join(docks)})" if docks else "")
            )
        for e in self.edges.values():
            for endpoint in (e.source, e.target):
                if endpoint not in self.nodes:
                    problems.append(
                        f"edge {e.id!r} references missing node {endpoint!r}"
                    )
            if e.source == e.target:
                problems.append(f"edge {e.id!r} is a self-loop at {e.source!r}")
            if e.action in ("dock", "undock"):
                if e.source in self.nodes and e.target in self.nodes:
                    touches_dock = any(
                        "dock" in self.nodes[x].tags for x in (e.source, e.target)
                    )
                    if not touches_dock:
                        problems.append(
                            f"{e.action} edge {e.id!r} does not touch the dock node"
                        )
        if not problems and len(docks) == 1:
            problems.extend(self._connectivity_problems(docks[0]))
        if problems:
            raise MapValidationError(problems)

    def _connectivity_problems(self, dock_id: str) -> list[str]:
        """The enabled-edge component containing the dock must be strongly
        connected: every node weakly connected to the dock must both reach it
        and be reachable from it."""
        fwd: dict[str, set[str]] = {nid: set() for nid in self.nodes}
        rev: dict[str, set[str]] = {nid: set() for nid in self.nodes}
        for e in self.edges.values():
            if e.enabled:
                fwd[e.source].add(e.target)
                rev[e.target].add(e.source)

        def reach(start: str, adj) -> set[str]:
            seen = {start}
            stack = [start]
            while stack:
                u = stack.pop()
                for v in sorted(adj[u]):
                    if v not in seen:
                        seen.add(v)
                        stack.append(v)
            return seen

        forward = reach(dock_id, fwd)
        backward = reach(dock_id, rev)
        weak = reach(dock_id, {n: fwd[n] | rev[n] for n in self.nodes})
        problems = []
        unreachable = sorted(weak - forward)
        if unreachable:
            problems.append(
                "nodes not reachable from the dock over enabled edges: "
                + ", ".join(unreachable)
            )
        stranded = sorted(weak - backward)
        if stranded:
            problems.append(
                "nodes that cannot reach the dock over enabled edges: "
                + ", ".join(stranded)
            )
        return problems

    def to_dict(self) -> dict:
        return {
            "schema_version": MAP_SCHEMA_VERSION,
            "nodes": [
                {
                    "id": n.id,
                    "label": n.label,
                    "x": n.pose.x,
                    "y": n.pose.y,
                    "theta": n.pose.theta,
                    "influence_radius": n.influence_radius,
                    "tags": sorted(n.tags),
                }
                for n in self.nodes.values()
            ],
            "edges": [
                {
                    "id": e.id,
                    "source": e.source,
                    "target": e.target,
                    "action": e.action,
                    "nominal_length": e.nominal_length,
                    "nominal_speed": e.nominal_speed,
                    "enabled": e.enabled,
                }
                for e in self.edges.values()
            ],
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "TopoMap":
        try:
            nodes = [
                TopoNode(
                    id=nd["id"],
                    label=nd.get("label", nd["id"]),
                    pose=MetricPose(nd["x"], nd["y"], nd.get("theta", 0.0)),
                    influence_radius=nd.get("influence_radius", 1.0),
                    tags=frozenset(nd.get("tags", ["plain"])),
                )
                for nd in doc["nodes"]
            ]
            edges = [
                TopoEdge(
                    id=ed["id"],
                    source=ed["source"],
                    target=ed["target"],
                    action=ed.get("action", "move_base"),
                    nominal_length=ed["nominal_length"],
                    nominal_speed=ed["nominal_speed"],
                    enabled=ed.get("enabled", True),
                )
                for ed in doc["edges"]
            ]
        except (KeyError, TypeError) as exc:
            raise MapValidationError(f"malformed map document: {exc}") from exc
        except ValueError as exc:
            raise MapValidationError(str(exc)) from exc
        return cls(nodes, edges)


def _duplicates(kind: str, ids) -> list[str]:
    seen: set[str] = set()
    dups = sorted({i for i in ids if i in seen or seen.add(i)})
    return [f"duplicate {kind} id {d!r}" for d in dups]


def load_map(source) -> TopoMap:
    """Load and validate a map from a path, file object, or JSON string."""
    if hasattr(source, "read"):
        doc = json.load(source)
    else:
        text = str(source)
        if text.lstrip().startswith("{"):
            doc = json.loads(text)
        else:
            with open(text, "r", encoding="utf-8") as fh:
                doc = json.load(fh)
    m = TopoMap.from_dict(doc)
    m.validate()
    return m


def save_map(m: TopoMap, dest) -> None:
    """Write a map as JSON to a path or file object."""
    doc = m.to_dict()
    if hasattr(dest, "write"):
        json.dump(doc, dest, indent=2, sort_keys=True)
        dest.write("\n")
    else:
        with open(dest, "w", encoding="utf-8") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
