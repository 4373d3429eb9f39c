"""Append-only JSON Lines event log.

One JSON object per line: {"seq": int, "t": float, "category": str,
"schema_version": int, "payload": {...}}. ``seq`` increases strictly and
``t`` never decreases within a run segment; a run_marker with marker="start"
opens a new segment (so concatenating two log files replays as two runs).
Payloads are validated against a per-category schema of required fields;
extra payload fields are allowed.

``replay`` rebuilds the learned state (edge statistics, interaction models,
activity clusters) from a log alone, reproducing what the online system held.
"""
from __future__ import annotations

import json
import os
from dataclasses import dataclass

from ltasim.errors import EventOrderError, EventSchemaError, ReplayError

EVENT_SCHEMA_VERSION = 1

CATEGORIES = (
    "traversal",
    "recovery",
    "task",
    "interaction",
    "trajectory",
    "battery",
    "component",
    "run_marker",
)

# Required payload fields and their types per category. Extra fields are
# permitted; these are the contract consumed elsewhere in the package.
_NUM = (int, float)
REQUIRED_FIELDS: dict[str, dict[str, tuple]] = {
    "traversal": {
        "edge": (str,),
        "t_start": _NUM,
        "outcome": (str,),       # success | recovered_failure | fatal_failure
        "travel_s": _NUM,
        "progress": _NUM,
        "odometer_m": _NUM,
    },
    "recovery": {
        "edge": (str,),
        "failure_class": (str,),
        "behavior": (str,),
        "immediate_success": (bool,),
        "x": _NUM,
        "y": _NUM,
        "odometer_m": _NUM,
    },
    "task": {
        "task_id": (str,),
        "kind": (str,),
        "state": (str,),
        "node": (str,),
    },
    "interaction": {
        "node": (str,),
        "interacted": (bool,),
    },
    "trajectory": {
        "traj_id": (str,),
        "poses": (list,),
    },
    "battery": {
        "level": _NUM,
        "flow": (str,),  # charging | draining
    },
    "component": {
        "component": (str,),
        "state": (str,),  # crashed | up
    },
    "run_marker": {
        "marker": (str,),  # start | end
    },
}

_TRAVERSAL_OUTCOMES = ("success", "recovered_failure", "fatal_failure")
_RUN_END_REASONS = ("horizon_end", "unrecoverable_failure", "expert_intervention")


@dataclass(frozen=True)
class EventRecord:
    seq: int
    t: float
    category: str
    payload: dict
    schema_version: int = EVENT_SCHEMA_VERSION

    def to_json(self) -> str:
        return json.dumps(
            {
                "seq": self.seq,
                "t": self.t,
                "category": self.category,
                "schema_version": self.schema_version,
                "payload": self.payload,
            },
            sort_keys=True,
        )


def validate_payload(category: str, payload: dict) -> None:
    """Check a payload against its category schema, naming missing fields."""
    if category not in CATEGORIES:
        raise EventSchemaError(f"unknown event category {category!r}")
    if not isinstance(payload, dict):
        raise EventSchemaError(f"{category}: payload must be an object")
    for name, types in REQUIRED_FIELDS[category].items():
        if name not in payload:
            raise EventSchemaError(f"{category}: payload missing required field {name!r}")
        value = payload[name]
        if not isinstance(value, types) or isinstance(value, bool) and bool not in types:
            raise EventSchemaError(
                f"{category}: field {name!r} has type {type(value).__name__}, "
                f"expected {'/'.join(t.__name__ for t in types)}"
            )
    if category == "traversal" and payload["outcome"] not in _TRAVERSAL_OUTCOMES:
        raise EventSchemaError(
            f"traversal: unknown outcome {payload['outcome']!r}"
        )
    if category == "run_marker":
        if payload["marker"] not in ("start", "end"):
            raise EventSchemaError(f"run_marker: unknown marker {payload['marker']!r}")
        if payload["marker"] == "end":
            reason = payload.get("reason")
            if reason not in _RUN_END_REASONS:
                raise EventSchemaError(f"run_marker: unknown end reason {reason!r}")


class EventStore:
    """Append-only store, optionally file-backed.

    ``append`` validates, assigns the next sequence number, enforces the time
    ordering, and (when file-backed) writes and flushes the line before
    returning.
    """

    def __init__(self, path=None):
        self.path = os.fspath(path) if path is not None else None
        self._records: list[EventRecord] = []
        self._fh = open(self.path, "a", encoding="utf-8") if self.path else None
        self._next_seq = 1
        self._last_t: float | None = None

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def __len__(self) -> int:
        return len(self._records)

    def append(self, t: float, category: str, payload: dict) -> EventRecord:
        validate_payload(category, payload)
        t = float(t)
        new_segment = category == "run_marker" and payload.get("marker") == "start"
        if self._last_t is not None and t < self._last_t and not new_segment:
            raise EventOrderError(
                f"event time {t} regresses below {self._last_t} within a run"
            )
        record = EventRecord(
            seq=self._next_seq, t=t, category=category, payload=payload
        )
        self._records.append(record)
        self._next_seq += 1
        self._last_t = t
        if self._fh is not None:
            self._fh.write(record.to_json() + "\n")
            self._fh.flush()
        return record

    def records(self) -> list[EventRecord]:
        return list(self._records)

    def query(self, t_start: float = float("-inf"), t_end: float = float("inf"),
              categories=None) -> list[EventRecord]:
        """Events with t_start <= t < t_end, optionally filtered by category,
        in sequence order."""
        cats = set(categories) if categories is not None else None
        return [
            r for r in self._records
            if t_start <= r.t < t_end and (cats is None or r.category in cats)
        ]


def read_log(path) -> list[EventRecord]:
    """Parse a JSON Lines log, validating structure line by line."""
    records: list[EventRecord] = []
    last_t: float | None = None
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                doc = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ReplayError(line_no, f"invalid JSON: {exc.msg}") from exc
            try:
                record = EventRecord(
                    seq=int(doc["seq"]),
                    t=float(doc["t"]),
                    category=doc["category"],
                    payload=doc["payload"],
                    schema_version=int(doc["schema_version"]),
                )
            except (KeyError, TypeError, ValueError) as exc:
                raise ReplayError(line_no, f"malformed record: {exc}") from exc
            try:
                validate_payload(record.category, record.payload)
            except EventSchemaError as exc:
                raise ReplayError(line_no, str(exc)) from exc
            new_segment = (
                record.category == "run_marker"
                and record.payload.get("marker") == "start"
            )
            if last_t is not None and record.t < last_t and not new_segment:
                raise ReplayError(
                    line_no,
                    f"event time {record.t} regresses below {last_t} within a run",
                )
            last_t = record.t
            records.append(record)
    return records


@dataclass
class ReplayedState:
    edge_stats: object
    interaction_models: object
    clusters: object
    trajectory_count: int
    feature_count: int


def replay(records, scenario) -> ReplayedState:
    """Rebuild learned state from a log.

    ``scenario`` is the ScenarioConfig the run used; it supplies the map and
    the model constants, so the rebuilt state matches the online state
    exactly (same fold order, same seeds for the nightly clustering).
    """
    from ltasim.activity import Trajectory, cluster_nightly, encode
    from ltasim.errors import DegenerateTrajectoryError
    from ltasim.info_terminal import InteractionModelSet
    from ltasim.navmdp import EdgeStats

    if isinstance(records, EventStore):
        records = records.records()

    topo = scenario.load_topomap()
    fre = scenario.constants.fremen
    periods_s = [h * 3600.0 for h in fre.periods_h]
    stats = EdgeStats(topo.edges.keys(), periods_s=periods_s,
                      order=fre.order, eps=fre.eps)
    terminal_nodes = [
        n.id for n in topo.nodes.values() if "terminal_spot" in n.tags
    ]
    models = InteractionModelSet(
        terminal_nodes, periods_s=periods_s, order=fre.order, eps=fre.eps,
        slot_s=scenario.constants.info_terminal.slot_s,
    )
    act = scenario.constants.activity
    regions = scenario.load_regions()
    features: list = []
    clusters = None
    traj_count = 0

    for rec in records:
        if rec.category == "traversal":
            pay = rec.payload
            if pay["outcome"] == "success":
                duration = pay["travel_s"]
            elif pay["outcome"] == "recovered_failure":
                duration = pay.get("recovery_s", 0.0)
            else:
                duration = 0.0
            stats.record_traversal(
                pay["edge"], pay["t_start"], pay["outcome"], duration
            )
        elif rec.category == "interaction":
            models.record_outcome(
                rec.payload["node"], rec.t, rec.payload["interacted"]
            )
        elif rec.category == "trajectory":
            traj_count += 1
            traj = Trajectory(
                traj_id=rec.payload["traj_id"],
                poses=[tuple(p) for p in rec.payload["poses"]],
            )
            if traj.displacement_ratio() >= act.theta:
                try:
                    features.append(encode(
                        traj, regions,
                        near_m=act.near_m,
                        radial_speed=act.radial_speed_mps,
                    ))
                except DegenerateTrajectoryError:
                    pass
        elif rec.category == "task":
            pay = rec.payload
            if pay["kind"] == "activity_batch_learn" and pay["state"] == "completed":
                n_feat = int(pay.get("n_features", len(features)))
                if n_feat >= 2 * act.k_min:
                    clusters = cluster_nightly(
                        features[:n_feat],
                        k_range=(act.k_min, act.k_max),
                        seed=int(pay["cluster_seed"]),
                        restarts=act.kmeans_restarts,
                        tau_percentile=act.tau_percentile,
                    )
    return ReplayedState(
        edge_stats=stats,
        interaction_models=models,
        clusters=clusters,
        trajectory_count=traj_count,
        feature_count=len(features),
    )
