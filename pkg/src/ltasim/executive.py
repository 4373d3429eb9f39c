"""The control seat: windowed task scheduling and the main execution loop.

Tasks carry a node, a duration budget, and a time window. A greedy
earliest-deadline scheduler over priority tiers picks what runs next;
navigation goes through learned expected-time policies (or nominal routes for
the static variant) under monitored recovery; charging, nightly batch
learning, and backups run as ordinary maintenance tasks. A watchdog restarts
crashed components and escalates crash storms to an expert intervention.
Every state change is appended to the event store before the loop moves on.

Planning always reads *snapshots* of the learned models, rebuilt by the
nightly batch-learning task, while the live models keep accumulating
observations — so predictions are always served by fresh, fully rebuilt
models and the online/replayed states stay identical.
"""
from __future__ import annotations

import math
import shutil
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ltasim import activity
from ltasim.config import ScenarioConfig, VARIANTS
from ltasim.errors import DegenerateTrajectoryError, RouteNotFoundError
from ltasim.events import EventStore
from ltasim.info_terminal import InteractionModelSet, day_slots, plan_rows, sample_plan
from ltasim.monitored_nav import traverse_monitored
from ltasim.navmdp import EdgeStats, build_mdp, solve
from ltasim.world import World

DAY_S = 86_400.0

# Fixed on-site execution time per task kind (seconds). A task whose kind
# needs longer than its max_duration budget times out and is aborted at
# exactly max_duration.
EXECUTION_DWELL_S = {
    "patrol_check": 120.0,
    "door_check": 60.0,
    "confirm_identity": 120.0,
    "custom": 120.0,
    "db_backup": 300.0,
    "activity_batch_learn": 600.0,
}
CHARGE_PRIORITY = 1000
INFO_VISIT_PRIORITY = 2
CONFIRM_PRIORITY = 3


@dataclass(frozen=True)
class Task:
    id: str
    kind: str
    node: str
    max_duration_s: float
    window: tuple[float, float]
    priority: int = 1
    maintenance: bool = False

    def __post_init__(self):
        lo, hi = self.window
        if hi <= lo:
            raise ValueError(f"task {self.id!r}: empty window {self.window!r}")
        if self.max_duration_s <= 0:
            raise ValueError(f"task {self.id!r}: max_duration_s must be > 0")
        if self.max_duration_s > hi - lo:
            raise ValueError(
                f"task {self.id!r}: max_duration_s {self.max_duration_s} exceeds "
                f"window length {hi - lo}"
            )


@dataclass(frozen=True)
class Placement:
    task: Task
    planned_start: float
    travel_s: float

    @property
    def planned_end(self) -> float:
        return self.planned_start + self.travel_s + self.task.max_duration_s


@dataclass(frozen=True)
class Schedule:
    placements: tuple[Placement, ...]
    dropped: tuple[tuple[Task, str], ...]


def _chain(now: float, seq, travel_time, from_node: str):
    """Lay tasks out in the given timeline order, each at its earliest
    feasible start. Returns the placements, or None if any window breaks."""
    cursor_t, cursor_node = now, from_node
    placements = []
    for task in seq:
        travel = travel_time(cursor_node, task.node, cursor_t)
        if travel is None or math.isinf(travel):
            return None
        start = max(task.window[0], cursor_t)
        end = start + travel + task.max_duration_s
        if end > task.window[1]:
            return None
        placements.append(Placement(task, start, travel))
        cursor_t, cursor_node = end, task.node
    return placements


def schedule(now: float, tasks, travel_time, from_node: str) -> Schedule:
    """Greedy placement: priority tiers first, earliest deadline inside a tier.

    Tasks claim timeline space in (priority desc, deadline asc, id) order;
    each is inserted at the earliest timeline position where the whole chain
    of placements stays feasible — every planned interval
    (start, start + travel + max_duration) inside its window, travel always
    from the preceding placement's node. Tasks that fit nowhere are reported
    dropped, never silently lost.
    """
    order = sorted(tasks, key=lambda t: (-t.priority, t.window[1], t.id))
    seq: list[Task] = []
    best: list[Placement] = []
    dropped: list[tuple[Task, str]] = []
    for task in order:
        placed = None
        for i in range(len(seq) + 1):
            placed = _chain(now, seq[:i] + [task] + seq[i:], travel_time, from_node)
            if placed is not None:
                seq.insert(i, task)
                best = placed
                break
        if placed is None:
            direct = travel_time(from_node, task.node, now)
            if direct is None or math.isinf(direct):
                dropped.append((task, "unreachable"))
            else:
                dropped.append((task, "window_overflow"))
    return Schedule(tuple(best), tuple(dropped))


def battery_guard(level: float, drain_per_s: float, travel_to_dock_s: float,
                  reserve: float = 0.15, margin_s: float = 600.0) -> bool:
    """True when the projected level after returning to the dock (plus a
    safety margin) would dip to the reserve."""
    return level - drain_per_s * (travel_to_dock_s + margin_s) <= reserve


@dataclass
class ComponentHealth:
    name: str
    up: bool = True
    restarting_until: float | None = None
    crashes_today: int = 0


class Executive:
    """Owns the world, the learned models, and the event store for one run."""

    def __init__(self, scenario: ScenarioConfig, seed: int | None = None,
                 variant: str | None = None, log_path=None, out_dir=None):
        self.scenario = scenario
        self.seed = scenario.seed if seed is None else int(seed)
        self.variant = variant or scenario.variant
        if self.variant not in VARIANTS:
            raise ValueError(f"unknown variant {self.variant!r}")
        self.topo = scenario.load_topomap()
        self.regions = scenario.load_regions()
        self.world = World(self.topo, scenario.world, self.seed)
        self.recovery_policy = scenario.recovery.to_policy()
        self.store = EventStore(log_path)
        self.out_dir = Path(out_dir) if out_dir else None

        c = scenario.constants
        periods_s = list(c.fremen.periods_s)
        self.stats = EdgeStats(self.topo.edges.keys(), periods_s=periods_s,
                               order=c.fremen.order, eps=c.fremen.eps)
        terminal_nodes = [
            n.id for n in self.topo.nodes.values() if "terminal_spot" in n.tags
        ]
        self.imodels = InteractionModelSet(
            terminal_nodes, periods_s=periods_s, order=c.fremen.order,
            eps=c.fremen.eps, slot_s=c.info_terminal.slot_s,
        )
        # planning snapshots, refreshed by the nightly batch-learning task
        self._stats_snapshot = self.stats.snapshot()
        self._imodels_snapshot = self.imodels.snapshot()
        self.features: list[np.ndarray] = []
        self.clusters = None

        self.components = {
            name: ComponentHealth(name) for name in scenario.world.components
        }
        self.c_fatal = c.nav.c_fatal_factor * sum(
            e.nominal_duration for e in self.topo.edges.values()
        )
        self._travel_cache: dict[tuple[str, str], float] = {}
        self._drain_per_s = 1.0 / (scenario.world.battery_drain_h * 3600.0)
        self._charge_per_s = 1.0 / (scenario.world.battery_charge_h * 3600.0)

        self._pending: list[Task] = []
        self._blocked: set[str] = set()  # task ids waiting on a down component
        self._reset_pending: str | None = None
        self.task_states: dict[str, str] = {}
        self.nav_failures = 0
        self.run_count = 1
        self.plan_rows: list = []
        self.uniform_fallback_days = 0
        self._charge_seq = 0
        self._confirm_seq = 0
        self._day = 0

    # -- event plumbing --------------------------------------------------------

    def _append(self, t: float, category: str, payload: dict) -> None:
        self.store.append(t, category, payload)

    def _task_event(self, task: Task, state: str, t: float, **extra) -> None:
        payload = {
            "task_id": task.id,
            "kind": task.kind,
            "state": state,
            "node": task.node,
            "maintenance": task.maintenance,
            "priority": task.priority,
        }
        payload.update(extra)
        self._append(t, "task", payload)
        if state in ("completed", "failed", "dropped", "deferred"):
            self.task_states[task.id] = state
            if task in self._pending:
                self._pending.remove(task)

    def _advance_to(self, t: float) -> None:
        if t > self.world.clock:
            self.world.advance(t - self.world.clock)
        self._drain_exo()
        self._update_components()

    def _drain_exo(self) -> None:
        for ev in sorted(self.world.take_passed_events(),
                         key=lambda e: (e.t, e.seq)):
            self._dispatch_exo(ev)

    def _dispatch_exo(self, ev) -> None:
        if ev.kind == "trajectory":
            self._on_trajectory(ev)
        elif ev.kind == "crash":
            self._on_crash(ev)

    def _on_trajectory(self, ev) -> None:
        act = self.scenario.constants.activity
        payload = {
            "traj_id": ev.payload["traj_id"],
            "poses": ev.payload["poses"],
            "template": ev.payload.get("template", ""),
        }
        traj = activity.Trajectory(ev.payload["traj_id"],
                                   [tuple(p) for p in ev.payload["poses"]])
        feature = None
        if traj.displacement_ratio() >= act.theta and self.regions:
            try:
                feature = activity.encode(
                    traj, self.regions, near_m=act.near_m,
                    radial_speed=act.radial_speed_mps,
                )
            except DegenerateTrajectoryError:
                feature = None
        if self.clusters is not None and feature is not None:
            try:
                res = activity.classify_partial(
                    self.clusters, traj, self.regions,
                    prefix_fraction=act.prefix_fraction,
                    near_m=act.near_m, radial_speed=act.radial_speed_mps,
                )
            except (DegenerateTrajectoryError, ValueError):
                res = None
            if res is not None:
                payload["cluster"] = res.cluster
                payload["novel"] = res.novel
                if res.novel:
                    self._spawn_confirm_task(traj, ev.t)
        self._append(ev.t, "trajectory", payload)
        if feature is not None:
            self.features.append(feature)

    def _spawn_confirm_task(self, traj, t: float) -> None:
        day_end = (self._day + 1) * DAY_S
        window = (t, min(t + 3600.0, day_end))
        if window[1] - window[0] < EXECUTION_DWELL_S["confirm_identity"] + 60.0:
            return
        last = traj.poses[-1]
        node = min(
            self.topo.nodes.values(),
            key=lambda n: math.hypot(n.pose.x - last[1], n.pose.y - last[2]),
        )
        self._confirm_seq += 1
        self._pending.append(Task(
            id=f"confirm-{self._confirm_seq:04d}",
            kind="confirm_identity",
            node=node.id,
            max_duration_s=EXECUTION_DWELL_S["confirm_identity"],
            window=window,
            priority=CONFIRM_PRIORITY,
        ))

    def _on_crash(self, ev) -> None:
        name = ev.payload["component"]
        comp = self.components.setdefault(name, ComponentHealth(name))
        comp.up = False
        comp.restarting_until = ev.t + self.scenario.constants.executive.restart_latency_s
        comp.crashes_today += 1
        self._append(ev.t, "component", {"component": name, "state": "crashed"})
        if comp.crashes_today > self.scenario.constants.executive.max_crashes_per_day:
            self._reset_pending = "expert_intervention"

    def _update_components(self) -> None:
        now = self.world.clock
        for comp in self.components.values():
            if not comp.up and comp.restarting_until is not None \
                    and now >= comp.restarting_until:
                comp.up = True
                self._append(now, "component", {
                    "component": comp.name,
                    "state": "up",
                    "up_at": comp.restarting_until,
                })
                comp.restarting_until = None

    # -- navigation -------------------------------------------------------------

    def _travel_time(self, a: str, b: str, t: float = 0.0) -> float:
        """Nominal route duration, used for scheduling in every variant."""
        key = (a, b)
        if key not in self._travel_cache:
            try:
                _, duration = self.topo.nominal_route(a, b)
            except RouteNotFoundError:
                duration = math.inf
            self._travel_cache[key] = duration
        return self._travel_cache[key]

    def _navigate(self, goal: str) -> tuple[bool, bool]:
        """Drive the robot to ``goal``. Returns (arrived, fatal)."""
        policy = None
        if self.variant != "static_nav" and self.world.robot_node != goal:
            mdp = build_mdp(self.topo, self._stats_snapshot, self.world.clock,
                            c_fatal=self.c_fatal)
            nav = self.scenario.constants.nav
            policy = solve(mdp, goal, tol=nav.vi_tol,
                           max_sweeps=nav.vi_max_sweeps)
        max_steps = 4 * len(self.topo.nodes) + 8
        steps = 0
        while self.world.robot_node != goal:
            if steps >= max_steps:
                return False, False
            node = self.world.robot_node
            if policy is not None:
                edge_id = policy.chosen.get(node)
                if edge_id is None:
                    return False, False
                edge = self.topo.edge(edge_id)
            else:
                try:
                    route, _ = self.topo.nominal_route(node, goal)
                except RouteNotFoundError:
                    return False, False
                edge = route[0]
            result = traverse_monitored(edge, self.recovery_policy, self.world)
            self._log_traversal(edge, result)
            if result.fatal:
                return False, True
            if result.status == "failed_exhausted":
                return False, False
            steps += 1
        return True, False

    def _log_traversal(self, edge, result) -> None:
        """Fold a traversal into the live stats and append its events in time
        order, interleaved with any exogenous events that fired meanwhile."""
        items: list[tuple[float, int, str, object]] = []
        records = result.records
        rec_idx = 0
        for att in result.attempts:
            resolution = att.t_start + att.travel_s + att.recovery_s
            last_odo = None
            while rec_idx < len(records) and records[rec_idx].t <= resolution + 1e-9:
                r = records[rec_idx]
                items.append((r.t, 0, "recovery", r))
                last_odo = r.odometer_m
                rec_idx += 1
            if att.outcome == "success":
                odo = self.world.odometer_m
            elif last_odo is not None:
                odo = last_odo
            else:
                odo = att.odometer_at_fail
            items.append((resolution, 1, "attempt", (att, odo)))
        while rec_idx < len(records):
            r = records[rec_idx]
            items.append((r.t, 0, "recovery", r))
            rec_idx += 1
        for ev in self.world.take_passed_events():
            items.append((ev.t, 2, "exo", ev))
        items.sort(key=lambda it: (it[0], it[1]))

        for t, _, kind, data in items:
            if kind == "recovery":
                r = data
                self._append(t, "recovery", {
                    "edge": r.edge_id,
                    "failure_class": r.failure.value,
                    "behavior": r.behavior.value,
                    "immediate_success": r.immediate_success,
                    "x": r.x,
                    "y": r.y,
                    "odometer_m": r.odometer_m,
                    "offset_m": r.offset_m,
                })
            elif kind == "attempt":
                att, odo = data
                if att.outcome == "success":
                    duration = att.travel_s
                elif att.outcome == "recovered_failure":
                    duration = att.recovery_s
                else:
                    duration = 0.0
                self.stats.record_traversal(edge.id, att.t_start, att.outcome,
                                            duration)
                if att.outcome != "success":
                    self.nav_failures += 1
                payload = {
                    "edge": edge.id,
                    "t_start": att.t_start,
                    "outcome": att.outcome,
                    "travel_s": att.travel_s,
                    "progress": att.progress,
                    "odometer_m": odo,
                    "recovery_s": att.recovery_s,
                }
                if att.t_fail is not None:
                    payload["t_fail"] = att.t_fail
                    payload["odometer_at_fail"] = att.odometer_at_fail
                self._append(t, "traversal", payload)
            else:
                self._dispatch_exo(data)
        self._update_components()

    # -- run resets ---------------------------------------------------------------

    def _do_reset(self, reason: str) -> None:
        now = self.world.clock
        self._append(now, "run_marker", {"marker": "end", "reason": reason})
        self.world.teleport_to_dock()
        self.world.advance(self.scenario.constants.executive.intervention_latency_s)
        self._drain_exo()
        for comp in self.components.values():
            comp.up = True
            comp.restarting_until = None
            comp.crashes_today = 0
        self._append(self.world.clock, "run_marker", {"marker": "start"})
        self.run_count += 1

    # -- task execution --------------------------------------------------------

    def _execution_time(self, task: Task) -> float:
        if task.kind == "charge":
            target = self.scenario.constants.executive.charge_complete
            deficit = max(0.0, target - self.world.battery_level)
            return deficit / self._charge_per_s
        if task.kind == "info_terminal":
            return min(600.0, self.scenario.constants.info_terminal.slot_s)
        return EXECUTION_DWELL_S.get(task.kind, 120.0)

    def _execute(self, placement: Placement) -> None:
        task = placement.task
        self._task_event(task, "started", self.world.clock,
                         planned_start=placement.planned_start,
                         travel_s=placement.travel_s)
        arrived, fatal = self._navigate(task.node)
        if fatal:
            self._task_event(task, "failed", self.world.clock,
                             reason="navigation")
            self._reset_pending = "unrecoverable_failure"
            return
        if not arrived:
            self._task_event(task, "failed", self.world.clock,
                             reason="navigation")
            return

        t_exec = self.world.clock
        self._task_event(task, "executing", t_exec)
        needed = self._execution_time(task)
        if needed > task.max_duration_s:
            self.world.advance(task.max_duration_s)
            self._drain_exo()
            self._task_event(task, "failed", t_exec + task.max_duration_s,
                             reason="timeout")
            self._update_components()
            return
        if task.kind == "charge":
            self._append(t_exec, "battery", {
                "level": self.world.battery_level, "flow": "charging",
            })
        if needed > 0:
            self.world.advance(needed)
            self._drain_exo()
        t_done = self.world.clock
        extra = self._task_side_effects(task, t_done)
        self._task_event(task, "completed", t_done, **extra)
        self._update_components()

    def _task_side_effects(self, task: Task, t: float) -> dict:
        if task.kind == "info_terminal":
            interacted = self.world.sample_interaction(task.node, t)
            self.imodels.record_outcome(task.node, t, interacted)
            self._append(t, "interaction", {
                "node": task.node, "interacted": bool(interacted),
            })
            return {"interacted": bool(interacted)}
        if task.kind == "charge":
            self._append(t, "battery", {
                "level": self.world.battery_level, "flow": "charging",
            })
            return {"level": self.world.battery_level}
        if task.kind == "activity_batch_learn":
            return self._nightly_learn(t)
        if task.kind == "db_backup":
            self._backup_log()
            return {}
        return {}

    def _nightly_learn(self, t: float) -> dict:
        """Rebuild planning snapshots and re-cluster the trajectory corpus.

        The clustering seed is derived from (scenario seed, day) and recorded
        in the completion payload so replay re-runs it identically."""
        act = self.scenario.constants.activity
        self.stats.rebuild()
        self.imodels.rebuild()
        self._stats_snapshot = self.stats.snapshot()
        self._imodels_snapshot = self.imodels.snapshot()
        n_features = min(len(self.features), act.max_corpus)
        cluster_seed = (self.seed * 1_000_003 + self._day * 97 + 13) % (2 ** 31)
        if n_features >= 2 * act.k_min:
            self.clusters = activity.cluster_nightly(
                self.features[:n_features],
                k_range=(act.k_min, act.k_max),
                seed=cluster_seed,
                restarts=act.kmeans_restarts,
                tau_percentile=act.tau_percentile,
            )
        return {"cluster_seed": cluster_seed, "n_features": n_features}

    def _backup_log(self) -> None:
        if self.out_dir is None or self.store.path is None:
            return
        backups = self.out_dir / "backups"
        backups.mkdir(parents=True, exist_ok=True)
        shutil.copyfile(self.store.path,
                        backups / f"events-day{self._day:03d}.jsonl")

    # -- day preparation ---------------------------------------------------------

    def _plan_seed(self, day: int) -> int:
        return (self.seed * 1_000_003 + day * 97 + 13) % (2 ** 31)

    def _instantiate_day(self, day: int) -> list[Task]:
        out = []
        for td in self.scenario.tasks:
            if td.repeat == "once":
                if int(td.window_s[0] // DAY_S) != day:
                    continue
                out.append(Task(
                    id=td.id, kind=td.kind, node=td.node,
                    max_duration_s=td.max_duration_s, window=td.window_s,
                    priority=td.priority, maintenance=td.maintenance,
                ))
            else:
                out.append(Task(
                    id=f"{td.id}-d{day:03d}", kind=td.kind, node=td.node,
                    max_duration_s=td.max_duration_s,
                    window=td.window_for_day(day),
                    priority=td.priority, maintenance=td.maintenance,
                ))
        out.extend(self._plan_info_visits(day))
        return out

    def _plan_info_visits(self, day: int) -> list[Task]:
        info = self.scenario.constants.info_terminal
        if info.visits_per_day <= 0 or not self.imodels.models:
            return []
        window_h = self.scenario.autonomy_window_h
        slots = day_slots(day, window_h, info.slot_s)
        n_visits = min(info.visits_per_day, len(slots))
        if n_visits == 0:
            return []
        rng = np.random.Generator(np.random.PCG64(self._plan_seed(day)))
        plan = sample_plan(
            self._imodels_snapshot, day, n_visits, rng, window_h=window_h,
            beta=info.beta, uniform=(self.variant == "uniform_info"),
        )
        if plan.uniform_fallback and self.variant != "uniform_info":
            self.uniform_fallback_days += 1
        self.plan_rows.extend(plan_rows(plan))
        dwell = min(600.0, info.slot_s)
        tasks = []
        for i, visit in enumerate(plan.visits):
            tasks.append(Task(
                id=f"info-d{day:03d}-{i:02d}",
                kind="info_terminal",
                node=visit.node,
                max_duration_s=dwell,
                window=(visit.slot_start, visit.slot_start + info.slot_s),
                priority=INFO_VISIT_PRIORITY,
            ))
        return tasks

    def _maybe_charge_task(self) -> None:
        if any(t.kind == "charge" for t in self._pending):
            return
        exe = self.scenario.constants.executive
        dock = self.topo.dock_node.id
        travel = self._travel_time(self.world.robot_node, dock)
        if math.isinf(travel):
            return
        if not battery_guard(self.world.battery_level, self._drain_per_s,
                             travel, reserve=exe.reserve,
                             margin_s=exe.safety_margin_s):
            return
        now = self.world.clock
        full_time = 1.0 / self._charge_per_s
        self._charge_seq += 1
        self._pending.append(Task(
            id=f"charge-{self._charge_seq:04d}",
            kind="charge",
            node=dock,
            max_duration_s=full_time + 600.0,
            window=(now, now + travel + full_time + 7200.0),
            priority=CHARGE_PRIORITY,
            maintenance=True,
        ))

    # -- main loop -----------------------------------------------------------------

    def _component_blocked(self, task: Task) -> bool:
        comp = self.components.get(task.kind)
        return comp is not None and not comp.up

    def _terminalize_dead(self) -> None:
        now = self.world.clock
        for task in list(self._pending):
            if now >= task.window[1]:
                if self._component_blocked(task):
                    self._task_event(task, "deferred", now,
                                     reason="component_down")
                else:
                    self._task_event(task, "dropped", now,
                                     reason="window_closed")

    def _idle_until(self, target: float) -> None:
        """Advance through dead time, stopping early if the battery guard
        would trip off-dock."""
        now = self.world.clock
        exe = self.scenario.constants.executive
        dock = self.topo.dock_node.id
        if self.world.robot_node != dock:
            travel = self._travel_time(self.world.robot_node, dock)
            slack = (self.world.battery_level - exe.reserve) / self._drain_per_s \
                - travel - exe.safety_margin_s
            target = min(target, now + max(slack, 60.0))
        self._advance_to(target)

    def _day_loop(self, day_end: float) -> None:
        while self.world.clock < day_end:
            if self._reset_pending:
                reason, self._reset_pending = self._reset_pending, None
                self._do_reset(reason)
                continue
            self._terminalize_dead()
            self._maybe_charge_task()
            now = self.world.clock
            ready = [
                t for t in self._pending
                if not self._component_blocked(t)
            ]
            sched = schedule(now, ready, self._travel_time,
                             self.world.robot_node)
            if sched.placements and sched.placements[0].planned_start <= now:
                self._execute(sched.placements[0])
                continue
            horizons = [day_end]
            if sched.placements:
                horizons.append(sched.placements[0].planned_start)
            for t in self._pending:
                if t.window[0] > now:
                    horizons.append(t.window[0])
                if t.window[1] > now:
                    horizons.append(t.window[1])
            for comp in self.components.values():
                if comp.restarting_until is not None and comp.restarting_until > now:
                    horizons.append(comp.restarting_until)
            target = min(h for h in horizons if h > now)
            self._idle_until(target)

    def run(self) -> dict:
        """Run the full horizon; returns a small machine-readable summary."""
        horizon_s = self.scenario.horizon_days * DAY_S
        self._append(0.0, "run_marker", {"marker": "start"})
        self._append(0.0, "battery", {
            "level": self.world.battery_level, "flow": "charging",
        })
        for day in range(self.scenario.horizon_days):
            self._day = day
            self._advance_to(day * DAY_S)
            if self._reset_pending:
                reason, self._reset_pending = self._reset_pending, None
                self._do_reset(reason)
            for comp in self.components.values():
                comp.crashes_today = 0
            self.world.sample_day_events(day)
            self._pending.extend(self._instantiate_day(day))
            self._day_loop((day + 1) * DAY_S)
        self._advance_to(horizon_s)
        if self._reset_pending:
            reason, self._reset_pending = self._reset_pending, None
            self._do_reset(reason)
        for task in list(self._pending):
            self._task_event(task, "deferred", horizon_s, reason="horizon")
        self._append(horizon_s, "run_marker",
                     {"marker": "end", "reason": "horizon_end"})
        self.store.close()
        state_counts: dict[str, int] = {}
        for state in self.task_states.values():
            state_counts[state] = state_counts.get(state, 0) + 1
        return {
            "variant": self.variant,
            "seed": self.seed,
            "horizon_days": self.scenario.horizon_days,
            "runs": self.run_count,
            "nav_failures": self.nav_failures,
            "battery_level": self.world.battery_level,
            "odometer_m": self.world.odometer_m,
            "task_states": state_counts,
            "uniform_fallback_days": self.uniform_fallback_days,
            "features": len(self.features),
            "clusters_k": None if self.clusters is None else self.clusters.k,
        }
