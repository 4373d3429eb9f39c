"""Deterministic simulated deployment environment.

All stochastic outcomes (edge failures, recovery results, traversal duration
noise, interaction outcomes, person trajectories, component crashes) are
drawn from a single seeded PCG64 stream in strict clock order, so identical
(config, seed) pairs unfold identically. Hazard, door, and interaction
propensity processes are periodic by construction.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from ltasim.errors import WorldError
from ltasim.monitored_nav import BehaviorKind, FailureClass
from ltasim.topomap import TopoMap


@dataclass(frozen=True)
class PeriodicProcess:
    """Periodic probability process p(t), clipped to [0, 1].

    ``shape`` is "cos" (base + amplitude*cos(2*pi*(t - phase)/period)) or
    "square" (base + amplitude inside the duty window starting at phase).
    """

    base: float = 0.0
    amplitude: float = 0.0
    period_s: float = 86_400.0
    phase_s: float = 0.0
    shape: str = "cos"
    duty: float = 0.5

    def __post_init__(self):
        if self.period_s <= 0:
            raise ValueError("period_s must be > 0")
        if self.shape not in ("cos", "square"):
            raise ValueError(f"unknown process shape {self.shape!r}")
        if not 0.0 <= self.duty <= 1.0:
            raise ValueError("duty must lie in [0, 1]")

    def value(self, t: float) -> float:
        if self.shape == "cos":
            raw = self.base + self.amplitude * math.cos(
                2.0 * math.pi * (t - self.phase_s) / self.period_s
            )
        else:
            inside = (t - self.phase_s) % self.period_s < self.duty * self.period_s
            raw = self.base + (self.amplitude if inside else 0.0)
        return min(max(raw, 0.0), 1.0)


@dataclass(frozen=True)
class DoorProcess:
    """Deterministic square-wave door: open iff inside the open window."""

    period_s: float = 86_400.0
    open_frac: float = 0.5
    phase_s: float = 0.0

    def open_probability(self, t: float) -> float:
        inside = (t - self.phase_s) % self.period_s < self.open_frac * self.period_s
        return 1.0 if inside else 0.0


@dataclass(frozen=True)
class TrajectoryTemplate:
    """Waypoint path walked by simulated people, with per-pose noise."""

    name: str
    waypoints: tuple[tuple[float, float], ...]
    speed_mps: float = 1.2
    count_per_day: int = 0
    start_window_h: tuple[float, float] = (8.0, 18.0)
    noise_sigma_m: float = 0.05
    pose_spacing_m: float = 0.25

    def __post_init__(self):
        if len(self.waypoints) < 2:
            raise ValueError(f"template {self.name!r}: needs >= 2 waypoints")
        if self.speed_mps <= 0 or self.pose_spacing_m <= 0:
            raise ValueError(f"template {self.name!r}: speed and spacing must be > 0")


@dataclass
class WorldConfig:
    hazards: dict[str, PeriodicProcess] = field(default_factory=dict)
    default_hazard: PeriodicProcess = PeriodicProcess(base=0.0)
    doors: dict[str, DoorProcess] = field(default_factory=dict)
    carpet_edges: frozenset[str] = frozenset()
    fatal_fraction: dict[str, float] = field(default_factory=dict)
    help_availability: float = 0.95
    help_latency_s: float = 60.0
    boost_escape_prob: float = 0.06
    boost_duration_s: float = 10.0
    backtrack_factor: float = 1.0
    bumper_share: float = 0.2  # non-carpet, non-door failures: bumper vs nav
    progress_range: tuple[float, float] = (0.05, 0.95)
    duration_sigma: float = 0.10
    duration_clip: tuple[float, float] = (0.5, 1.5)
    interaction_propensity: dict[str, PeriodicProcess] = field(default_factory=dict)
    trajectory_templates: tuple[TrajectoryTemplate, ...] = ()
    components: tuple[str, ...] = ()
    crash_rate_per_day: float = 0.0
    battery_drain_h: float = 12.0
    battery_charge_h: float = 3.0

    def fatal_for(self, failure: FailureClass) -> float:
        return self.fatal_fraction.get(failure.value, 0.0)


@dataclass(frozen=True)
class EdgeOutcome:
    success: bool
    duration_s: float
    failure_class: FailureClass | None = None
    fatal: bool = False
    progress: float = 1.0


@dataclass(frozen=True)
class RecoveryOutcome:
    recovered: bool
    duration_s: float


@dataclass(frozen=True)
class ExoEvent:
    """Exogenous timed event surfaced to the caller while the clock advances."""

    t: float
    seq: int
    kind: str  # trajectory | crash | component_up
    payload: dict


class World:
    """Seeded world state: clock, robot position, battery, odometer, and the
    exogenous event queue."""

    def __init__(self, topo: TopoMap, config: WorldConfig, seed: int):
        self.topo = topo
        self.config = config
        self.seed = int(seed)
        self.rng = np.random.Generator(np.random.PCG64(self.seed))
        self.clock = 0.0
        self.robot_node = topo.dock_node.id
        self.odometer_m = 0.0
        self.battery_level = 1.0
        self._drain_per_s = 1.0 / (config.battery_drain_h * 3600.0)
        self._charge_per_s = 1.0 / (config.battery_charge_h * 3600.0)
        self._exo_heap: list[tuple[float, int, ExoEvent]] = []
        self._exo_seq = 0
        self._passed: list[ExoEvent] = []
        self._traj_seq = 0
        self._in_transit = False

    # -- clock, battery, exogenous queue ------------------------------------

    @property
    def docked(self) -> bool:
        return self.robot_node == self.topo.dock_node.id and not self._in_transit

    def advance(self, dt: float, in_transit: bool = False) -> None:
        """Move the clock forward, applying battery flow and collecting any
        exogenous events that fall due. ``in_transit`` forces drain even when
        the robot's planning position is the dock (mid-traversal, recovering)."""
        if dt < 0:
            raise WorldError(f"cannot advance clock by {dt}")
        self._in_transit = in_transit
        try:
            target = self.clock + dt
            while self._exo_heap and self._exo_heap[0][0] <= target:
                _, _, ev = heapq.heappop(self._exo_heap)
                self._apply_battery(max(ev.t - self.clock, 0.0))
                self.clock = max(self.clock, ev.t)
                self._passed.append(ev)
            self._apply_battery(target - self.clock)
            self.clock = target
        finally:
            self._in_transit = False

    def _apply_battery(self, dt: float) -> None:
        if dt <= 0:
            return
        if self.docked:
            self.battery_level = min(1.0, self.battery_level + self._charge_per_s * dt)
        else:
            self.battery_level = max(0.0, self.battery_level - self._drain_per_s * dt)

    def take_passed_events(self) -> list[ExoEvent]:
        out = self._passed
        self._passed = []
        return out

    def enqueue(self, t: float, kind: str, payload: dict) -> None:
        if t < self.clock:
            raise WorldError(f"cannot enqueue event in the past (t={t})")
        ev = ExoEvent(t=t, seq=self._exo_seq, kind=kind, payload=payload)
        self._exo_seq += 1
        heapq.heappush(self._exo_heap, (t, ev.seq, ev))

    # -- geometry -------------------------------------------------------------

    def position_on_edge(self, edge, progress: float) -> tuple[float, float]:
        a = self.topo.node(edge.source).pose
        b = self.topo.node(edge.target).pose
        return (
            a.x + (b.x - a.x) * progress,
            a.y + (b.y - a.y) * progress,
        )

    # -- traversal ------------------------------------------------------------

    def _hazard(self, edge_id: str) -> PeriodicProcess:
        return self.config.hazards.get(edge_id, self.config.default_hazard)

    def attempt_edge(self, edge) -> EdgeOutcome:
        """Attempt one edge traversal from its source node.

        Draw order is fixed: door gate (door edges only), hazard gate, then on
        failure progress / class / fatality, or on success the duration noise.
        """
        if self.robot_node != edge.source:
            raise WorldError(
                f"robot at {self.robot_node!r} cannot attempt edge {edge.id!r} "
                f"from {edge.source!r}"
            )
        t = self.clock
        nominal = edge.nominal_duration
        failure: FailureClass | None = None

        if edge.action == "door_pass":
            door = self.config.doors.get(edge.id)
            if door is not None:
                if self.rng.random() >= door.open_probability(t):
                    failure = FailureClass.NAV_FAIL
        if failure is None:
            if self.rng.random() < self._hazard(edge.id).value(t):
                if edge.id in self.config.carpet_edges:
                    failure = FailureClass.CARPET_STUCK
                elif self.rng.random() < self.config.bumper_share:
                    failure = FailureClass.BUMPER_PRESSED
                else:
                    failure = FailureClass.NAV_FAIL

        if failure is None:
            lo, hi = self.config.duration_clip
            noise = 1.0 + self.config.duration_sigma * self.rng.standard_normal()
            duration = nominal * min(max(noise, lo), hi)
            self.advance(duration, in_transit=True)
            self.odometer_m += edge.nominal_length
            self.robot_node = edge.target
            return EdgeOutcome(success=True, duration_s=duration)

        p_lo, p_hi = self.config.progress_range
        progress = float(self.rng.uniform(p_lo, p_hi))
        fatal = bool(self.rng.random() < self.config.fatal_for(failure))
        duration = nominal * progress
        self.advance(duration, in_transit=True)
        self.odometer_m += edge.nominal_length * progress
        # The robot holds at the source for planning purposes until the edge
        # completes; a failed attempt leaves it there.
        return EdgeOutcome(
            success=False,
            duration_s=duration,
            failure_class=failure,
            fatal=fatal,
            progress=progress,
        )

    def attempt_recovery(self, behavior, edge, failure: FailureClass,
                         progress: float) -> RecoveryOutcome:
        """Apply one recovery behaviour at the current failure site."""
        kind = behavior.kind
        if kind == BehaviorKind.ASK_HELP:
            self.advance(self.config.help_latency_s, in_transit=True)
            recovered = bool(self.rng.random() < self.config.help_availability)
            return RecoveryOutcome(recovered, self.config.help_latency_s)
        if kind == BehaviorKind.SLEEP_RETRY:
            self.advance(behavior.sleep_s, in_transit=True)
            t = self.clock
            if edge.action == "door_pass" and edge.id in self.config.doors:
                blocked = self.rng.random() >= self.config.doors[edge.id].open_probability(t)
            else:
                blocked = self.rng.random() < self._hazard(edge.id).value(t)
            return RecoveryOutcome(not blocked, behavior.sleep_s)
        if kind == BehaviorKind.BACKTRACK:
            duration = progress * edge.nominal_duration * self.config.backtrack_factor
            self.advance(duration, in_transit=True)
            self.odometer_m += edge.nominal_length * progress
            return RecoveryOutcome(True, duration)
        if kind == BehaviorKind.BOOST_VELOCITY:
            self.advance(self.config.boost_duration_s, in_transit=True)
            recovered = bool(self.rng.random() < self.config.boost_escape_prob)
            return RecoveryOutcome(recovered, self.config.boost_duration_s)
        raise WorldError(f"unknown recovery behavior {kind!r}")

    # -- interactions, trajectories, crashes ----------------------------------

    def sample_interaction(self, node_id: str, t: float) -> bool:
        """Draw an interaction outcome from the node's propensity process."""
        proc = self.config.interaction_propensity.get(node_id)
        if proc is None:
            return False
        return bool(self.rng.random() < proc.value(t))

    def sample_day_events(self, day: int) -> int:
        """Populate the exogenous queue with one day's trajectories and
        component crashes. Returns the number of events enqueued."""
        base = day * 86_400.0
        count = 0
        for template in self.config.trajectory_templates:
            for _ in range(template.count_per_day):
                lo, hi = template.start_window_h
                start = base + float(self.rng.uniform(lo * 3600.0, hi * 3600.0))
                poses = self._walk_template(template, start)
                self._traj_seq += 1
                self.enqueue(start, "trajectory", {
                    "traj_id": f"traj-{self._traj_seq:06d}",
                    "template": template.name,
                    "poses": poses,
                })
                count += 1
        if self.config.crash_rate_per_day > 0 and self.config.components:
            n = int(self.rng.poisson(self.config.crash_rate_per_day))
            for _ in range(n):
                t = base + float(self.rng.uniform(0.0, 86_400.0))
                comp = str(self.rng.choice(list(self.config.components)))
                self.enqueue(t, "crash", {"component": comp})
                count += 1
        return count

    def _walk_template(self, template: TrajectoryTemplate, start: float):
        """Sample poses along the waypoint path at fixed spatial spacing."""
        pts = template.waypoints
        poses = []
        t = start
        x, y = pts[0]
        poses.append([t, x, y])
        for (ax, ay), (bx, by) in zip(pts, pts[1:]):
            seg_len = math.hypot(bx - ax, by - ay)
            steps = max(1, int(math.ceil(seg_len / template.pose_spacing_m)))
            for k in range(1, steps + 1):
                frac = k / steps
                px = ax + (bx - ax) * frac
                py = ay + (by - ay) * frac
                t += (seg_len / steps) / template.speed_mps
                poses.append([t, px, py])
        sigma = template.noise_sigma_m
        if sigma > 0:
            noise = self.rng.normal(0.0, sigma, size=(len(poses), 2))
            for row, (dx, dy) in zip(poses, noise):
                row[1] += float(dx)
                row[2] += float(dy)
        return [[float(t), float(px), float(py)] for t, px, py in poses]

    def teleport_to_dock(self) -> None:
        """Expert intervention: place the robot back on the dock."""
        self.robot_node = self.topo.dock_node.id
