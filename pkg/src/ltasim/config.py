"""Scenario configuration: one JSON document describing a whole deployment.

A scenario bundles the map, the simulated environment (hazard, door,
interaction and person-flow processes), the task roster, and every tunable
constant of the learning modules. Parsing is strict: unknown keys anywhere in
the document are collected with their dotted paths and rejected in one error.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from ltasim.errors import ConfigError
from ltasim.monitored_nav import RecoveryPolicy, default_recovery_policy
from ltasim.world import (
    DoorProcess,
    PeriodicProcess,
    TrajectoryTemplate,
    WorldConfig,
)

VARIANTS = ("adaptive", "static_nav", "uniform_info")


class _Ctx:
    """Collects problems (unknown keys, bad values) with dotted paths."""

    def __init__(self):
        self.problems: list[str] = []

    def check_keys(self, data: dict, allowed, path: str) -> None:
        for key in sorted(set(data) - set(allowed)):
            self.problems.append(f"unknown key {path}.{key}" if path
                                 else f"unknown key {key}")

    def bad(self, path: str, message: str) -> None:
        self.problems.append(f"{path}: {message}")

    def raise_if_any(self) -> None:
        if self.problems:
            raise ConfigError(self.problems)


@dataclass(frozen=True)
class FremenConstants:
    periods_h: tuple[float, ...] = (1, 2, 3, 4, 6, 8, 12, 24, 48, 72, 96, 120, 144, 168)
    order: int = 2
    eps: float = 0.01

    @property
    def periods_s(self) -> tuple[float, ...]:
        return tuple(h * 3600.0 for h in self.periods_h)


@dataclass(frozen=True)
class NavConstants:
    vi_tol: float = 1e-6
    vi_max_sweeps: int = 10_000
    c_fatal_factor: float = 100.0


@dataclass(frozen=True)
class InfoTerminalConstants:
    slot_s: float = 1800.0
    beta: float = 0.5
    visits_per_day: int = 6


@dataclass(frozen=True)
class ActivityConstants:
    theta: float = 0.5
    near_m: float = 2.0
    radial_speed_mps: float = 0.05
    prefix_fraction: float = 0.2
    tau_percentile: float = 95.0
    k_min: int = 2
    k_max: int = 10
    kmeans_restarts: int = 50
    max_corpus: int = 400


@dataclass(frozen=True)
class ExecutiveConstants:
    reserve: float = 0.15
    safety_margin_s: float = 600.0
    charge_complete: float = 0.95
    restart_latency_s: float = 30.0
    max_crashes_per_day: int = 10
    intervention_latency_s: float = 3600.0
    count_travel_as_active: bool = True
    include_recovery_in_active: bool = True


@dataclass(frozen=True)
class Constants:
    fremen: FremenConstants = FremenConstants()
    nav: NavConstants = NavConstants()
    info_terminal: InfoTerminalConstants = InfoTerminalConstants()
    activity: ActivityConstants = ActivityConstants()
    executive: ExecutiveConstants = ExecutiveConstants()


@dataclass(frozen=True)
class RecoverySettings:
    sleep_s: float = 60.0
    nav_fail_max_help: int = 5
    carpet_exhaust_to_nav_fail: bool = True
    window_s: float = 60.0
    window_m: float = 1.0

    def to_policy(self) -> RecoveryPolicy:
        return default_recovery_policy(
            sleep_s=self.sleep_s,
            nav_fail_max_help=self.nav_fail_max_help,
            carpet_exhaust_to_nav_fail=self.carpet_exhaust_to_nav_fail,
        )


@dataclass(frozen=True)
class TaskDef:
    id: str
    kind: str
    node: str
    max_duration_s: float
    priority: int = 1
    maintenance: bool = False
    repeat: str = "daily"
    window_h: tuple[float, float] | None = None   # daily tasks: hours of day
    window_s: tuple[float, float] | None = None   # one-shot tasks: absolute s

    def window_for_day(self, day: int) -> tuple[float, float]:
        if self.repeat == "daily":
            lo, hi = self.window_h
            return (day * 86_400.0 + lo * 3600.0, day * 86_400.0 + hi * 3600.0)
        return self.window_s


TASK_KINDS = (
    "patrol_check", "door_check", "info_terminal", "activity_batch_learn",
    "db_backup", "charge", "confirm_identity", "custom",
)


@dataclass(frozen=True)
class ScenarioConfig:
    base_dir: Path
    map_path: Path
    regions_path: Path | None
    seed: int
    horizon_days: int
    autonomy_window_h: tuple[float, float]
    variant: str
    tasks: tuple[TaskDef, ...]
    constants: Constants
    recovery: RecoverySettings
    world: WorldConfig
    name: str = "scenario"

    def load_topomap(self):
        from ltasim.topomap import load_map
        return load_map(self.map_path)

    def load_regions(self):
        from ltasim.activity import regions_from_dict
        if self.regions_path is None:
            return []
        with open(self.regions_path, encoding="utf-8") as fh:
            return regions_from_dict(json.load(fh))

    def autonomy_windows(self, horizon_days: int | None = None):
        from ltasim.metrics import daily_windows
        days = self.horizon_days if horizon_days is None else horizon_days
        return daily_windows(days, self.autonomy_window_h)


# -- parsing -------------------------------------------------------------------

def _get(data: dict, key: str, default):
    return data.get(key, default)


def _pair(ctx: _Ctx, data, path: str, default=None):
    if data is None:
        return default
    if not (isinstance(data, (list, tuple)) and len(data) == 2):
        ctx.bad(path, f"expected a [lo, hi] pair, got {data!r}")
        return default
    return (float(data[0]), float(data[1]))


def _parse_process(ctx: _Ctx, data: dict, path: str) -> PeriodicProcess:
    ctx.check_keys(data, ("base", "amplitude", "period_h", "phase_h", "shape", "duty"), path)
    try:
        return PeriodicProcess(
            base=float(_get(data, "base", 0.0)),
            amplitude=float(_get(data, "amplitude", 0.0)),
            period_s=float(_get(data, "period_h", 24.0)) * 3600.0,
            phase_s=float(_get(data, "phase_h", 0.0)) * 3600.0,
            shape=str(_get(data, "shape", "cos")),
            duty=float(_get(data, "duty", 0.5)),
        )
    except ValueError as exc:
        ctx.bad(path, str(exc))
        return PeriodicProcess()


def _parse_door(ctx: _Ctx, data: dict, path: str) -> DoorProcess:
    ctx.check_keys(data, ("period_h", "open_frac", "phase_h"), path)
    return DoorProcess(
        period_s=float(_get(data, "period_h", 24.0)) * 3600.0,
        open_frac=float(_get(data, "open_frac", 0.5)),
        phase_s=float(_get(data, "phase_h", 0.0)) * 3600.0,
    )


def _parse_template(ctx: _Ctx, data: dict, path: str) -> TrajectoryTemplate | None:
    ctx.check_keys(data, ("name", "waypoints", "speed_mps", "count_per_day",
                          "start_window_h", "noise_sigma_m", "pose_spacing_m"), path)
    if "name" not in data or "waypoints" not in data:
        ctx.bad(path, "requires name and waypoints")
        return None
    try:
        return TrajectoryTemplate(
            name=str(data["name"]),
            waypoints=tuple((float(x), float(y)) for x, y in data["waypoints"]),
            speed_mps=float(_get(data, "speed_mps", 1.2)),
            count_per_day=int(_get(data, "count_per_day", 0)),
            start_window_h=_pair(ctx, _get(data, "start_window_h", None),
                                 f"{path}.start_window_h", (8.0, 18.0)),
            noise_sigma_m=float(_get(data, "noise_sigma_m", 0.05)),
            pose_spacing_m=float(_get(data, "pose_spacing_m", 0.25)),
        )
    except (TypeError, ValueError) as exc:
        ctx.bad(path, str(exc))
        return None


def _parse_world(ctx: _Ctx, data: dict, path: str) -> WorldConfig:
    allowed = (
        "hazards", "default_hazard", "doors", "carpet_edges", "fatal_fraction",
        "help_availability", "help_latency_s", "boost_escape_prob",
        "boost_duration_s", "backtrack_factor", "bumper_share",
        "progress_range", "duration_sigma", "duration_clip",
        "interaction_propensity", "trajectory_templates", "components",
        "crash_rate_per_day", "battery_drain_h", "battery_charge_h",
    )
    ctx.check_keys(data, allowed, path)
    hazards = {
        str(edge): _parse_process(ctx, proc, f"{path}.hazards.{edge}")
        for edge, proc in _get(data, "hazards", {}).items()
    }
    doors = {
        str(edge): _parse_door(ctx, proc, f"{path}.doors.{edge}")
        for edge, proc in _get(data, "doors", {}).items()
    }
    propensity = {
        str(node): _parse_process(ctx, proc, f"{path}.interaction_propensity.{node}")
        for node, proc in _get(data, "interaction_propensity", {}).items()
    }
    templates = []
    for i, tdata in enumerate(_get(data, "trajectory_templates", [])):
        template = _parse_template(ctx, tdata, f"{path}.trajectory_templates[{i}]")
        if template is not None:
            templates.append(template)
    fatal = {str(k): float(v) for k, v in _get(data, "fatal_fraction", {}).items()}
    for key, value in fatal.items():
        if key not in ("BUMPER_PRESSED", "NAV_FAIL", "CARPET_STUCK"):
            ctx.bad(f"{path}.fatal_fraction.{key}", "unknown failure class")
        if not 0.0 <= value <= 1.0:
            ctx.bad(f"{path}.fatal_fraction.{key}", f"fraction {value} outside [0, 1]")
    return WorldConfig(
        hazards=hazards,
        default_hazard=_parse_process(ctx, _get(data, "default_hazard", {}),
                                      f"{path}.default_hazard"),
        doors=doors,
        carpet_edges=frozenset(str(e) for e in _get(data, "carpet_edges", [])),
        fatal_fraction=fatal,
        help_availability=float(_get(data, "help_availability", 0.95)),
        help_latency_s=float(_get(data, "help_latency_s", 60.0)),
        boost_escape_prob=float(_get(data, "boost_escape_prob", 0.06)),
        boost_duration_s=float(_get(data, "boost_duration_s", 10.0)),
        backtrack_factor=float(_get(data, "backtrack_factor", 1.0)),
        bumper_share=float(_get(data, "bumper_share", 0.2)),
        progress_range=_pair(ctx, _get(data, "progress_range", None),
                             f"{path}.progress_range", (0.05, 0.95)),
        duration_sigma=float(_get(data, "duration_sigma", 0.10)),
        duration_clip=_pair(ctx, _get(data, "duration_clip", None),
                            f"{path}.duration_clip", (0.5, 1.5)),
        interaction_propensity=propensity,
        trajectory_templates=tuple(templates),
        components=tuple(str(c) for c in _get(data, "components", [])),
        crash_rate_per_day=float(_get(data, "crash_rate_per_day", 0.0)),
        battery_drain_h=float(_get(data, "battery_drain_h", 12.0)),
        battery_charge_h=float(_get(data, "battery_charge_h", 3.0)),
    )


def _parse_task(ctx: _Ctx, data: dict, path: str) -> TaskDef | None:
    allowed = ("id", "kind", "node", "max_duration_s", "priority",
               "maintenance", "repeat", "window_h", "window_s")
    ctx.check_keys(data, allowed, path)
    missing = [k for k in ("id", "kind", "node", "max_duration_s") if k not in data]
    if missing:
        ctx.bad(path, f"missing required keys: {', '.join(missing)}")
        return None
    kind = str(data["kind"])
    if kind not in TASK_KINDS:
        ctx.bad(f"{path}.kind", f"unknown task kind {kind!r}")
    repeat = str(_get(data, "repeat", "daily"))
    if repeat not in ("daily", "once"):
        ctx.bad(f"{path}.repeat", f"must be 'daily' or 'once', got {repeat!r}")
        return None
    window_h = _pair(ctx, _get(data, "window_h", None), f"{path}.window_h")
    window_s = _pair(ctx, _get(data, "window_s", None), f"{path}.window_s")
    if repeat == "daily" and window_h is None:
        ctx.bad(path, "daily tasks require window_h")
        return None
    if repeat == "once" and window_s is None:
        ctx.bad(path, "one-shot tasks require window_s")
        return None
    window = window_h if repeat == "daily" else window_s
    length = (window[1] - window[0]) * (3600.0 if repeat == "daily" else 1.0)
    max_duration = float(data["max_duration_s"])
    if length <= 0:
        ctx.bad(path, "task window is empty")
    elif max_duration > length:
        ctx.bad(path, f"max_duration_s {max_duration} exceeds window length {length}")
    return TaskDef(
        id=str(data["id"]),
        kind=kind,
        node=str(data["node"]),
        max_duration_s=max_duration,
        priority=int(_get(data, "priority", 1)),
        maintenance=bool(_get(data, "maintenance", kind in
                              ("charge", "activity_batch_learn", "db_backup"))),
        repeat=repeat,
        window_h=window_h,
        window_s=window_s,
    )


def _parse_constants(ctx: _Ctx, data: dict, path: str) -> Constants:
    ctx.check_keys(data, ("fremen", "nav", "info_terminal", "activity", "executive"), path)

    fre = _get(data, "fremen", {})
    ctx.check_keys(fre, ("periods_h", "order", "eps"), f"{path}.fremen")
    fremen = FremenConstants(
        periods_h=tuple(float(h) for h in _get(fre, "periods_h",
                                               FremenConstants.periods_h)),
        order=int(_get(fre, "order", 2)),
        eps=float(_get(fre, "eps", 0.01)),
    )

    nav = _get(data, "nav", {})
    ctx.check_keys(nav, ("vi_tol", "vi_max_sweeps", "c_fatal_factor"), f"{path}.nav")
    nav_c = NavConstants(
        vi_tol=float(_get(nav, "vi_tol", 1e-6)),
        vi_max_sweeps=int(_get(nav, "vi_max_sweeps", 10_000)),
        c_fatal_factor=float(_get(nav, "c_fatal_factor", 100.0)),
    )

    info = _get(data, "info_terminal", {})
    ctx.check_keys(info, ("slot_s", "beta", "visits_per_day"), f"{path}.info_terminal")
    info_c = InfoTerminalConstants(
        slot_s=float(_get(info, "slot_s", 1800.0)),
        beta=float(_get(info, "beta", 0.5)),
        visits_per_day=int(_get(info, "visits_per_day", 6)),
    )

    act = _get(data, "activity", {})
    ctx.check_keys(act, ("theta", "near_m", "radial_speed_mps", "prefix_fraction",
                         "tau_percentile", "k_min", "k_max", "kmeans_restarts",
                         "max_corpus"), f"{path}.activity")
    act_c = ActivityConstants(
        theta=float(_get(act, "theta", 0.5)),
        near_m=float(_get(act, "near_m", 2.0)),
        radial_speed_mps=float(_get(act, "radial_speed_mps", 0.05)),
        prefix_fraction=float(_get(act, "prefix_fraction", 0.2)),
        tau_percentile=float(_get(act, "tau_percentile", 95.0)),
        k_min=int(_get(act, "k_min", 2)),
        k_max=int(_get(act, "k_max", 10)),
        kmeans_restarts=int(_get(act, "kmeans_restarts", 50)),
        max_corpus=int(_get(act, "max_corpus", 400)),
    )

    exe = _get(data, "executive", {})
    ctx.check_keys(exe, ("reserve", "safety_margin_s", "charge_complete",
                         "restart_latency_s", "max_crashes_per_day",
                         "intervention_latency_s", "count_travel_as_active",
                         "include_recovery_in_active"), f"{path}.executive")
    exe_c = ExecutiveConstants(
        reserve=float(_get(exe, "reserve", 0.15)),
        safety_margin_s=float(_get(exe, "safety_margin_s", 600.0)),
        charge_complete=float(_get(exe, "charge_complete", 0.95)),
        restart_latency_s=float(_get(exe, "restart_latency_s", 30.0)),
        max_crashes_per_day=int(_get(exe, "max_crashes_per_day", 10)),
        intervention_latency_s=float(_get(exe, "intervention_latency_s", 3600.0)),
        count_travel_as_active=bool(_get(exe, "count_travel_as_active", True)),
        include_recovery_in_active=bool(_get(exe, "include_recovery_in_active", True)),
    )
    return Constants(fremen=fremen, nav=nav_c, info_terminal=info_c,
                     activity=act_c, executive=exe_c)


def parse_scenario(data: dict, base_dir: Path, name: str = "scenario") -> ScenarioConfig:
    ctx = _Ctx()
    allowed = ("name", "map", "regions", "seed", "horizon_days",
               "autonomy_window_h", "variant", "tasks", "constants",
               "recovery", "world")
    ctx.check_keys(data, allowed, "")
    if "map" not in data:
        ctx.bad("map", "required")

    variant = str(_get(data, "variant", "adaptive"))
    if variant not in VARIANTS:
        ctx.bad("variant", f"unknown variant {variant!r} (choose from {', '.join(VARIANTS)})")

    rec = _get(data, "recovery", {})
    ctx.check_keys(rec, ("sleep_s", "nav_fail_max_help", "carpet_exhaust_to_nav_fail",
                         "window_s", "window_m"), "recovery")
    recovery = RecoverySettings(
        sleep_s=float(_get(rec, "sleep_s", 60.0)),
        nav_fail_max_help=int(_get(rec, "nav_fail_max_help", 5)),
        carpet_exhaust_to_nav_fail=bool(_get(rec, "carpet_exhaust_to_nav_fail", True)),
        window_s=float(_get(rec, "window_s", 60.0)),
        window_m=float(_get(rec, "window_m", 1.0)),
    )

    tasks = []
    for i, tdata in enumerate(_get(data, "tasks", [])):
        task = _parse_task(ctx, tdata, f"tasks[{i}]")
        if task is not None:
            tasks.append(task)
    if len({t.id for t in tasks}) != len(tasks):
        ctx.bad("tasks", "duplicate task ids")

    constants = _parse_constants(ctx, _get(data, "constants", {}), "constants")
    world = _parse_world(ctx, _get(data, "world", {}), "world")

    window_h = _pair(ctx, _get(data, "autonomy_window_h", [8.0, 18.0]),
                     "autonomy_window_h", (8.0, 18.0))
    if not (0.0 <= window_h[0] < window_h[1] <= 24.0):
        ctx.bad("autonomy_window_h", f"{window_h!r} must satisfy 0 <= lo < hi <= 24")

    horizon_days = int(_get(data, "horizon_days", 1))
    if horizon_days < 1:
        ctx.bad("horizon_days", "must be >= 1")

    ctx.raise_if_any()

    regions = _get(data, "regions", None)
    return ScenarioConfig(
        base_dir=base_dir,
        map_path=base_dir / str(data["map"]),
        regions_path=(base_dir / str(regions)) if regions else None,
        seed=int(_get(data, "seed", 0)),
        horizon_days=horizon_days,
        autonomy_window_h=window_h,
        variant=variant,
        tasks=tuple(tasks),
        constants=constants,
        recovery=recovery,
        world=world,
        name=str(_get(data, "name", name)),
    )


def load_scenario(path) -> ScenarioConfig:
    path = Path(path)
    with open(path, encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError([f"{path}: invalid JSON ({exc})"]) from exc
    if not isinstance(data, dict):
        raise ConfigError([f"{path}: top level must be an object"])
    return parse_scenario(data, base_dir=path.parent, name=path.stem)
