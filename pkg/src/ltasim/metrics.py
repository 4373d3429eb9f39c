"""Long-horizon service metrics computed from event logs.

Everything here is a pure function of a sealed record sequence: continuous-run
segmentation, exact interval algebra for the autonomy percentage, distance and
task tallies, per-run histograms, and the recovery classification table. The
same log always yields the same report.
"""
from __future__ import annotations

from dataclasses import dataclass

from ltasim.errors import EventOrderError
from ltasim.monitored_nav import (
    BehaviorKind,
    FailureClass,
    NavEvent,
    RecoveryCounts,
    classify_recoveries,
    recovery_table_rows,
)

TERMINAL_TASK_STATES = frozenset({"completed", "failed", "dropped", "deferred"})
DEFAULT_MAINTENANCE_KINDS = frozenset({"charge", "activity_batch_learn", "db_backup"})


# -- interval algebra ---------------------------------------------------------

@dataclass(frozen=True)
class Interval:
    """Half-open [start, end) span of simulated seconds."""

    start: float
    end: float

    def __post_init__(self):
        if self.end < self.start:
            raise ValueError(f"interval end {self.end} before start {self.start}")

    @property
    def duration(self) -> float:
        return self.end - self.start


def merge_intervals(intervals) -> list[Interval]:
    """Union of intervals as a sorted, disjoint list (touching spans merge)."""
    spans = sorted((iv for iv in intervals if iv.duration > 0),
                   key=lambda iv: (iv.start, iv.end))
    out: list[Interval] = []
    for iv in spans:
        if out and iv.start <= out[-1].end:
            if iv.end > out[-1].end:
                out[-1] = Interval(out[-1].start, iv.end)
        else:
            out.append(iv)
    return out


def intersect_intervals(a, b) -> list[Interval]:
    """Intersection of two interval unions."""
    xs, ys = merge_intervals(a), merge_intervals(b)
    out: list[Interval] = []
    i = j = 0
    while i < len(xs) and j < len(ys):
        lo = max(xs[i].start, ys[j].start)
        hi = min(xs[i].end, ys[j].end)
        if hi > lo:
            out.append(Interval(lo, hi))
        if xs[i].end <= ys[j].end:
            i += 1
        else:
            j += 1
    return out


def subtract_intervals(a, b) -> list[Interval]:
    """Set difference a − b over interval unions."""
    xs, ys = merge_intervals(a), merge_intervals(b)
    out: list[Interval] = []
    j = 0
    for iv in xs:
        lo = iv.start
        while j < len(ys) and ys[j].end <= lo:
            j += 1
        k = j
        while k < len(ys) and ys[k].start < iv.end:
            if ys[k].start > lo:
                out.append(Interval(lo, ys[k].start))
            lo = max(lo, ys[k].end)
            if ys[k].end >= iv.end:
                break
            k += 1
        if lo < iv.end:
            out.append(Interval(lo, iv.end))
    return out


def total_duration(intervals) -> float:
    return sum(iv.duration for iv in merge_intervals(intervals))


# -- continuous-run segmentation ----------------------------------------------

TERMINATIONS = ("unrecoverable_failure", "expert_intervention", "horizon_end")


@dataclass(frozen=True)
class RunSegment:
    start: float
    end: float
    termination: str

    @property
    def duration(self) -> float:
        return self.end - self.start


def segment_runs(records) -> list[RunSegment]:
    """Split a log into continuous runs delimited by run_marker records.

    A run opens at each start marker and closes at the next end marker (whose
    payload carries the termination reason). A trailing open run closes at the
    final record's timestamp as a horizon end."""
    segments: list[RunSegment] = []
    open_t: float | None = None
    last_t: float | None = None
    for rec in records:
        last_t = rec.t
        if rec.category != "run_marker":
            continue
        marker = rec.payload["marker"]
        if marker == "start":
            if open_t is not None:
                raise EventOrderError(
                    f"run start marker at t={rec.t} while a run is already open"
                )
            open_t = rec.t
        elif marker == "end":
            if open_t is None:
                raise EventOrderError(
                    f"run end marker at t={rec.t} without a matching start"
                )
            reason = rec.payload.get("reason", "horizon_end")
            segments.append(RunSegment(open_t, rec.t, reason))
            open_t = None
    if open_t is not None and last_t is not None:
        segments.append(RunSegment(open_t, last_t, "horizon_end"))
    return segments


def run_intervals(segments) -> list[Interval]:
    return [Interval(s.start, s.end) for s in segments if s.end > s.start]


# -- task activity ------------------------------------------------------------

def _is_maintenance(payload: dict) -> bool:
    if "maintenance" in payload:
        return bool(payload["maintenance"])
    return payload.get("kind") in DEFAULT_MAINTENANCE_KINDS


def task_intervals(records, from_state: str = "started",
                   include_maintenance: bool = False) -> list[Interval]:
    """[open-state, terminal-state) spans per task.

    ``from_state`` selects what opens a span: "started" counts travel toward
    the task as active, "executing" counts on-site execution only. Tasks still
    open at the end of the log close at the final record's timestamp."""
    opens: dict[str, tuple[float, bool]] = {}
    out: list[Interval] = []
    last_t = None
    for rec in records:
        last_t = rec.t
        if rec.category != "task":
            continue
        pay = rec.payload
        tid, state = pay["task_id"], pay["state"]
        if state == from_state:
            opens[tid] = (rec.t, _is_maintenance(pay))
        elif state in TERMINAL_TASK_STATES and tid in opens:
            t0, maint = opens.pop(tid)
            if include_maintenance or not maint:
                out.append(Interval(t0, rec.t))
    if last_t is not None:
        for t0, maint in opens.values():
            if include_maintenance or not maint:
                out.append(Interval(t0, last_t))
    return out


def recovery_intervals(records) -> list[Interval]:
    """Spans spent in recovery behaviours, from resolved traversal records."""
    out = []
    for rec in records:
        if rec.category != "traversal":
            continue
        pay = rec.payload
        rec_s = float(pay.get("recovery_s", 0.0))
        if pay["outcome"] == "recovered_failure" and rec_s > 0:
            out.append(Interval(rec.t - rec_s, rec.t))
    return out


def a_percent(records, windows, count_travel: bool = True,
              include_recovery: bool = True) -> float:
    """Active-task time as a percentage of permitted autonomous time.

    Numerator: non-maintenance task spans (travel included when
    ``count_travel``) intersected with the windows; recovery time inside those
    spans is excluded when ``include_recovery`` is false. Denominator: windows
    intersected with continuous-run segments."""
    windows = merge_intervals(windows)
    if not windows:
        raise ValueError("autonomy windows must be non-empty")
    active = task_intervals(
        records, from_state="started" if count_travel else "executing"
    )
    if not include_recovery:
        active = subtract_intervals(active, recovery_intervals(records))
    numerator = total_duration(intersect_intervals(active, windows))
    denominator = total_duration(
        intersect_intervals(windows, run_intervals(segment_runs(records)))
    )
    if denominator <= 0:
        return 0.0
    return 100.0 * numerator / denominator


def daily_windows(horizon_days: int, window_h: tuple[float, float]) -> list[Interval]:
    """One autonomy window per simulated day, e.g. office hours (8, 18)."""
    lo, hi = float(window_h[0]), float(window_h[1])
    if not 0.0 <= lo < hi <= 24.0:
        raise ValueError(f"window hours {window_h!r} must satisfy 0 <= lo < hi <= 24")
    return [
        Interval(day * 86_400.0 + lo * 3600.0, day * 86_400.0 + hi * 3600.0)
        for day in range(int(horizon_days))
    ]


def daily_a_percent(records, windows, **kwargs) -> list[tuple[int, float]]:
    """Per-day autonomy percentage, one row per day that has window time."""
    by_day: dict[int, list[Interval]] = {}
    for w in merge_intervals(windows):
        by_day.setdefault(int(w.start // 86_400), []).append(w)
    return [
        (day, a_percent(records, by_day[day], **kwargs))
        for day in sorted(by_day)
    ]


# -- scalar tallies -----------------------------------------------------------

def distance_m(records, topo) -> float:
    """Forward progress over edges: progress fraction × nominal edge length,
    summed over every traversal attempt (partial progress on failures counts;
    backtracking mileage does not)."""
    total = 0.0
    for rec in records:
        if rec.category == "traversal":
            total += (float(rec.payload["progress"])
                      * topo.edge(rec.payload["edge"]).nominal_length)
    return total


def tasks_completed(records) -> int:
    return sum(
        1 for rec in records
        if rec.category == "task" and rec.payload["state"] == "completed"
    )


# -- headline report ----------------------------------------------------------

@dataclass(frozen=True)
class LtaReport:
    max_tsl_s: float
    cumulative_tsl_s: float
    run_count: int
    a_percent: float
    distance_km: float
    tasks_completed: int
    run_lengths_s: tuple[float, ...]


def compute_report(records, windows, topo, count_travel: bool = True,
                   include_recovery: bool = True) -> LtaReport:
    records = list(records)
    segments = segment_runs(records)
    lengths = tuple(s.duration for s in segments)
    return LtaReport(
        max_tsl_s=max(lengths, default=0.0),
        cumulative_tsl_s=sum(lengths),
        run_count=len(segments),
        a_percent=a_percent(records, windows, count_travel=count_travel,
                            include_recovery=include_recovery),
        distance_km=distance_m(records, topo) / 1000.0,
        tasks_completed=tasks_completed(records),
        run_lengths_s=lengths,
    )


def format_duration(seconds: float) -> str:
    seconds = max(0.0, float(seconds))
    days, rem = divmod(int(round(seconds)), 86_400)
    hours, rem = divmod(rem, 3600)
    minutes = rem // 60
    return f"{days} d {hours} h {minutes} m"


def report_rows(report: LtaReport) -> list[tuple[str, str]]:
    return [
        ("Total Distance Travelled", f"{report.distance_km:.2f} km"),
        ("Total Tasks Completed", str(report.tasks_completed)),
        ("Max TSL", format_duration(report.max_tsl_s)),
        ("Cumulative TSL", format_duration(report.cumulative_tsl_s)),
        ("Individual Continuous Runs", str(report.run_count)),
        ("Autonomy Percentage (A%)", f"{report.a_percent:.2f}%"),
    ]


def summary_text(report: LtaReport) -> str:
    rows = report_rows(report)
    width = max(len(label) for label, _ in rows)
    lines = [f"{label.ljust(width)}  {value}" for label, value in rows]
    return "\n".join(lines) + "\n"


def run_histogram_csv(segments) -> str:
    lines = ["run,start_s,end_s,length_s,termination"]
    for i, seg in enumerate(segments, start=1):
        lines.append(
            f"{i},{seg.start:.1f},{seg.end:.1f},{seg.duration:.1f},{seg.termination}"
        )
    return "\n".join(lines) + "\n"


# -- recovery classification over logs ----------------------------------------

def nav_events_from_log(records) -> list[NavEvent]:
    """Reconstruct time-ordered failure/recovery rows from log records.

    Traversal records land in the log at resolution time (after any recovery),
    carrying the failure instant in their payload, so rows are re-sorted by
    time. An immediately-unsuccessful behaviour leaves the robot still stuck:
    a failure row at the same instant and odometer reading marks it."""
    keyed: list[tuple[float, int, NavEvent]] = []
    for rec in records:
        if rec.category == "traversal":
            pay = rec.payload
            if pay["outcome"] == "success":
                continue
            t_fail = float(pay.get("t_fail", pay["t_start"] + pay["travel_s"]))
            odo = float(pay.get("odometer_at_fail", pay["odometer_m"]))
            keyed.append((t_fail, 0, NavEvent("failure", t_fail, odo)))
        elif rec.category == "recovery":
            pay = rec.payload
            ev = NavEvent(
                "recovery", rec.t, float(pay["odometer_m"]),
                failure_class=FailureClass(pay["failure_class"]),
                behavior=BehaviorKind(pay["behavior"]),
                immediate_success=bool(pay["immediate_success"]),
            )
            keyed.append((rec.t, 1, ev))
            if not pay["immediate_success"]:
                keyed.append((
                    rec.t, 2,
                    NavEvent("failure", rec.t, float(pay["odometer_m"])),
                ))
    keyed.sort(key=lambda row: (row[0], row[1]))
    return [ev for _, _, ev in keyed]


def recovery_table(records) -> dict[tuple[FailureClass, BehaviorKind], RecoveryCounts]:
    """Classify every logged recovery, handling concatenated logs run by run."""
    spans: list[list] = [[]]
    for rec in records:
        if rec.category == "run_marker" and rec.payload["marker"] == "start":
            spans.append([])
        spans[-1].append(rec)
    counts: dict[tuple[FailureClass, BehaviorKind], RecoveryCounts] = {}
    for span in spans:
        for key, c in classify_recoveries(nav_events_from_log(span)).items():
            agg = counts.setdefault(key, RecoveryCounts())
            agg.successful += c.successful
            agg.unsuccessful += c.unsuccessful
    return counts


def recovery_table_csv(records) -> str:
    lines = ["failure_class,behavior,successful,unsuccessful,total"]
    for row in recovery_table_rows(recovery_table(records)):
        lines.append(",".join(str(v) for v in row))
    return "\n".join(lines) + "\n"


def recovery_locations_csv(records) -> str:
    lines = ["t,edge,x,y,failure_class,behavior,immediate_success"]
    for rec in records:
        if rec.category != "recovery":
            continue
        pay = rec.payload
        lines.append(
            f"{rec.t:.1f},{pay['edge']},{pay['x']:.3f},{pay['y']:.3f},"
            f"{pay['failure_class']},{pay['behavior']},{int(pay['immediate_success'])}"
        )
    return "\n".join(lines) + "\n"


# -- plot-ready CSV dumps -------------------------------------------------------

def timeline_rows(records) -> list[tuple[float, float, str, str]]:
    """(t_start, t_end, task_id, final_state) per task, for timeline plots."""
    opens: dict[str, float] = {}
    rows: list[tuple[float, float, str, str]] = []
    for rec in records:
        if rec.category != "task":
            continue
        pay = rec.payload
        tid, state = pay["task_id"], pay["state"]
        if state == "started":
            opens[tid] = rec.t
        elif state in TERMINAL_TASK_STATES:
            t0 = opens.pop(tid, rec.t)
            rows.append((t0, rec.t, tid, state))
    return rows


def timeline_csv(records) -> str:
    lines = ["t_start,t_end,task_id,state"]
    for t0, t1, tid, state in timeline_rows(records):
        lines.append(f"{t0:.1f},{t1:.1f},{tid},{state}")
    return "\n".join(lines) + "\n"


def daily_a_percent_csv(records, windows, **kwargs) -> str:
    lines = ["day,a_percent"]
    for day, value in daily_a_percent(records, windows, **kwargs):
        lines.append(f"{day},{value:.2f}")
    return "\n".join(lines) + "\n"


def interactions_daily_rows(records) -> list[tuple[int, int, int]]:
    """(day, visits, interactions) per day of logged info-terminal outcomes."""
    by_day: dict[int, list[bool]] = {}
    for rec in records:
        if rec.category == "interaction":
            by_day.setdefault(int(rec.t // 86_400), []).append(
                bool(rec.payload["interacted"])
            )
    return [
        (day, len(flags), sum(flags)) for day, flags in sorted(by_day.items())
    ]


def interactions_daily_csv(records) -> str:
    lines = ["day,visits,interactions"]
    for day, visits, interactions in interactions_daily_rows(records):
        lines.append(f"{day},{visits},{interactions}")
    return "\n".join(lines) + "\n"
