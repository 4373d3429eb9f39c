"""Monitored edge traversal: failure detection and ordered recovery ladders.

Each failure class carries an ordered list of recovery behaviours. Within a
single monitored traversal, behaviour applications for a class consume the
list left to right (optionally repeating the last element), so the sequence
emitted for k consecutive failures of a class is exactly the first k entries
of its ladder. A behaviour that unblocks the robot leads to a fresh traversal
attempt; exhausting the ladder abandons the traversal.

Recovery quality is judged retrospectively: a recovery is successful iff no
further failure occurs within 60 seconds AND within 1.0 metre of travel after
it; a failure inside either bound marks it unsuccessful.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

RECOVERY_WINDOW_S = 60.0
RECOVERY_WINDOW_M = 1.0


class FailureClass(str, Enum):
    BUMPER_PRESSED = "BUMPER_PRESSED"
    NAV_FAIL = "NAV_FAIL"
    CARPET_STUCK = "CARPET_STUCK"


class BehaviorKind(str, Enum):
    ASK_HELP = "ASK_HELP"
    SLEEP_RETRY = "SLEEP_RETRY"
    BACKTRACK = "BACKTRACK"
    BOOST_VELOCITY = "BOOST_VELOCITY"


@dataclass(frozen=True)
class RecoveryBehavior:
    kind: BehaviorKind
    sleep_s: float = 60.0
    max_requests: int | None = None

    def __post_init__(self):
        if self.sleep_s <= 0:
            raise ValueError("sleep_s must be > 0")
        if self.max_requests is not None and self.max_requests < 1:
            raise ValueError("max_requests must be >= 1 when bounded")


@dataclass(frozen=True)
class RecoveryPolicy:
    """Ordered behaviour ladder per failure class.

    ``repeat_last`` keeps applying the final ladder entry until it either
    recovers or hits its ``max_requests`` bound. When the carpet ladder is
    exhausted and ``carpet_exhaust_to_nav_fail`` is set, recovery continues
    with the NAV_FAIL ladder (an explicit, flagged extension; disable the
    flag for the bare ladder).
    """

    ladders: dict[FailureClass, tuple[RecoveryBehavior, ...]]
    repeat_last: dict[FailureClass, bool]
    carpet_exhaust_to_nav_fail: bool = True

    def ladder(self, failure: FailureClass) -> tuple[RecoveryBehavior, ...]:
        return self.ladders.get(failure, ())

    def repeats(self, failure: FailureClass) -> bool:
        return self.repeat_last.get(failure, False)


def default_recovery_policy(
    sleep_s: float = 60.0,
    nav_fail_max_help: int | None = 5,
    carpet_exhaust_to_nav_fail: bool = True,
) -> RecoveryPolicy:
    """The deployed ladder set.

    * bumper: ask for help via screen and voice, repeated until recovered;
    * navigation failure: sleep then retry, backtrack to the last good pose,
      then ask for help repeatedly (bounded so exhaustion can occur);
    * carpet stuck: command increased velocities once.
    """
    return RecoveryPolicy(
        ladders={
            FailureClass.BUMPER_PRESSED: (
                RecoveryBehavior(BehaviorKind.ASK_HELP),
            ),
            FailureClass.NAV_FAIL: (
                RecoveryBehavior(BehaviorKind.SLEEP_RETRY, sleep_s=sleep_s),
                RecoveryBehavior(BehaviorKind.BACKTRACK),
                RecoveryBehavior(BehaviorKind.ASK_HELP,
                                 max_requests=nav_fail_max_help),
            ),
            FailureClass.CARPET_STUCK: (
                RecoveryBehavior(BehaviorKind.BOOST_VELOCITY),
            ),
        },
        repeat_last={
            FailureClass.BUMPER_PRESSED: True,
            FailureClass.NAV_FAIL: True,
            FailureClass.CARPET_STUCK: False,
        },
        carpet_exhaust_to_nav_fail=carpet_exhaust_to_nav_fail,
    )


@dataclass(frozen=True)
class RecoveryRecord:
    """One behaviour application during a monitored traversal."""

    t: float
    edge_id: str
    offset_m: float
    x: float
    y: float
    failure: FailureClass
    behavior: BehaviorKind
    immediate_success: bool
    odometer_m: float


@dataclass(frozen=True)
class Attempt:
    """One resolved edge attempt (the unit fed to edge statistics)."""

    t_start: float
    outcome: str  # success | recovered_failure | fatal_failure
    travel_s: float
    progress: float
    failure_class: FailureClass | None
    t_fail: float | None
    odometer_at_fail: float | None
    recovery_s: float


@dataclass(frozen=True)
class TraversalResult:
    status: str  # success | recovered_then_success | failed_exhausted
    fatal: bool
    elapsed_s: float
    attempts: tuple[Attempt, ...]
    records: tuple[RecoveryRecord, ...]


class _LadderState:
    """Cursor over a failure class's ladder within one traversal."""

    def __init__(self, policy: RecoveryPolicy):
        self.policy = policy
        self.position: dict[FailureClass, int] = {}
        self.applications: dict[tuple[FailureClass, int], int] = {}
        self.carpet_spilled = False

    def next_behavior(self, failure: FailureClass) -> tuple[FailureClass, RecoveryBehavior] | None:
        """The next behaviour to apply for this failure class, or None when
        the ladder (including any carpet spill-over) is exhausted."""
        effective = failure
        if failure == FailureClass.CARPET_STUCK and self.carpet_spilled:
            effective = FailureClass.NAV_FAIL
        ladder = self.policy.ladder(effective)
        pos = self.position.get(effective, 0)
        if pos >= len(ladder):
            if self.policy.repeats(effective) and ladder:
                pos = len(ladder) - 1
            else:
                if (
                    effective == FailureClass.CARPET_STUCK
                    and self.policy.carpet_exhaust_to_nav_fail
                    and not self.carpet_spilled
                ):
                    self.carpet_spilled = True
                    return self.next_behavior(failure)
                return None
        behavior = ladder[pos]
        key = (effective, pos)
        applied = self.applications.get(key, 0)
        if behavior.max_requests is not None and applied >= behavior.max_requests:
            return None
        return effective, behavior

    def advance(self, effective: FailureClass) -> None:
        ladder = self.policy.ladder(effective)
        pos = self.position.get(effective, 0)
        capped = min(pos, len(ladder) - 1)
        key = (effective, capped)
        self.applications[key] = self.applications.get(key, 0) + 1
        self.position[effective] = pos + 1


def traverse_monitored(edge, policy: RecoveryPolicy, world) -> TraversalResult:
    """Attempt an edge with monitoring and recovery.

    ``world`` supplies the stochastic outcomes via ``attempt_edge(edge)`` and
    ``attempt_recovery(behavior, context)``, advancing its own clock; it also
    exposes ``clock``, ``odometer_m``, and ``position_on_edge(edge, progress)``.
    """
    t0 = world.clock
    attempts: list[Attempt] = []
    records: list[RecoveryRecord] = []
    ladder = _LadderState(policy)

    while True:
        t_attempt = world.clock
        outcome = world.attempt_edge(edge)
        if outcome.success:
            attempts.append(Attempt(
                t_start=t_attempt,
                outcome="success",
                travel_s=outcome.duration_s,
                progress=1.0,
                failure_class=None,
                t_fail=None,
                odometer_at_fail=None,
                recovery_s=0.0,
            ))
            status = "recovered_then_success" if records else "success"
            return TraversalResult(
                status=status,
                fatal=False,
                elapsed_s=world.clock - t0,
                attempts=tuple(attempts),
                records=tuple(records),
            )

        failure = outcome.failure_class
        t_fail = world.clock
        odo_fail = world.odometer_m
        if outcome.fatal:
            attempts.append(Attempt(
                t_start=t_attempt,
                outcome="fatal_failure",
                travel_s=outcome.duration_s,
                progress=outcome.progress,
                failure_class=failure,
                t_fail=t_fail,
                odometer_at_fail=odo_fail,
                recovery_s=0.0,
            ))
            return TraversalResult(
                status="failed_exhausted",
                fatal=True,
                elapsed_s=world.clock - t0,
                attempts=tuple(attempts),
                records=tuple(records),
            )

        recovery_s = 0.0
        unblocked = False
        while True:
            step = ladder.next_behavior(failure)
            if step is None:
                break
            effective, behavior = step
            ladder.advance(effective)
            rec = world.attempt_recovery(
                behavior, edge=edge, failure=failure, progress=outcome.progress
            )
            recovery_s += rec.duration_s
            x, y = world.position_on_edge(edge, outcome.progress)
            records.append(RecoveryRecord(
                t=world.clock,
                edge_id=edge.id,
                offset_m=outcome.progress * edge.nominal_length,
                x=x,
                y=y,
                failure=failure,
                behavior=behavior.kind,
                immediate_success=rec.recovered,
                odometer_m=world.odometer_m,
            ))
            if rec.recovered:
                unblocked = True
                break

        attempts.append(Attempt(
            t_start=t_attempt,
            outcome="recovered_failure",
            travel_s=outcome.duration_s,
            progress=outcome.progress,
            failure_class=failure,
            t_fail=t_fail,
            odometer_at_fail=odo_fail,
            recovery_s=recovery_s,
        ))
        if not unblocked:
            return TraversalResult(
                status="failed_exhausted",
                fatal=False,
                elapsed_s=world.clock - t0,
                attempts=tuple(attempts),
                records=tuple(records),
            )
        # unblocked: loop back and attempt the edge again


@dataclass(frozen=True)
class NavEvent:
    """Input row for recovery classification.

    ``kind`` is one of "recovery", "failure", or "motion". Recovery rows carry
    the failure class and behaviour; every row carries the cumulative odometer
    reading at its timestamp.
    """

    kind: str
    t: float
    odometer_m: float
    failure_class: FailureClass | None = None
    behavior: BehaviorKind | None = None
    immediate_success: bool | None = None


@dataclass
class RecoveryCounts:
    successful: int = 0
    unsuccessful: int = 0

    @property
    def total(self) -> int:
        return self.successful + self.unsuccessful


def classify_recoveries(
    events,
    window_s: float = RECOVERY_WINDOW_S,
    window_m: float = RECOVERY_WINDOW_M,
) -> dict[tuple[FailureClass, BehaviorKind], RecoveryCounts]:
    """Classify each recovery event against subsequent failures.

    ``events`` is an ordered sequence of NavEvent rows (event-log order).
    A recovery is unsuccessful iff any later failure row lies within
    ``window_s`` seconds OR within ``window_m`` metres of travel of it
    (bounds inclusive); otherwise it is successful. Counts are keyed by
    (failure class, behaviour).
    """
    rows = list(events)
    for prev, cur in zip(rows, rows[1:]):
        if cur.t < prev.t:
            raise ValueError(
                f"events out of order: t={cur.t} after t={prev.t}"
            )
    failures = [
        (i, ev) for i, ev in enumerate(rows) if ev.kind == "failure"
    ]
    counts: dict[tuple[FailureClass, BehaviorKind], RecoveryCounts] = {}
    for i, ev in enumerate(rows):
        if ev.kind != "recovery":
            continue
        if ev.failure_class is None or ev.behavior is None:
            raise ValueError("recovery events must carry failure_class and behavior")
        unsuccessful = False
        for j, f in failures:
            if j <= i:
                continue
            dt = f.t - ev.t
            dd = f.odometer_m - ev.odometer_m
            if dt <= window_s or dd <= window_m:
                unsuccessful = True
            break  # only the first subsequent failure can be within bounds
        key = (ev.failure_class, ev.behavior)
        c = counts.setdefault(key, RecoveryCounts())
        if unsuccessful:
            c.unsuccessful += 1
        else:
            c.successful += 1
    return counts


def recovery_table_rows(counts) -> list[tuple[str, str, int, int, int]]:
    """Flatten classification counts to sorted table rows
    (failure_class, behavior, successful, unsuccessful, total)."""
    rows = []
    for (failure, behavior), c in sorted(
        counts.items(), key=lambda kv: (kv[0][0].value, kv[0][1].value)
    ):
        rows.append(
            (failure.value, behavior.value, c.successful, c.unsuccessful, c.total)
        )
    return rows
