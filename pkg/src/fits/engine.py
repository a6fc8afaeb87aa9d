"""Event-sourced mission execution.

A mission is an append-only event log over a compiled TaskGraph. State is
reconstructed by folding ``apply_event`` over the log; commands validate,
build events, and fold them, so forward execution and replay share one code
path and are deterministic by construction.

MissionState values are immutable snapshots; all mutation goes through the
single ordered event stream of a mission.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Optional, Sequence

from .model import ConditionKind, StepType, TaskGraph, TaskNode, ValidationError, normalize_condition


class EngineError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


class TaskStatus(str, Enum):
    PENDING = "pending"
    AVAILABLE = "available"
    IN_PROGRESS = "in_progress"
    COMPLETED = "completed"
    FAILED = "failed"
    SKIPPED = "skipped"


class EventKind(str, Enum):
    MISSION_STARTED = "mission_started"
    CONDITION_CONFIRMED = "condition_confirmed"
    TASK_STARTED = "task_started"
    TASK_COMPLETED = "task_completed"
    TASK_FAILED = "task_failed"
    TASK_SKIPPED = "task_skipped"
    TASK_REPRIORITIZED = "task_reprioritized"
    TASK_REINSTATED = "task_reinstated"
    DATA_RECORDED = "data_recorded"
    ISSUE_REPORTED = "issue_reported"
    DURATION_EXCEEDED = "duration_exceeded"
    MISSION_CLOSED = "mission_closed"


@dataclass(frozen=True)
class EventRecord:
    seq: int
    timestamp: float
    kind: EventKind
    actor: str = ""
    task_id: Optional[str] = None
    payload: dict = field(default_factory=dict)

    def to_json_line(self) -> str:
        # canonical key order for the NDJSON log
        return json.dumps(
            {
                "seq": self.seq,
                "timestamp": self.timestamp,
                "kind": self.kind.value,
                "actor": self.actor,
                "task_id": self.task_id,
                "payload": self.payload,
            },
            ensure_ascii=False,
            sort_keys=False,
        )

    @staticmethod
    def from_json_line(line: str) -> "EventRecord":
        obj = json.loads(line)
        return EventRecord(
            seq=obj["seq"],
            timestamp=obj["timestamp"],
            kind=EventKind(obj["kind"]),
            actor=obj.get("actor", ""),
            task_id=obj.get("task_id"),
            payload=obj.get("payload") or {},
        )


@dataclass(frozen=True)
class DataRecord:
    task_id: str
    field_name: str
    value: object
    recorded_at: float
    valid: bool


@dataclass(frozen=True)
class IssueReport:
    issue_id: str
    reporter: str
    severity: str  # info | minor | major | blocker
    text: str
    task_id: Optional[str] = None
    state_snapshot_ref: int = 0
    reported_at: float = 0.0


ISSUE_SEVERITIES = ("info", "minor", "major", "blocker")


@dataclass(frozen=True)
class MissionState:
    mission_id: str
    graph: TaskGraph
    bindings: dict[str, str]
    commander: str
    task_status: dict[str, TaskStatus]
    satisfied_conditions: frozenset[str]
    clock: float
    alarms: dict[str, float]        # task_id -> deadline, not yet fired
    alarmed: frozenset[str]
    priorities: dict[str, int]      # runtime-effective priorities
    extra_tasks: dict[str, TaskNode]  # reinstated copies, keyed by new id
    data_records: tuple[DataRecord, ...]
    issues: tuple[IssueReport, ...]
    last_seq: int
    open: bool

    def all_tasks(self) -> list[TaskNode]:
        return list(self.graph.tasks) + list(self.extra_tasks.values())

    def task(self, task_id: str) -> Optional[TaskNode]:
        t = self.graph.task(task_id)
        if t is None:
            t = self.extra_tasks.get(task_id)
        return t

    def effective_priority(self, task: TaskNode) -> int:
        return self.priorities.get(task.task_id, task.priority)

    def resolved_responsible(self, task: TaskNode) -> str:
        key = task.binding_key()
        if key is None:
            return task.responsible
        return self.bindings.get(key, task.responsible)

    def known_roles(self) -> set[str]:
        return set(self.graph.actors) | set(self.bindings.values()) | {self.commander, "machine"}

    def condition_kinds(self) -> dict[str, ConditionKind]:
        return self.graph.condition_kinds()


def state_digest(state: MissionState) -> str:
    """Stable digest of the externally observable mission state."""
    doc = {
        "mission_id": state.mission_id,
        "template": state.graph.mission_template_id,
        "bindings": dict(sorted(state.bindings.items())),
        "task_status": {k: v.value for k, v in sorted(state.task_status.items())},
        "satisfied": sorted(state.satisfied_conditions),
        "clock": state.clock,
        "alarms": dict(sorted(state.alarms.items())),
        "alarmed": sorted(state.alarmed),
        "priorities": dict(sorted(state.priorities.items())),
        "extra_tasks": sorted(state.extra_tasks),
        "data": [
            [r.task_id, r.field_name, r.value, r.recorded_at, r.valid]
            for r in state.data_records
        ],
        "issues": [
            [i.issue_id, i.reporter, i.severity, i.text, i.task_id, i.state_snapshot_ref]
            for i in state.issues
        ],
        "last_seq": state.last_seq,
        "open": state.open,
    }
    blob = json.dumps(doc, sort_keys=True, ensure_ascii=False).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


# -- event application (the single source of truth for transitions) -----------


def _availability_pass(
    status: dict[str, TaskStatus], tasks: Iterable[TaskNode], satisfied: frozenset[str]
) -> dict[str, TaskStatus]:
    for t in tasks:
        if status.get(t.task_id) is TaskStatus.PENDING and all(
            c in satisfied for c in t.given
        ):
            status[t.task_id] = TaskStatus.AVAILABLE
    return status


def apply_event(state: MissionState, ev: EventRecord) -> MissionState:
    """Pure state transition; raises EngineError if the event is illegal."""
    if ev.seq != state.last_seq + 1:
        raise EngineError("seq-gap", f"missing seq {state.last_seq + 1}, got {ev.seq}")
    if ev.timestamp < state.clock:
        raise EngineError(
            "clock-regression",
            f"event {ev.seq} timestamp {ev.timestamp} precedes clock {state.clock}",
        )
    if not state.open and ev.kind is not EventKind.MISSION_STARTED:
        raise EngineError("mission-closed", "mission is closed")

    status = dict(state.task_status)
    satisfied = state.satisfied_conditions
    alarms = dict(state.alarms)
    alarmed = state.alarmed
    priorities = dict(state.priorities)
    extra = dict(state.extra_tasks)
    data_records = state.data_records
    issues = state.issues
    is_open = state.open

    def need_task(task_id: Optional[str]) -> TaskNode:
        if task_id is None:
            raise EngineError("unknown-task", "event carries no task id")
        t = state.task(task_id)
        if t is None:
            raise EngineError("unknown-task", f"unknown task {task_id}")
        return t

    kind = ev.kind
    if kind is EventKind.MISSION_STARTED:
        raise EngineError("illegal-transition", "mission already started")

    elif kind is EventKind.CONDITION_CONFIRMED:
        cid = ev.payload.get("condition", "")
        if ev.payload.get("duplicate"):
            pass  # idempotent re-confirmation; recorded as a warning event only
        else:
            known = state.condition_kinds()
            if cid not in known:
                raise EngineError("unknown-condition", f"unknown condition {cid!r}")
            if known[cid] is ConditionKind.INTERNAL and not ev.payload.get("override"):
                raise EngineError(
                    "internal-condition",
                    f"condition {cid!r} is internal; it is satisfied by task completion",
                )
            if ev.payload.get("override") and ev.actor != state.commander:
                raise EngineError(
                    "not-responsible",
                    "only the mission commander may override-confirm an internal condition",
                )
            satisfied = satisfied | {cid}
            status = _availability_pass(status, state.all_tasks(), satisfied)

    elif kind is EventKind.TASK_STARTED:
        t = need_task(ev.task_id)
        if status[t.task_id] is not TaskStatus.AVAILABLE:
            raise EngineError(
                "illegal-transition",
                f"task {t.task_id} is {status[t.task_id].value}, not available",
            )
        resp = state.resolved_responsible(t)
        if ev.actor != resp and not (resp == "machine" and ev.actor == state.commander):
            raise EngineError("not-responsible", f"{ev.actor} is not responsible for {t.task_id}")
        status[t.task_id] = TaskStatus.IN_PROGRESS
        if t.duration_limit is not None:
            alarms[t.task_id] = ev.timestamp + t.duration_limit

    elif kind in (EventKind.TASK_COMPLETED, EventKind.TASK_FAILED):
        t = need_task(ev.task_id)
        if status[t.task_id] is not TaskStatus.IN_PROGRESS:
            raise EngineError(
                "illegal-transition",
                f"task {t.task_id} is {status[t.task_id].value}, not in progress",
            )
        resp = state.resolved_responsible(t)
        if ev.actor != resp and not (resp == "machine" and ev.actor == state.commander):
            raise EngineError("not-responsible", f"{ev.actor} is not responsible for {t.task_id}")
        alarms.pop(t.task_id, None)
        if kind is EventKind.TASK_COMPLETED:
            status[t.task_id] = TaskStatus.COMPLETED
            satisfied = satisfied | set(t.then)
            status = _availability_pass(status, state.all_tasks(), satisfied)
        else:
            if not str(ev.payload.get("note", "")).strip():
                raise EngineError("missing-note", "a note is mandatory when failing a task")
            status[t.task_id] = TaskStatus.FAILED

    elif kind is EventKind.TASK_SKIPPED:
        t = need_task(ev.task_id)
        if status[t.task_id] not in (TaskStatus.PENDING, TaskStatus.AVAILABLE):
            raise EngineError(
                "illegal-transition",
                f"task {t.task_id} is {status[t.task_id].value}; only pending or "
                "available tasks can be skipped",
            )
        if ev.actor != state.commander:
            raise EngineError("not-responsible", "only the mission commander may skip tasks")
        status[t.task_id] = TaskStatus.SKIPPED

    elif kind is EventKind.TASK_REPRIORITIZED:
        t = need_task(ev.task_id)
        if ev.actor != state.commander:
            raise EngineError("not-responsible", "only the mission commander may reprioritize")
        p = ev.payload.get("priority")
        if not isinstance(p, int) or not (1 <= p <= 5):
            raise EngineError("validation", f"priority must be in 1..5, got {p!r}")
        priorities[t.task_id] = p

    elif kind is EventKind.TASK_REINSTATED:
        t = need_task(ev.task_id)
        if ev.actor != state.commander:
            raise EngineError("not-responsible", "only the mission commander may reinstate")
        if status[t.task_id] not in (TaskStatus.FAILED, TaskStatus.SKIPPED):
            raise EngineError(
                "illegal-transition",
                f"task {t.task_id} is {status[t.task_id].value}; only failed or "
                "skipped tasks can be reinstated",
            )
        new_id = ev.payload.get("new_task_id")
        if not new_id or state.task(new_id) is not None:
            raise EngineError("validation", f"bad reinstated task id {new_id!r}")
        copy = replace(t, task_id=new_id)
        extra[new_id] = copy
        status[new_id] = TaskStatus.PENDING
        status = _availability_pass(status, [copy], satisfied)

    elif kind is EventKind.DATA_RECORDED:
        t = need_task(ev.task_id)
        if t.step_type is not StepType.TD or t.data_spec is None:
            raise EngineError("not-td-task", f"task {t.task_id} is not a data collection task")
        if status[t.task_id] is not TaskStatus.IN_PROGRESS:
            raise EngineError(
                "illegal-transition", f"task {t.task_id} is not in progress"
            )
        resp = state.resolved_responsible(t)
        if ev.actor != resp and not (resp == "machine" and ev.actor == state.commander):
            raise EngineError("not-responsible", f"{ev.actor} is not responsible for {t.task_id}")
        try:
            value = t.data_spec.coerce(ev.payload.get("value"))
        except ValidationError as exc:
            raise EngineError("validation", str(exc)) from exc
        data_records = data_records + (
            DataRecord(
                task_id=t.task_id,
                field_name=t.data_spec.field_name,
                value=value,
                recorded_at=ev.timestamp,
                valid=bool(ev.payload.get("valid", t.data_spec.is_valid(value))),
            ),
        )

    elif kind is EventKind.ISSUE_REPORTED:
        text = str(ev.payload.get("text", "")).strip()
        if not text:
            raise EngineError("validation", "issue text must not be empty")
        severity = ev.payload.get("severity", "info")
        if severity not in ISSUE_SEVERITIES:
            raise EngineError("validation", f"unknown severity {severity!r}")
        if ev.task_id is not None:
            need_task(ev.task_id)
        issues = issues + (
            IssueReport(
                issue_id=ev.payload.get("issue_id", f"I{len(issues) + 1}"),
                reporter=ev.actor,
                severity=severity,
                text=text,
                task_id=ev.task_id,
                state_snapshot_ref=state.last_seq,
                reported_at=ev.timestamp,
            ),
        )

    elif kind is EventKind.DURATION_EXCEEDED:
        t = need_task(ev.task_id)
        if t.task_id not in alarms:
            raise EngineError("illegal-transition", f"no pending alarm for {t.task_id}")
        alarms.pop(t.task_id)
        alarmed = alarmed | {t.task_id}

    elif kind is EventKind.MISSION_CLOSED:
        if ev.actor != state.commander:
            raise EngineError("not-responsible", "only the mission commander may close the mission")
        is_open = False

    else:  # pragma: no cover - exhaustive over EventKind
        raise EngineError("unknown-event", f"unknown event kind {ev.kind!r}")

    return replace(
        state,
        task_status=status,
        satisfied_conditions=satisfied,
        clock=max(state.clock, ev.timestamp),
        alarms=alarms,
        alarmed=alarmed,
        priorities=priorities,
        extra_tasks=extra,
        data_records=data_records,
        issues=issues,
        last_seq=ev.seq,
        open=is_open,
    )


# -- commands -------------------------------------------------------------------


def start_mission(
    graph: TaskGraph,
    bindings: dict[str, str],
    clock: float = 0.0,
    mission_id: str = "mission",
    commander: str = "mission_commander",
) -> tuple[MissionState, list[EventRecord]]:
    required = graph.bindings_required()
    missing = [k for k in required if k not in bindings]
    if missing:
        raise EngineError("missing-binding", "missing binding(s): " + ", ".join(missing))
    actors = set(graph.actors)
    if actors:
        unknown = sorted(set(bindings.values()) - actors)
        if unknown:
            raise EngineError("unknown-actor", "unknown actor(s): " + ", ".join(unknown))

    status = {t.task_id: TaskStatus.PENDING for t in graph.tasks}
    status = _availability_pass(status, graph.tasks, frozenset())
    state = MissionState(
        mission_id=mission_id,
        graph=graph,
        bindings=dict(bindings),
        commander=commander,
        task_status=status,
        satisfied_conditions=frozenset(),
        clock=clock,
        alarms={},
        alarmed=frozenset(),
        priorities={},
        extra_tasks={},
        data_records=(),
        issues=(),
        last_seq=1,
        open=True,
    )
    ev = EventRecord(
        seq=1,
        timestamp=clock,
        kind=EventKind.MISSION_STARTED,
        actor=commander,
        payload={
            "mission_id": mission_id,
            "mission_template_id": graph.mission_template_id,
            "bindings": dict(sorted(bindings.items())),
            "commander": commander,
        },
    )
    return state, [ev]


def view_tasks(state: MissionState, role: str) -> list[TaskNode]:
    """Available/in-progress tasks of one role, by (priority, phase, id). Pure read."""
    if role not in state.known_roles():
        raise EngineError("unknown-role", f"unknown role {role!r}")
    out = [
        t
        for t in state.all_tasks()
        if state.task_status[t.task_id] in (TaskStatus.AVAILABLE, TaskStatus.IN_PROGRESS)
        and state.resolved_responsible(t) == role
    ]
    out.sort(
        key=lambda t: (
            state.effective_priority(t),
            state.graph.phase_index(t.phase),
            t.task_id,
        )
    )
    return out


def _emit(state: MissionState, ev: EventRecord) -> tuple[MissionState, list[EventRecord]]:
    return apply_event(state, ev), [ev]


def confirm_condition(
    state: MissionState,
    condition: str,
    actor: str,
    timestamp: float,
    override: bool = False,
) -> tuple[MissionState, list[EventRecord]]:
    try:
        cid = normalize_condition(condition)
    except ValidationError as exc:
        raise EngineError("validation", str(exc)) from exc
    payload: dict = {"condition": cid}
    if override:
        payload["override"] = True
    if cid in state.satisfied_conditions:
        payload["duplicate"] = True
        payload["warning"] = "condition already satisfied"
    ev = EventRecord(
        seq=state.last_seq + 1,
        timestamp=timestamp,
        kind=EventKind.CONDITION_CONFIRMED,
        actor=actor,
        payload=payload,
    )
    return _emit(state, ev)


def _task_event(
    state: MissionState,
    kind: EventKind,
    task_id: str,
    actor: str,
    timestamp: float,
    payload: Optional[dict] = None,
) -> tuple[MissionState, list[EventRecord]]:
    ev = EventRecord(
        seq=state.last_seq + 1,
        timestamp=timestamp,
        kind=kind,
        actor=actor,
        task_id=task_id,
        payload=payload or {},
    )
    return _emit(state, ev)


def start_task(state, task_id, actor, timestamp):
    return _task_event(state, EventKind.TASK_STARTED, task_id, actor, timestamp)


def complete_task(state, task_id, actor, timestamp, note: str = ""):
    payload = {"note": note} if note else {}
    return _task_event(state, EventKind.TASK_COMPLETED, task_id, actor, timestamp, payload)


def fail_task(state, task_id, actor, timestamp, note: str):
    return _task_event(state, EventKind.TASK_FAILED, task_id, actor, timestamp, {"note": note})


def skip_task(state, task_id, actor, timestamp, note: str = ""):
    payload = {"note": note} if note else {}
    return _task_event(state, EventKind.TASK_SKIPPED, task_id, actor, timestamp, payload)


def reprioritize_task(state, task_id, priority: int, actor, timestamp):
    return _task_event(
        state, EventKind.TASK_REPRIORITIZED, task_id, actor, timestamp, {"priority": priority}
    )


def reinstate_task(state, task_id, actor, timestamp):
    n = 2
    while state.task(f"{task_id}#{n}") is not None:
        n += 1
    return _task_event(
        state,
        EventKind.TASK_REINSTATED,
        task_id,
        actor,
        timestamp,
        {"new_task_id": f"{task_id}#{n}"},
    )


def record_data(state, task_id, value, actor, timestamp):
    return _task_event(
        state, EventKind.DATA_RECORDED, task_id, actor, timestamp, {"value": value}
    )


def report_issue(
    state,
    reporter: str,
    severity: str,
    text: str,
    timestamp: float,
    task_id: Optional[str] = None,
):
    if not state.open:
        raise EngineError("mission-closed", "mission is closed")
    ev = EventRecord(
        seq=state.last_seq + 1,
        timestamp=timestamp,
        kind=EventKind.ISSUE_REPORTED,
        actor=reporter,
        task_id=task_id,
        payload={
            "issue_id": f"I{len(state.issues) + 1}",
            "severity": severity,
            "text": text,
        },
    )
    return _emit(state, ev)


def tick(state: MissionState, now: float) -> tuple[MissionState, list[EventRecord]]:
    """Fire duration alarms for overdue in-progress tasks; each fires once."""
    if now < state.clock:
        raise EngineError("clock-regression", f"tick at {now} precedes clock {state.clock}")
    events: list[EventRecord] = []
    due = sorted(
        (deadline, task_id)
        for task_id, deadline in state.alarms.items()
        if deadline <= now
    )
    for deadline, task_id in due:
        t = state.task(task_id)
        ev = EventRecord(
            seq=state.last_seq + 1,
            timestamp=now,
            kind=EventKind.DURATION_EXCEEDED,
            actor="",
            task_id=task_id,
            payload={
                "deadline": deadline,
                "responsible": state.resolved_responsible(t),
                "duration_limit": t.duration_limit,
            },
        )
        state = apply_event(state, ev)
        events.append(ev)
    # no events means no state change: the clock only moves via logged events,
    # which keeps replay digests identical to forward execution
    return state, events


def close_mission(state, actor, timestamp):
    ev = EventRecord(
        seq=state.last_seq + 1,
        timestamp=timestamp,
        kind=EventKind.MISSION_CLOSED,
        actor=actor,
    )
    return _emit(state, ev)


# -- replay ----------------------------------------------------------------------


def replay(
    events: Sequence[EventRecord], graph: TaskGraph, bindings: dict[str, str]
) -> MissionState:
    """Deterministically reconstruct state from a log. replay(log(s)) == s."""
    if not events:
        state, _ = start_mission(graph, bindings)
        return state
    first = events[0]
    if first.seq != 1:
        raise EngineError("seq-gap", f"missing seq 1, log starts at {first.seq}")
    if first.kind is not EventKind.MISSION_STARTED:
        raise EngineError("corrupt-log", "log does not start with mission_started")
    state, _ = start_mission(
        graph,
        first.payload.get("bindings", bindings),
        clock=first.timestamp,
        mission_id=first.payload.get("mission_id", "mission"),
        commander=first.payload.get("commander", "mission_commander"),
    )
    expected = 2
    for ev in events[1:]:
        if ev.seq != expected:
            raise EngineError("seq-gap", f"missing seq {expected}")
        state = apply_event(state, ev)
        expected += 1
    return state


# -- NDJSON log persistence --------------------------------------------------------


def write_events(path, events: Iterable[EventRecord], fsync: bool = False) -> None:
    """Append events to an NDJSON log, one record per line."""
    with open(path, "a", encoding="utf-8") as fh:
        for ev in events:
            fh.write(ev.to_json_line() + "\n")
        fh.flush()
        if fsync:
            import os

            os.fsync(fh.fileno())


def read_events(path) -> list[EventRecord]:
    events: list[EventRecord] = []
    with open(path, encoding="utf-8") as fh:
        for i, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                events.append(EventRecord.from_json_line(line))
            except (json.JSONDecodeError, KeyError, ValueError) as exc:
                raise EngineError("corrupt-log", f"{path}:{i}: unreadable event: {exc}") from exc
    return events
