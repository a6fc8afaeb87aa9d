"""Desk-scale mission simulation driven by scripts.

A simulation script is the "test drive" before going to the field: a fixed,
line-oriented list of actions executed against the engine with a logical
clock, so a given (package, script) pair is bit-reproducible.

Script grammar, one action per line, '#' starts a comment line::

    advance 5
    confirm "suas1 is available at test site" by mission_commander
    start 11.1 by pilot_1
    complete 11.1 by pilot_1
    record 3.1 12 by mission_commander
    fail 12.1 by pilot_2 note "arming failed"
    skip 12.1 by mission_commander
    issue major "arming failed, retried" on 12.2 by pilot_1
    reprioritize 11.1 1 by mission_commander
    reinstate 12.1 by mission_commander
    tick
    close
"""

from __future__ import annotations

import shlex
from dataclasses import dataclass, field
from typing import Optional

from . import engine
from .engine import EngineError, EventRecord, MissionState, TaskStatus
from .model import ConditionKind, StepType, TaskGraph


class ScriptError(Exception):
    def __init__(self, line_no: int, message: str):
        super().__init__(f"line {line_no}: {message}")
        self.line_no = line_no


@dataclass(frozen=True)
class ScriptAction:
    line_no: int
    op: str
    args: tuple = ()


@dataclass
class SimulationScript:
    actions: list[ScriptAction] = field(default_factory=list)


def parse_script(source: str) -> SimulationScript:
    script = SimulationScript()
    for line_no, raw in enumerate(source.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        try:
            tokens = shlex.split(line)
        except ValueError as exc:
            raise ScriptError(line_no, f"unparseable line: {exc}") from None
        op, rest = tokens[0], tokens[1:]

        def take_by(toks: list[str]) -> tuple[list[str], str]:
            if "by" not in toks:
                raise ScriptError(line_no, f"{op} action requires 'by <actor>'")
            i = toks.index("by")
            if i + 1 >= len(toks):
                raise ScriptError(line_no, "missing actor after 'by'")
            return toks[:i], toks[i + 1]

        if op == "advance":
            if len(rest) != 1:
                raise ScriptError(line_no, "advance takes one duration argument")
            try:
                script.actions.append(ScriptAction(line_no, "advance", (float(rest[0]),)))
            except ValueError:
                raise ScriptError(line_no, f"bad duration {rest[0]!r}") from None
        elif op == "confirm":
            override = False
            if rest and rest[-1] == "override":
                override = True
                rest = rest[:-1]
            before, actor = take_by(rest)
            if len(before) != 1:
                raise ScriptError(line_no, "confirm takes one quoted condition")
            script.actions.append(ScriptAction(line_no, "confirm", (before[0], actor, override)))
        elif op in ("start", "complete", "skip", "reinstate"):
            before, actor = take_by(rest)
            if len(before) != 1:
                raise ScriptError(line_no, f"{op} takes one task id")
            script.actions.append(ScriptAction(line_no, op, (before[0], actor)))
        elif op == "fail":
            before, actor = take_by(rest)
            note = ""
            if "note" in before:
                i = before.index("note")
                note = " ".join(before[i + 1:])
                before = before[:i]
            else:
                # note may follow the actor: fail T by A note "..."
                idx = rest.index("by")
                tail = rest[idx + 2:]
                if tail and tail[0] == "note":
                    note = " ".join(tail[1:])
            if len(before) != 1:
                raise ScriptError(line_no, "fail takes one task id")
            script.actions.append(ScriptAction(line_no, "fail", (before[0], actor, note)))
        elif op == "record":
            before, actor = take_by(rest)
            if len(before) != 2:
                raise ScriptError(line_no, "record takes a task id and a value")
            script.actions.append(ScriptAction(line_no, "record", (before[0], before[1], actor)))
        elif op == "issue":
            before, actor = take_by(rest)
            task_id = None
            if "on" in before:
                i = before.index("on")
                if i + 1 >= len(before):
                    raise ScriptError(line_no, "missing task id after 'on'")
                task_id = before[i + 1]
                before = before[:i] + before[i + 2:]
            if len(before) != 2:
                raise ScriptError(line_no, "issue takes a severity and quoted text")
            script.actions.append(
                ScriptAction(line_no, "issue", (before[0], before[1], task_id, actor))
            )
        elif op == "reprioritize":
            before, actor = take_by(rest)
            if len(before) != 2:
                raise ScriptError(line_no, "reprioritize takes a task id and a priority")
            try:
                prio = int(before[1])
            except ValueError:
                raise ScriptError(line_no, f"bad priority {before[1]!r}") from None
            script.actions.append(ScriptAction(line_no, "reprioritize", (before[0], prio, actor)))
        elif op == "tick":
            script.actions.append(ScriptAction(line_no, "tick", ()))
        elif op == "close":
            actor = None
            if rest[:1] == ["by"] and len(rest) == 2:
                actor = rest[1]
            elif rest:
                raise ScriptError(line_no, "close takes an optional 'by <actor>'")
            script.actions.append(ScriptAction(line_no, "close", (actor,)))
        else:
            raise ScriptError(line_no, f"unknown action {op!r}")
    return script


@dataclass
class SimulationResult:
    state: MissionState
    events: list[EventRecord]

    @property
    def all_completed(self) -> bool:
        return all(
            s is TaskStatus.COMPLETED for s in self.state.task_status.values()
        )

    def status_table(self) -> str:
        counts: dict[str, int] = {}
        for s in self.state.task_status.values():
            counts[s.value] = counts.get(s.value, 0) + 1
        total = len(self.state.task_status)
        done = counts.get("completed", 0)
        lines = [f"{done}/{total} completed"]
        for status in TaskStatus:
            if counts.get(status.value):
                lines.append(f"  {status.value:12} {counts[status.value]}")
        return "\n".join(lines)


def run_script(
    graph: TaskGraph,
    script: SimulationScript,
    bindings: Optional[dict[str, str]] = None,
    mission_id: str = "sim",
    commander: str = "mission_commander",
) -> SimulationResult:
    """Execute a script with a logical clock starting at 0."""
    state, events = engine.start_mission(
        graph, bindings or {}, clock=0.0, mission_id=mission_id, commander=commander
    )
    clock = 0.0
    for action in script.actions:
        try:
            new: list[EventRecord] = []
            if action.op == "advance":
                clock += action.args[0]
                state, new = engine.tick(state, clock)
            elif action.op == "confirm":
                cond, actor, override = action.args
                state, new = engine.confirm_condition(state, cond, actor, clock, override=override)
            elif action.op == "start":
                state, new = engine.start_task(state, action.args[0], action.args[1], clock)
            elif action.op == "complete":
                state, new = engine.complete_task(state, action.args[0], action.args[1], clock)
            elif action.op == "fail":
                state, new = engine.fail_task(
                    state, action.args[0], action.args[1], clock, note=action.args[2]
                )
            elif action.op == "skip":
                state, new = engine.skip_task(state, action.args[0], action.args[1], clock)
            elif action.op == "reinstate":
                state, new = engine.reinstate_task(state, action.args[0], action.args[1], clock)
            elif action.op == "record":
                task_id, value, actor = action.args
                state, new = engine.record_data(state, task_id, value, actor, clock)
            elif action.op == "issue":
                severity, text, task_id, actor = action.args
                state, new = engine.report_issue(
                    state, actor, severity, text, clock, task_id=task_id
                )
            elif action.op == "reprioritize":
                task_id, prio, actor = action.args
                state, new = engine.reprioritize_task(state, task_id, prio, actor, clock)
            elif action.op == "tick":
                state, new = engine.tick(state, clock)
            elif action.op == "close":
                actor = action.args[0] or state.commander
                state, new = engine.close_mission(state, actor, clock)
            events.extend(new)
        except EngineError as exc:
            raise ScriptError(action.line_no, f"{exc.code}: {exc}") from exc
    return SimulationResult(state=state, events=events)


def _happy_value(spec) -> str:
    if spec.datatype == "enum":
        return spec.enum_values[0]
    if spec.datatype in ("integer", "number"):
        lo = spec.min_value if spec.min_value is not None else 0
        hi = spec.max_value if spec.max_value is not None else lo + 10
        mid = (lo + hi) / 2
        return str(int(mid)) if spec.datatype == "integer" else str(mid)
    if spec.datatype == "boolean":
        return "true"
    return "ok"


def generate_happy_script(
    graph: TaskGraph,
    bindings: Optional[dict[str, str]] = None,
    commander: str = "mission_commander",
) -> str:
    """Script text that confirms every external condition and completes every
    task in deterministic order; the generated script closes the mission."""
    bindings = bindings or {}
    state, _ = engine.start_mission(
        graph, bindings, clock=0.0, mission_id="happy", commander=commander
    )
    lines: list[str] = ["# generated happy-path script"]
    clock = 0.0
    externals = sorted(
        cid for cid, kind in graph.conditions if kind is ConditionKind.EXTERNAL
    )
    pending_ext = [c for c in externals if c not in state.satisfied_conditions]
    guard = 0
    while True:
        guard += 1
        if guard > 10 * len(graph.tasks) + 100:
            raise ScriptError(0, "happy-path generation did not converge (graph not live?)")
        progressed = False
        # confirm externals that could unlock something
        for cid in list(pending_ext):
            state, _ = engine.confirm_condition(state, cid, commander, clock)
            lines.append(f'confirm "{cid}" by {commander}')
            pending_ext.remove(cid)
            progressed = True
        # run every currently available task
        available = sorted(
            (t for t in state.all_tasks()
             if state.task_status[t.task_id] is TaskStatus.AVAILABLE),
            key=lambda t: (t.priority, graph.phase_index(t.phase), t.task_id),
        )
        for t in available:
            actor = state.resolved_responsible(t)
            doer = commander if actor == "machine" else actor
            state, _ = engine.start_task(state, t.task_id, doer, clock)
            lines.append(f"start {t.task_id} by {doer}")
            if t.step_type is StepType.TD and t.data_spec is not None:
                value = _happy_value(t.data_spec)
                state, _ = engine.record_data(state, t.task_id, value, doer, clock)
                lines.append(f"record {t.task_id} {value} by {doer}")
            clock += 1.0
            lines.append("advance 1")
            state, _ = engine.complete_task(state, t.task_id, doer, clock)
            lines.append(f"complete {t.task_id} by {doer}")
            progressed = True
        if all(
            s is TaskStatus.COMPLETED for s in state.task_status.values()
        ):
            break
        if not progressed:
            stuck = [tid for tid, s in state.task_status.items() if s is TaskStatus.PENDING]
            raise ScriptError(0, "no progress possible; stuck tasks: " + ", ".join(sorted(stuck)))
    lines.append(f"close by {commander}")
    return "\n".join(lines) + "\n"
