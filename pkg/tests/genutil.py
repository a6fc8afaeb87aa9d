"""Random scenario/graph/event-sequence generators shared by the test suite.

Everything here is deliberately independent of the implementation under test:
graphs are built layer by layer so that acyclicity and producer coverage hold
by construction, and the legal-event driver tracks its own shadow state.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

from fits.model import (
    ConditionKind,
    ConditionText,
    DataSpec,
    ScenarioTemplate,
    StepTemplate,
    StepType,
    TaskGraph,
    TaskNode,
    VariableDecl,
    VariableKind,
)

ROLES = ("pilot_1", "pilot_2", "gcs_operator", "safety_officer", "mission_commander")
PHASES = ("preparation", "execution", "recovery")


def random_chain_template(rng: random.Random, n_steps: int) -> ScenarioTemplate:
    """A linear lint-clean scenario: step i consumes step i-1's postcondition."""
    steps = []
    for i in range(1, n_steps + 1):
        given = (
            (ConditionText(f"stage {i - 1} is done"),)
            if i > 1
            else (ConditionText("site is ready", ConditionKind.EXTERNAL),)
        )
        steps.append(
            StepTemplate(
                step_id=str(i),
                when=f"{rng.choice(ROLES[:4])} shall perform stage {i}.",
                given=given,
                then=(ConditionText(f"stage {i} is done"),) if i < n_steps else (),
                responsible=rng.choice(ROLES[:4]),
                priority=rng.randint(1, 5),
                phase=PHASES[min(2, 3 * (i - 1) // n_steps)],
            )
        )
    return ScenarioTemplate(
        id=f"GEN{rng.randint(0, 10**6)}",
        name="generated chain",
        description="generated",
        primary_actors=("mission_commander",),
        supporting_actors=ROLES[:4],
        variables=(),
        phases=PHASES,
        steps=tuple(steps),
    )


def random_indexed_template(rng: random.Random) -> ScenarioTemplate:
    """Random template exercising index-variable expansion.

    Every referenced variable also appears in the step id (dot-separated, so
    infix substitution keeps ids unique per assignment).
    """
    var_names = ["x", "y", "z"][: rng.randint(0, 3)]
    variables = tuple(
        VariableDecl(v, tuple(str(k) for k in range(1, rng.randint(1, 4) + 1)),
                     VariableKind.INDEX)
        for v in var_names
    )
    steps = []
    for i in range(1, rng.randint(1, 8) + 1):
        used = sorted(rng.sample(var_names, rng.randint(0, len(var_names))))
        suffix = "".join(f".{v}" for v in used)
        mention = " ".join(f"unit<{v}>" for v in used)
        steps.append(
            StepTemplate(
                step_id=f"s{i}{suffix}",
                when=f"operator shall run case {i} {mention}".strip() + ".",
                given=(ConditionText(f"go signal {i} {mention}".strip(),
                                     ConditionKind.EXTERNAL),),
                then=(ConditionText(f"case {i} {mention} is done".strip()),),
                responsible="operator",
                phase="main",
            )
        )
    return ScenarioTemplate(
        id=f"IDX{rng.randint(0, 10**6)}",
        name="generated indexed",
        description="generated",
        primary_actors=("operator",),
        supporting_actors=(),
        variables=variables,
        phases=("main",),
        steps=tuple(steps),
    )


def enumeration_oracle(template: ScenarioTemplate) -> int:
    """Brute-force (step, assignment) pair count, independent of the expander.

    Scans each step's text fields for `<v>` occurrences and its id for a bare
    infix `v`, then multiplies the domain sizes of the referenced variables.
    """
    import itertools
    import re

    domains = {
        v.name: v.domain
        for v in template.variables
        if v.kind is VariableKind.INDEX
    }
    anchors = {
        v.name: v.anchor or ""
        for v in template.variables
        if v.kind is VariableKind.BINDING
    }
    total = 0
    for step in template.steps:
        texts = [step.when, step.responsible, step.step_id]
        texts += [c.raw for c in step.given] + [c.raw for c in step.then]
        if step.subprocess is not None:
            texts += [v for _, v in step.subprocess.params]
        # a binding variable drags in the index variables of its anchor
        expanded = list(texts)
        for t in texts:
            for b, anchor in anchors.items():
                if f"<{b}>" in t:
                    expanded.append(anchor)
        used = set()
        for name in domains:
            for t in expanded:
                if f"<{name}>" in t or re.search(
                    rf"(?<![A-Za-z]){name}(?![A-Za-z])", step.step_id
                ):
                    used.add(name)
                    break
        n = 1
        for name in used:
            n *= len(domains[name])
        total += n
    return total


@dataclass
class RandomGraph:
    graph: TaskGraph
    externals: list[str]


def random_graph(rng: random.Random, max_tasks: int = 50) -> RandomGraph:
    """A random lint-clean TaskGraph: layered DAG, producers by construction."""
    n = rng.randint(1, max_tasks)
    externals = [f"field condition {k} holds" for k in range(rng.randint(1, 4))]
    conditions: list[tuple[str, ConditionKind]] = [
        (c, ConditionKind.EXTERNAL) for c in externals
    ]
    tasks: list[TaskNode] = []
    produced: list[str] = []
    for i in range(n):
        pool = externals + produced
        given = tuple(
            sorted(rng.sample(pool, rng.randint(0, min(3, len(pool)))))
        )
        then: tuple[str, ...] = ()
        if rng.random() < 0.8:
            cond = f"milestone {i} is reached"
            then = (cond,)
            produced.append(cond)
            conditions.append((cond, ConditionKind.INTERNAL))
        step_type = StepType.TD if rng.random() < 0.2 else StepType.TE
        spec = None
        if step_type is StepType.TD:
            spec = DataSpec(
                field_name=f"reading_{i}",
                datatype="integer",
                min_value=0,
                max_value=100,
                telemetry_key=f"reading_{i}",
            )
        tasks.append(
            TaskNode(
                task_id=f"t{i}",
                when=f"{rng.choice(ROLES[:4])} shall do unit of work {i}.",
                given=given,
                then=then,
                step_type=step_type,
                responsible=rng.choice(ROLES[:4]),
                priority=rng.randint(1, 5),
                phase=rng.choice(PHASES),
                duration_limit=rng.choice([None, None, 30.0, 90.0]),
                data_spec=spec,
            )
        )
    graph = TaskGraph(
        mission_template_id=f"RND{rng.randint(0, 10**6)}",
        tasks=tuple(tasks),
        conditions=tuple(dict.fromkeys(conditions)),
        phases=PHASES,
        actors=ROLES,
    )
    graph.check()
    return RandomGraph(graph=graph, externals=externals)


@dataclass
class ShadowState:
    """Independent bookkeeping used to cross-check the engine's availability."""

    satisfied: set[str] = field(default_factory=set)
    started: set[str] = field(default_factory=set)
    done: set[str] = field(default_factory=set)  # completed/failed/skipped


def brute_force_available(graph: TaskGraph, shadow: ShadowState) -> set[str]:
    out = set()
    for t in graph.tasks:
        if t.task_id in shadow.started or t.task_id in shadow.done:
            continue
        if all(c in shadow.satisfied for c in t.given):
            out.add(t.task_id)
    return out


def brute_force_view(graph: TaskGraph, shadow: ShadowState,
                     role: str, bindings: dict[str, str]) -> set[str]:
    """Tasks the engine should list for `role`: available or in-progress."""
    listed = brute_force_available(graph, shadow) | (
        shadow.started - shadow.done
    )
    out = set()
    for t in graph.tasks:
        if t.task_id not in listed:
            continue
        resolved = t.responsible
        key = t.binding_key()
        if key is not None:
            resolved = bindings.get(key, resolved)
        if resolved == role:
            out.add(t.task_id)
    return out


def run_random_legal_sequence(rng: random.Random, rgraph: RandomGraph,
                              bindings: dict[str, str] | None = None):
    """Drive the engine with random legal commands, cross-checking view_tasks
    against the brute-force recomputation after every event.

    Returns (final_state, events, checks_performed).
    """
    from fits import engine

    graph = rgraph.graph
    bindings = dict(bindings or {})
    state, events = engine.start_mission(graph, bindings, clock=0.0)
    shadow = ShadowState()
    checks = 0

    def verify():
        nonlocal checks
        roles = set(graph.actors) | {"mission_commander"}
        for role in roles:
            got = {t.task_id for t in engine.view_tasks(state, role)}
            want = brute_force_view(graph, shadow, role, bindings)
            assert got == want, (role, got, want)
            checks += 1

    verify()
    now = 0.0
    for _ in range(rng.randint(5, 4 * len(graph.tasks) + 10)):
        moves = []
        unconfirmed = [c for c in rgraph.externals
                       if _norm(c) not in shadow.satisfied]
        if unconfirmed:
            moves.append("confirm")
        startable = [
            t for t in graph.tasks
            if t.task_id in brute_force_available(graph, shadow)
        ]
        if startable:
            moves.append("start")
            moves.append("skip")
        running = [t for t in graph.tasks
                   if t.task_id in shadow.started and t.task_id not in shadow.done]
        if running:
            moves.append("complete")
            moves.append("fail")
            if any(t.step_type.value == "TD" for t in running):
                moves.append("record")
        moves.append("advance")
        move = rng.choice(moves)
        new_events: list = []
        if move == "confirm":
            cond = rng.choice(unconfirmed)
            state, new_events = engine.confirm_condition(
                state, cond, rng.choice(graph.actors), now)
            shadow.satisfied.add(_norm(cond))
        elif move == "start":
            t = rng.choice(startable)
            state, new_events = engine.start_task(
                state, t.task_id, _resolved(t, bindings), now)
            shadow.started.add(t.task_id)
        elif move == "skip":
            t = rng.choice(startable)
            state, new_events = engine.skip_task(
                state, t.task_id, "mission_commander", now, note="skipped")
            shadow.done.add(t.task_id)
        elif move == "complete":
            t = rng.choice(running)
            state, new_events = engine.complete_task(
                state, t.task_id, _resolved(t, bindings), now)
            shadow.done.add(t.task_id)
            for c in t.then:
                shadow.satisfied.add(c)
        elif move == "fail":
            t = rng.choice(running)
            state, new_events = engine.fail_task(
                state, t.task_id, _resolved(t, bindings), now, note="broke")
            shadow.done.add(t.task_id)
        elif move == "record":
            t = rng.choice([t for t in running if t.step_type.value == "TD"])
            state, new_events = engine.record_data(
                state, t.task_id, rng.randint(-5, 105), _resolved(t, bindings), now)
        else:
            now += rng.choice([1.0, 10.0, 200.0])
            state, new_events = engine.tick(state, now)
        events.extend(new_events)
        verify()
    return state, events, checks


def _norm(raw: str) -> str:
    from fits.model import normalize_condition

    return normalize_condition(raw)


def _resolved(task, bindings: dict[str, str]) -> str:
    key = task.binding_key()
    if key is not None:
        return bindings.get(key, task.responsible)
    return task.responsible
