"""Template validation, sub-process inlining, variable expansion, packaging.

Pipeline: parsed ScenarioTemplate -> lint -> inline_subprocesses -> expand
-> TaskGraph -> mission package JSON (the engine's sole input).
All stages are pure; identical inputs give byte-identical package output.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field, replace
from enum import Enum
from itertools import product
from typing import Iterable, Optional, Sequence

from .model import (
    ConditionKind,
    ConditionText,
    DataSpec,
    ScenarioTemplate,
    StepTemplate,
    StepType,
    SubProcessDef,
    Suite,
    TaskGraph,
    TaskNode,
    ValidationError,
    VariableDecl,
    VariableKind,
    find_condition_cycle,
    normalize_condition,
    referenced_variables,
)

PACKAGE_VERSION = 1
MAX_INLINE_DEPTH = 8


class CompileError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


class LintSeverity(str, Enum):
    ERROR = "error"
    WARNING = "warning"


@dataclass(frozen=True)
class LintFinding:
    code: str
    severity: LintSeverity
    message: str
    location: str = ""

    def __str__(self) -> str:
        loc = f" [{self.location}]" if self.location else ""
        return f"{self.severity.value}[{self.code}]: {self.message}{loc}"


@dataclass
class LintReport:
    findings: list[LintFinding] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.errors

    @property
    def errors(self) -> list[LintFinding]:
        return [f for f in self.findings if f.severity is LintSeverity.ERROR]

    @property
    def warnings(self) -> list[LintFinding]:
        return [f for f in self.findings if f.severity is LintSeverity.WARNING]


# -- substitution -------------------------------------------------------------


def substitute_text(text: str, assignment: dict[str, str]) -> str:
    for name, value in assignment.items():
        text = text.replace(f"<{name}>", value)
    return text


def substitute_step_id(step_id: str, assignment: dict[str, str]) -> str:
    """Step ids use infix variables without brackets, e.g. 1x.1 -> 11.1."""
    step_id = substitute_text(step_id, assignment)
    for name, value in assignment.items():
        step_id = re.sub(rf"(?<![A-Za-z]){re.escape(name)}(?![A-Za-z])", value, step_id)
    return step_id


_ARROW_RE = re.compile(r"^(.*?)\s*->\s*<(\w+)>$")
_BARE_BINDING_RE = re.compile(r"^<(\w+)>$")


def resolve_responsible(
    text: str, assignment: dict[str, str], bindings: dict[str, VariableDecl]
) -> str:
    """Concrete role text or symbolic ``binding(<subject>)`` slot."""
    t = substitute_text(text, assignment).strip()
    m = _ARROW_RE.match(t)
    if m:
        return f"binding({m.group(1).strip()})"
    m = _BARE_BINDING_RE.match(t)
    if m and m.group(1) in bindings:
        decl = bindings[m.group(1)]
        if decl.anchor:
            return f"binding({substitute_text(decl.anchor, assignment).strip()})"
        return f"binding({decl.name})"
    return t


def step_index_variables(step: StepTemplate, template: ScenarioTemplate) -> list[str]:
    """Index variables a step references (bracketed, bare in the id, or via
    the anchor of a referenced binding variable), in declaration order."""
    index_names = {v.name for v in template.index_variables()}
    bindings = {v.name: v for v in template.variables if v.kind is VariableKind.BINDING}
    names = step.variables() & index_names
    for v in index_names:
        if re.search(rf"(?<![A-Za-z]){re.escape(v)}(?![A-Za-z])", step.step_id):
            names.add(v)
    for b in step.variables() & set(bindings):
        anchor = bindings[b].anchor
        if anchor:
            names |= referenced_variables(anchor) & index_names
    order = [v.name for v in template.index_variables()]
    return [n for n in order if n in names]


# -- sub-process inlining ------------------------------------------------------


def inline_subprocesses(
    template: ScenarioTemplate,
    defs: Iterable[SubProcessDef],
    max_depth: int = MAX_INLINE_DEPTH,
) -> ScenarioTemplate:
    """Replace every sub-process reference by its substituted steps.

    Replacement ids are ``<parent_id>.<k>``. The parent's Given conditions
    are prepended to the first inlined step and its Then conditions appended
    to the last, so the condition chain around the block is preserved.
    Nested references resolve recursively up to max_depth.
    """
    by_name = {d.name: d for d in defs}

    def inline_step(step: StepTemplate, depth: int) -> list[StepTemplate]:
        if step.subprocess is None:
            return [step]
        if depth > max_depth:
            raise CompileError(
                "inline-depth-exceeded",
                f"sub-process nesting deeper than {max_depth} at step {step.step_id} "
                "(probable recursion)",
            )
        ref = step.subprocess
        spdef = by_name.get(ref.name)
        if spdef is None:
            raise CompileError("unknown-subprocess", f"unknown sub-process {ref.name!r}")
        params = ref.param_map
        unbound = set(spdef.params) - set(params)
        if unbound:
            raise CompileError(
                "unbound-param",
                f"step {step.step_id}: sub-process {ref.name} parameter(s) "
                + ", ".join(sorted(unbound))
                + " unbound",
            )

        inlined: list[StepTemplate] = []
        for k, sub in enumerate(spdef.steps, start=1):
            new = replace(
                sub,
                step_id=f"{step.step_id}.{k}",
                when=substitute_text(sub.when, params),
                given=tuple(
                    ConditionText(substitute_text(c.raw, params), c.kind) for c in sub.given
                ),
                then=tuple(
                    ConditionText(substitute_text(c.raw, params), c.kind) for c in sub.then
                ),
                responsible=substitute_text(sub.responsible, params),
                phase=sub.phase or step.phase,
                subprocess=_substitute_ref(sub.subprocess, params),
            )
            inlined.append(new)
        # splice the parent's own conditions around the block
        inlined[0] = replace(inlined[0], given=step.given + inlined[0].given)
        inlined[-1] = replace(inlined[-1], then=inlined[-1].then + step.then)
        out: list[StepTemplate] = []
        for s in inlined:
            out.extend(inline_step(s, depth + 1))
        return out

    new_steps: list[StepTemplate] = []
    for step in template.steps:
        new_steps.extend(inline_step(step, 1))
    return replace(template, steps=tuple(new_steps))


def _substitute_ref(ref, params):
    if ref is None:
        return None
    return replace(
        ref, params=tuple((k, substitute_text(v, params)) for k, v in ref.params)
    )


# -- expansion ------------------------------------------------------------------


def expand(template: ScenarioTemplate, validate: bool = True) -> TaskGraph:
    """One TaskNode per (step, index-variable assignment) pair.

    Index variables substitute into ids and texts; binding variables stay
    symbolic as ``binding(<subject>)`` in the responsible slot. Output order
    is stable: (phase index, template order, assignment lexicographic).
    """
    domains = {v.name: v.domain for v in template.index_variables()}
    bindings = {v.name: v for v in template.variables if v.kind is VariableKind.BINDING}
    for name, dom in domains.items():
        if not dom:
            raise CompileError("empty-domain", f"variable <{name}> has an empty domain")

    tasks: list[TaskNode] = []
    external_templates: set[str] = set()
    condition_kind: dict[str, ConditionKind] = {}
    seen_ids: set[str] = set()

    for order, step in enumerate(template.steps):
        refs = step_index_variables(step, template)
        assignments: list[dict[str, str]]
        if refs:
            assignments = [
                dict(zip(refs, combo)) for combo in product(*(domains[v] for v in refs))
            ]
        else:
            assignments = [{}]
        for assignment in assignments:
            task_id = substitute_step_id(step.step_id, assignment)
            if task_id in seen_ids:
                raise CompileError(
                    "duplicate-task-id",
                    f"substitution yields duplicate task id {task_id}",
                )
            seen_ids.add(task_id)
            given_ids = []
            for c in step.given:
                cid = normalize_condition(substitute_text(c.raw, assignment))
                given_ids.append(cid)
                if c.kind is ConditionKind.EXTERNAL:
                    external_templates.add(cid)
                condition_kind.setdefault(cid, ConditionKind.INTERNAL)
            then_ids = []
            for c in step.then:
                cid = normalize_condition(substitute_text(c.raw, assignment))
                then_ids.append(cid)
                condition_kind.setdefault(cid, ConditionKind.INTERNAL)
            tasks.append(
                TaskNode(
                    task_id=task_id,
                    when=substitute_text(step.when, assignment),
                    given=tuple(given_ids),
                    then=tuple(then_ids),
                    step_type=step.step_type,
                    responsible=resolve_responsible(step.responsible, assignment, bindings),
                    priority=step.priority,
                    phase=step.phase,
                    duration_limit=step.duration_limit,
                    data_spec=step.data_spec,
                    origin=(template.id, step.step_id, tuple(sorted(assignment.items()))),
                )
            )

    produced = {c for t in tasks for c in t.then}
    for cid in external_templates:
        if cid not in produced:
            condition_kind[cid] = ConditionKind.EXTERNAL

    phases = template.phases or tuple(
        dict.fromkeys(s.phase for s in template.steps if s.phase)
    )
    order_index = {t.task_id: i for i, t in enumerate(tasks)}
    graph = TaskGraph(
        mission_template_id=template.id,
        tasks=tuple(
            sorted(
                tasks,
                key=lambda t: (
                    phases.index(t.phase) if t.phase in phases else len(phases),
                    order_index[t.task_id],
                ),
            )
        ),
        conditions=tuple(sorted(condition_kind.items())),
        phases=tuple(phases),
        actors=template.actors(),
    )
    if validate:
        try:
            graph.check()
        except ValidationError as exc:
            raise CompileError("invalid-graph", str(exc)) from exc
    return graph


def expansion_count(template: ScenarioTemplate) -> int:
    """|tasks| = sum over steps of the product of referenced domain sizes."""
    domains = {v.name: len(v.domain) for v in template.index_variables()}
    total = 0
    for step in template.steps:
        n = 1
        for v in step_index_variables(step, template):
            n *= domains[v]
        total += n
    return total


# -- lint -----------------------------------------------------------------------


def lint(
    template: ScenarioTemplate,
    subprocesses: Iterable[SubProcessDef] = (),
    auto_external: bool = False,
) -> LintReport:
    """Static validation of a parsed template against its sub-process library.

    Never raises; every problem becomes a finding. With auto_external,
    producer-less internal Given conditions are downgraded to warnings
    (treated as externally confirmable) instead of errors.
    """
    report = LintReport()

    def err(code: str, msg: str, loc: str = ""):
        report.findings.append(LintFinding(code, LintSeverity.ERROR, msg, loc))

    def warn(code: str, msg: str, loc: str = ""):
        report.findings.append(LintFinding(code, LintSeverity.WARNING, msg, loc))

    try:
        template.check()
    except ValidationError as exc:
        err("invalid-template", str(exc), template.id)
        return report

    for step in template.steps:
        if step.step_type is StepType.TD and step.data_spec is None:
            err("td-missing-data-spec", f"TD step {step.step_id} has no data spec", step.step_id)

    try:
        inlined = inline_subprocesses(template, subprocesses)
    except CompileError as exc:
        err(exc.code, str(exc), template.id)
        return report

    actors = set(template.actors()) | {"machine"}
    for step in inlined.steps:
        resp = step.responsible.strip()
        if not resp:
            err("missing-responsible", f"step {step.step_id} has no responsible role", step.step_id)
        elif not referenced_variables(resp) and resp not in actors:
            err(
                "unknown-responsible",
                f"step {step.step_id}: responsible {resp!r} is not a declared actor",
                step.step_id,
            )

    try:
        graph = expand(inlined, validate=False)
    except CompileError as exc:
        err(exc.code, str(exc), template.id)
        return report

    kinds = graph.condition_kinds()
    producers = graph.producers()
    consumers = graph.consumers()

    for cid, kind in sorted(kinds.items()):
        consumed = cid in consumers
        produced = cid in producers
        if consumed and not produced and kind is ConditionKind.INTERNAL:
            msg = f"unsatisfiable precondition: {cid!r} consumed by " + ", ".join(consumers[cid])
            if auto_external:
                warn("auto-external", msg + " (auto-classified external)", cid)
            else:
                err("unsatisfiable-precondition", msg, cid)
        if produced and not consumed:
            warn(
                "dangling-postcondition",
                f"condition {cid!r} produced by {', '.join(producers[cid])} but never consumed",
                cid,
            )

    cycle = find_condition_cycle(graph)
    if cycle:
        err("condition-cycle", "cyclic condition dependencies: " + " -> ".join(cycle), cycle[0])

    return report


def auto_externalize(graph: TaskGraph) -> TaskGraph:
    """Reclassify producer-less consumed conditions as external (lint auto mode)."""
    producers = graph.producers()
    conditions = tuple(
        (cid, ConditionKind.EXTERNAL if cid not in producers and kind is ConditionKind.INTERNAL
         else kind)
        for cid, kind in graph.conditions
    )
    return replace(graph, conditions=conditions)


# -- suite compilation ------------------------------------------------------------


@dataclass
class SuiteCompileResult:
    graphs: list[TaskGraph] = field(default_factory=list)
    reports: list[tuple[str, LintReport]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(r.passed for _, r in self.reports)


def compile_scenario(
    template: ScenarioTemplate,
    subprocesses: Iterable[SubProcessDef] = (),
    auto_external: bool = False,
) -> TaskGraph:
    """lint + inline + expand; raises CompileError if lint fails."""
    report = lint(template, subprocesses, auto_external=auto_external)
    if not report.passed:
        raise CompileError(
            "lint-failed",
            f"scenario {template.id} failed lint: "
            + "; ".join(str(f) for f in report.errors),
        )
    graph = expand(inline_subprocesses(template, subprocesses), validate=not auto_external)
    if auto_external:
        graph = auto_externalize(graph)
        graph.check()
    return graph


def compile_suite(
    suite: Suite,
    templates: Sequence[ScenarioTemplate],
    subprocesses: Iterable[SubProcessDef] = (),
    auto_external: bool = False,
) -> SuiteCompileResult:
    """Compile all suite members, in order; emit no graphs if any member fails."""
    defs = list(subprocesses)
    result = SuiteCompileResult()
    graphs: list[TaskGraph] = []
    for template in templates:
        report = lint(template, defs, auto_external=auto_external)
        result.reports.append((template.id, report))
        if report.passed:
            graphs.append(compile_scenario(template, defs, auto_external=auto_external))
    if result.ok:
        result.graphs = graphs
    return result


# -- mission package serialization --------------------------------------------------


def data_spec_to_dict(spec: Optional[DataSpec]) -> Optional[dict]:
    if spec is None:
        return None
    return {
        "field_name": spec.field_name,
        "datatype": spec.datatype,
        "enum_values": list(spec.enum_values),
        "min_value": spec.min_value,
        "max_value": spec.max_value,
        "pattern": spec.pattern,
        "telemetry_key": spec.telemetry_key,
    }


def data_spec_from_dict(obj: Optional[dict]) -> Optional[DataSpec]:
    if obj is None:
        return None
    return DataSpec(
        field_name=obj["field_name"],
        datatype=obj["datatype"],
        enum_values=tuple(obj.get("enum_values") or ()),
        min_value=obj.get("min_value"),
        max_value=obj.get("max_value"),
        pattern=obj.get("pattern"),
        telemetry_key=obj.get("telemetry_key"),
    )


def to_package(graph: TaskGraph) -> dict:
    return {
        "version": PACKAGE_VERSION,
        "mission_template_id": graph.mission_template_id,
        "phases": list(graph.phases),
        "actors": list(graph.actors),
        "tasks": [
            {
                "task_id": t.task_id,
                "when": t.when,
                "given": list(t.given),
                "then": list(t.then),
                "step_type": t.step_type.value,
                "responsible": t.responsible,
                "priority": t.priority,
                "phase": t.phase,
                "duration_limit": t.duration_limit,
                "data_spec": data_spec_to_dict(t.data_spec),
                "origin": {
                    "scenario_id": t.origin[0],
                    "step_id": t.origin[1],
                    "assignment": dict(t.origin[2]),
                },
            }
            for t in graph.tasks
        ],
        "conditions": [
            {"id": cid, "kind": kind.value} for cid, kind in graph.conditions
        ],
        "bindings_required": list(graph.bindings_required()),
    }


def package_json(graph: TaskGraph) -> str:
    """Deterministic JSON text: fixed field order, fixed formatting."""
    return json.dumps(to_package(graph), indent=2, ensure_ascii=False) + "\n"


def from_package(obj: dict) -> TaskGraph:
    if obj.get("version") != PACKAGE_VERSION:
        raise CompileError("bad-package", f"unsupported package version {obj.get('version')!r}")
    tasks = tuple(
        TaskNode(
            task_id=t["task_id"],
            when=t["when"],
            given=tuple(t["given"]),
            then=tuple(t["then"]),
            step_type=StepType(t["step_type"]),
            responsible=t["responsible"],
            priority=t["priority"],
            phase=t.get("phase", ""),
            duration_limit=t.get("duration_limit"),
            data_spec=data_spec_from_dict(t.get("data_spec")),
            origin=(
                t.get("origin", {}).get("scenario_id", ""),
                t.get("origin", {}).get("step_id", ""),
                tuple(sorted((t.get("origin", {}).get("assignment") or {}).items())),
            ),
        )
        for t in obj["tasks"]
    )
    return TaskGraph(
        mission_template_id=obj["mission_template_id"],
        tasks=tasks,
        conditions=tuple((c["id"], ConditionKind(c["kind"])) for c in obj["conditions"]),
        phases=tuple(obj.get("phases") or ()),
        actors=tuple(obj.get("actors") or ()),
    )
