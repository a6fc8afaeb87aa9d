"""Core domain types shared by the parser, compiler, engine, and analysis.

Pure in-memory values: no I/O, no parsing. Everything here is immutable
(or treated as such) and safe to share between threads.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Union


class ValidationError(ValueError):
    """Raised when a value violates a model invariant."""


VARIABLE_RE = re.compile(r"<(\w+)>")


def normalize_condition(raw: str) -> str:
    """Canonical identity of a condition text.

    Lowercase, internal whitespace runs collapsed to a single space,
    one trailing period stripped. Variable placeholders like ``<x>``
    survive verbatim (modulo lowercasing). Idempotent.
    """
    s = " ".join(raw.split())
    if not s:
        raise ValidationError("condition text is empty after trimming")
    s = s.lower()
    if s.endswith("."):
        s = s[:-1].rstrip()
    if not s:
        raise ValidationError("condition text is empty after trimming")
    return s


def referenced_variables(text: str) -> set[str]:
    """Names of all ``<var>`` placeholders occurring in a text."""
    return set(VARIABLE_RE.findall(text))


class StepType(str, Enum):
    TE = "TE"  # test execution
    TD = "TD"  # test data collection


class ConditionKind(str, Enum):
    INTERNAL = "internal"  # produced by some step's Then
    EXTERNAL = "external"  # confirmed manually in the field


class VariableKind(str, Enum):
    INDEX = "index"      # expanded at compile time over a finite domain
    BINDING = "binding"  # bound to a concrete actor at mission start


@dataclass(frozen=True)
class ConditionText:
    raw: str
    kind: ConditionKind = ConditionKind.INTERNAL

    @property
    def normalized(self) -> str:
        return normalize_condition(self.raw)


@dataclass(frozen=True)
class VariableDecl:
    name: str
    domain: tuple[str, ...] = ()
    kind: VariableKind = VariableKind.INDEX
    # binding variables may be anchored to a subject expression, e.g. the
    # pilot of sUAS<x>; the anchor text may itself contain index variables
    anchor: Optional[str] = None

    def check(self) -> None:
        if not self.name:
            raise ValidationError("variable name is empty")
        if self.kind is VariableKind.INDEX and not self.domain:
            raise ValidationError(f"index variable <{self.name}> has an empty domain")


@dataclass(frozen=True)
class DataSpec:
    field_name: str
    datatype: str  # number | integer | text | boolean | enum
    enum_values: tuple[str, ...] = ()
    min_value: Optional[float] = None
    max_value: Optional[float] = None
    pattern: Optional[str] = None
    telemetry_key: Optional[str] = None

    def check(self) -> None:
        if self.datatype not in ("number", "integer", "text", "boolean", "enum"):
            raise ValidationError(f"unknown datatype {self.datatype!r}")
        if self.datatype == "enum" and not self.enum_values:
            raise ValidationError("enum data spec has no values")
        if self.min_value is not None and self.max_value is not None:
            if self.min_value > self.max_value:
                raise ValidationError("data spec range has min > max")
        if self.pattern is not None:
            re.compile(self.pattern)

    def coerce(self, value: object) -> object:
        """Coerce a raw value to the spec's datatype or raise ValidationError."""
        if self.datatype == "integer":
            if isinstance(value, bool) or not isinstance(value, (int, str)):
                raise ValidationError(f"expected integer, got {value!r}")
            try:
                return int(value)
            except ValueError:
                raise ValidationError(f"expected integer, got {value!r}") from None
        if self.datatype == "number":
            if isinstance(value, bool) or not isinstance(value, (int, float, str)):
                raise ValidationError(f"expected number, got {value!r}")
            try:
                return float(value)
            except ValueError:
                raise ValidationError(f"expected number, got {value!r}") from None
        if self.datatype == "boolean":
            if isinstance(value, bool):
                return value
            if isinstance(value, str) and value.lower() in ("true", "false"):
                return value.lower() == "true"
            raise ValidationError(f"expected boolean, got {value!r}")
        # text and enum take strings
        if not isinstance(value, str):
            raise ValidationError(f"expected text, got {value!r}")
        return value

    def is_valid(self, value: object) -> bool:
        """Whether a (coerced) value satisfies the declared validation.

        Out-of-range values are legitimate field observations; callers
        store them flagged rather than rejecting.
        """
        if self.datatype == "enum":
            return value in self.enum_values
        if self.datatype in ("number", "integer"):
            v = float(value)  # type: ignore[arg-type]
            if self.min_value is not None and v < self.min_value:
                return False
            if self.max_value is not None and v > self.max_value:
                return False
            return True
        if self.pattern is not None:
            return re.fullmatch(self.pattern, str(value)) is not None
        return True


@dataclass(frozen=True)
class SubProcessRef:
    name: str
    params: tuple[tuple[str, str], ...] = ()  # parameter name -> binding expression text

    @property
    def param_map(self) -> dict[str, str]:
        return dict(self.params)


@dataclass(frozen=True)
class StepTemplate:
    step_id: str
    when: str
    given: tuple[ConditionText, ...] = ()
    then: tuple[ConditionText, ...] = ()
    step_type: StepType = StepType.TE
    responsible: str = ""
    priority: int = 3
    phase: str = ""
    duration_limit: Optional[float] = None
    subprocess: Optional[SubProcessRef] = None
    data_spec: Optional[DataSpec] = None

    def check(self) -> None:
        if not self.step_id:
            raise ValidationError("step id is empty")
        if not self.when.strip() and self.subprocess is None:
            raise ValidationError(f"step {self.step_id}: when-clause is empty")
        if not (1 <= self.priority <= 5):
            raise ValidationError(f"step {self.step_id}: priority {self.priority} not in 1..5")
        if self.step_type is StepType.TD and self.data_spec is None:
            raise ValidationError(f"step {self.step_id}: TD step requires a data spec")
        if self.step_type is StepType.TE and self.data_spec is not None:
            raise ValidationError(f"step {self.step_id}: TE step must not carry a data spec")
        if self.data_spec is not None:
            self.data_spec.check()

    def variables(self) -> set[str]:
        """All variable names referenced anywhere in this step."""
        names = referenced_variables(self.when)
        for cond in self.given + self.then:
            names |= referenced_variables(cond.raw)
        names |= referenced_variables(self.responsible)
        names |= referenced_variables(self.step_id)
        if self.subprocess is not None:
            for _, expr in self.subprocess.params:
                names |= referenced_variables(expr)
        return names


@dataclass(frozen=True)
class SubProcessDef:
    name: str
    params: tuple[str, ...]
    steps: tuple[StepTemplate, ...]

    def check(self) -> None:
        if not self.steps:
            raise ValidationError(f"sub-process {self.name}: empty body")
        used: set[str] = set()
        for step in self.steps:
            used |= step.variables()
        for p in self.params:
            if p not in used:
                raise ValidationError(f"sub-process {self.name}: parameter {p} never referenced")


@dataclass(frozen=True)
class ScenarioTemplate:
    id: str
    name: str = ""
    description: str = ""
    primary_actors: tuple[str, ...] = ()
    supporting_actors: tuple[str, ...] = ()
    variables: tuple[VariableDecl, ...] = ()
    phases: tuple[str, ...] = ()
    steps: tuple[StepTemplate, ...] = ()

    def variable(self, name: str) -> Optional[VariableDecl]:
        for v in self.variables:
            if v.name == name:
                return v
        return None

    def index_variables(self) -> list[VariableDecl]:
        return [v for v in self.variables if v.kind is VariableKind.INDEX]

    def actors(self) -> tuple[str, ...]:
        return self.primary_actors + self.supporting_actors

    def check(self) -> None:
        if not self.id.strip():
            raise ValidationError("scenario id is empty")
        declared = {v.name for v in self.variables}
        seen_ids: set[str] = set()
        for step in self.steps:
            step.check()
            if step.step_id in seen_ids:
                raise ValidationError(f"duplicate step id {step.step_id}")
            seen_ids.add(step.step_id)
            undeclared = step.variables() - declared
            if undeclared:
                raise ValidationError(
                    f"step {step.step_id}: undeclared variable(s) "
                    + ", ".join(sorted(undeclared))
                )
            if step.phase and self.phases and step.phase not in self.phases:
                raise ValidationError(f"step {step.step_id}: unknown phase {step.phase!r}")
        for v in self.variables:
            v.check()


def structurally_equal(a: ScenarioTemplate, b: ScenarioTemplate) -> bool:
    """Equality up to incidental surface differences.

    Condition texts compare by normalized form; free text fields compare
    whitespace-collapsed. Used to check that different front ends (DSL vs
    CSV import) produced the same template.
    """
    def norm_text(s: str) -> str:
        return " ".join(s.split())

    def norm_conds(conds: tuple[ConditionText, ...]) -> tuple[tuple[str, str], ...]:
        return tuple((c.normalized, c.kind.value) for c in conds)

    def norm_step(s: StepTemplate) -> tuple:
        return (
            s.step_id,
            norm_text(s.when).rstrip("."),
            norm_conds(s.given),
            norm_conds(s.then),
            s.step_type,
            norm_text(s.responsible),
            s.priority,
            s.phase,
            s.duration_limit,
            (s.subprocess.name, s.subprocess.params) if s.subprocess else None,
            s.data_spec,
        )

    return (
        a.id == b.id
        and norm_text(a.name) == norm_text(b.name)
        and norm_text(a.description) == norm_text(b.description)
        and a.primary_actors == b.primary_actors
        and a.supporting_actors == b.supporting_actors
        and sorted(a.variables, key=lambda v: v.name) == sorted(b.variables, key=lambda v: v.name)
        and a.phases == b.phases
        and tuple(norm_step(s) for s in a.steps) == tuple(norm_step(s) for s in b.steps)
    )


@dataclass(frozen=True)
class Suite:
    name: str
    scenario_refs: tuple[str, ...] = ()


@dataclass(frozen=True)
class TaskNode:
    task_id: str
    when: str
    given: tuple[str, ...] = ()  # normalized condition ids
    then: tuple[str, ...] = ()
    step_type: StepType = StepType.TE
    responsible: str = ""  # concrete role or symbolic "binding(subject)"
    priority: int = 3
    phase: str = ""
    duration_limit: Optional[float] = None
    data_spec: Optional[DataSpec] = None
    # where the task came from: (scenario id, template step id, variable assignment)
    origin: tuple[str, str, tuple[tuple[str, str], ...]] = ("", "", ())

    def is_binding(self) -> bool:
        return self.responsible.startswith("binding(")

    def binding_key(self) -> Optional[str]:
        if self.is_binding():
            return self.responsible[len("binding("):-1]
        return None


@dataclass(frozen=True)
class TaskGraph:
    mission_template_id: str
    tasks: tuple[TaskNode, ...] = ()
    conditions: tuple[tuple[str, ConditionKind], ...] = ()
    phases: tuple[str, ...] = ()
    actors: tuple[str, ...] = ()

    def task(self, task_id: str) -> Optional[TaskNode]:
        for t in self.tasks:
            if t.task_id == task_id:
                return t
        return None

    def condition_kinds(self) -> dict[str, ConditionKind]:
        return dict(self.conditions)

    def bindings_required(self) -> tuple[str, ...]:
        keys: list[str] = []
        for t in self.tasks:
            k = t.binding_key()
            if k is not None and k not in keys:
                keys.append(k)
        return tuple(keys)

    def producers(self) -> dict[str, list[str]]:
        """Condition id -> task ids whose Then produces it."""
        out: dict[str, list[str]] = {}
        for t in self.tasks:
            for c in t.then:
                out.setdefault(c, []).append(t.task_id)
        return out

    def consumers(self) -> dict[str, list[str]]:
        out: dict[str, list[str]] = {}
        for t in self.tasks:
            for c in t.given:
                out.setdefault(c, []).append(t.task_id)
        return out

    def phase_index(self, phase: str) -> int:
        try:
            return self.phases.index(phase)
        except ValueError:
            return len(self.phases)

    def check(self) -> None:
        seen: set[str] = set()
        kinds = self.condition_kinds()
        for t in self.tasks:
            if t.task_id in seen:
                raise ValidationError(f"duplicate task id {t.task_id}")
            seen.add(t.task_id)
            if not (1 <= t.priority <= 5):
                raise ValidationError(f"task {t.task_id}: priority out of range")
        producers = self.producers()
        for t in self.tasks:
            for c in t.given:
                if kinds.get(c, ConditionKind.INTERNAL) is ConditionKind.INTERNAL:
                    if c not in producers:
                        raise ValidationError(
                            f"task {t.task_id}: internal condition {c!r} has no producer"
                        )
        cycle = find_condition_cycle(self)
        if cycle:
            raise ValidationError("condition dependency cycle: " + " -> ".join(cycle))


def find_condition_cycle(graph: TaskGraph) -> Optional[list[str]]:
    """Cycle (as a task id list) in the task -> Then -> consumer relation, or None."""
    producers = graph.producers()
    succ: dict[str, list[str]] = {t.task_id: [] for t in graph.tasks}
    for t in graph.tasks:
        for c in t.given:
            for p in producers.get(c, ()):
                succ[p].append(t.task_id)

    WHITE, GRAY, BLACK = 0, 1, 2
    color = {tid: WHITE for tid in succ}
    stack: list[str] = []

    def visit(tid: str) -> Optional[list[str]]:
        color[tid] = GRAY
        stack.append(tid)
        for nxt in succ[tid]:
            if color[nxt] == GRAY:
                return stack[stack.index(nxt):] + [nxt]
            if color[nxt] == WHITE:
                found = visit(nxt)
                if found:
                    return found
        stack.pop()
        color[tid] = BLACK
        return None

    for tid in succ:
        if color[tid] == WHITE:
            found = visit(tid)
            if found:
                return found
    return None


Value = Union[int, float, str, bool]
