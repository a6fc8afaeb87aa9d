"""Scenario DSL parser and spreadsheet (CSV) template importer.

The DSL is block-structured, line-oriented text. One file may hold any mix
of ``scenario``, ``subprocess``, and ``suite`` blocks. Parsing is total:
malformed input yields diagnostics with source spans, never an exception.

Grammar sketch::

    # comment lines start with '#'
    scenario TC01 "Multi-sUAS Synchronized Takeoff"
      description: Multiple sUAS shall perform a synchronized takeoff.
      primary: mission_commander, sUAS
      supporting: pilot_1, pilot_2, pilot_3
      var x in 1..3
      binding pilot for sUAS<x>
      phases: preparation, takeoff
      external: sUAS<x> is available at test site.

      step 1x.1
        given: sUAS<x> is available at test site.
        when: RPIC(sUAS<x> -> <pilot>) shall place sUAS<x> in its launch location.
        then: sUAS<x> is placed in its launch position.
        type: TE
        responsible: <pilot>
        priority: 2
        phase: preparation
        duration: 120

      step 1x.2
        given: sUAS<x> is disabled.
        when: RPIC(sUAS<x> -> <pilot>) shall activate and arm sUAS<x>.
        then: sUAS<x> is activated and armed.
        responsible: <pilot>
        uses sUASArm(sUAS = sUAS<x>, pilot = sUAS<x> -> <pilot>)

    subprocess sUASArm(sUAS, pilot)
      step 1
        when: ...
        ...

    suite "Field test suite"
      scenario takeoff_basic.fits

TD steps carry a ``data:`` clause::

    data: satellite_fixes integer range 6..30 telemetry satellite_fixes
    data: flight_mode enum(GUIDED, LOITER, RTL) telemetry mode
"""

from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Optional

from .model import (
    ConditionKind,
    ConditionText,
    DataSpec,
    ScenarioTemplate,
    StepTemplate,
    StepType,
    SubProcessDef,
    SubProcessRef,
    Suite,
    ValidationError,
    VariableDecl,
    VariableKind,
    normalize_condition,
)


class Severity(str, Enum):
    ERROR = "error"
    WARNING = "warning"


@dataclass(frozen=True)
class SourceSpan:
    file: str
    line: int
    column: int = 1
    length: int = 1


@dataclass(frozen=True)
class ParseDiagnostic:
    severity: Severity
    code: str
    message: str
    span: SourceSpan

    def __str__(self) -> str:
        return (
            f"{self.span.file}:{self.span.line}:{self.span.column}: "
            f"{self.severity.value}[{self.code}]: {self.message}"
        )


@dataclass
class ParseResult:
    value: object = None
    diagnostics: list[ParseDiagnostic] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.value is not None and not self.errors

    @property
    def errors(self) -> list[ParseDiagnostic]:
        return [d for d in self.diagnostics if d.severity is Severity.ERROR]

    @property
    def warnings(self) -> list[ParseDiagnostic]:
        return [d for d in self.diagnostics if d.severity is Severity.WARNING]


@dataclass
class Document:
    scenarios: list[ScenarioTemplate] = field(default_factory=list)
    subprocesses: list[SubProcessDef] = field(default_factory=list)
    suites: list[Suite] = field(default_factory=list)
    diagnostics: list[ParseDiagnostic] = field(default_factory=list)

    @property
    def errors(self) -> list[ParseDiagnostic]:
        return [d for d in self.diagnostics if d.severity is Severity.ERROR]


_DURATION_RE = re.compile(r"^(\d+(?:\.\d+)?)\s*(s|m|sec|min)?$")
_RANGE_RE = re.compile(r"^(-?\d+)\s*\.\.\s*(-?\d+)$")
_IDENT_RE = re.compile(r"^[A-Za-z_][\w.-]*$")


def _parse_duration(text: str) -> Optional[float]:
    m = _DURATION_RE.match(text.strip())
    if not m:
        return None
    value = float(m.group(1))
    if m.group(2) in ("m", "min"):
        value *= 60.0
    return value


def parse_data_spec(text: str) -> DataSpec:
    """Parse a data clause: ``name datatype [range a..b|pattern /re/] [telemetry key]``.

    Raises ValidationError on malformed input.
    """
    rest = text.strip()
    m = re.match(r"^(\w+)\s+(number|integer|text|boolean|enum)", rest)
    if not m:
        raise ValidationError(f"malformed data spec: {text!r}")
    name, datatype = m.group(1), m.group(2)
    rest = rest[m.end():].strip()
    enum_values: tuple[str, ...] = ()
    if datatype == "enum":
        em = re.match(r"^\(([^)]*)\)", rest)
        if not em:
            raise ValidationError("enum data spec requires a value list in parentheses")
        enum_values = tuple(v.strip() for v in em.group(1).split(",") if v.strip())
        rest = rest[em.end():].strip()
    min_value = max_value = None
    pattern = None
    telemetry_key = None
    while rest:
        rm = re.match(r"^range\s+(-?\d+(?:\.\d+)?)\s*\.\.\s*(-?\d+(?:\.\d+)?)", rest)
        if rm:
            min_value, max_value = float(rm.group(1)), float(rm.group(2))
            rest = rest[rm.end():].strip()
            continue
        pm = re.match(r"^pattern\s+/([^/]*)/", rest)
        if pm:
            pattern = pm.group(1)
            rest = rest[pm.end():].strip()
            continue
        tm = re.match(r"^telemetry\s+(\w+)", rest)
        if tm:
            telemetry_key = tm.group(1)
            rest = rest[tm.end():].strip()
            continue
        raise ValidationError(f"unrecognized data spec clause: {rest!r}")
    spec = DataSpec(
        field_name=name,
        datatype=datatype,
        enum_values=enum_values,
        min_value=min_value,
        max_value=max_value,
        pattern=pattern,
        telemetry_key=telemetry_key,
    )
    spec.check()
    return spec


def format_data_spec(spec: DataSpec) -> str:
    parts = [spec.field_name, spec.datatype]
    if spec.datatype == "enum":
        parts[-1] += "(" + ", ".join(spec.enum_values) + ")"
    if spec.min_value is not None or spec.max_value is not None:
        lo = int(spec.min_value) if spec.min_value == int(spec.min_value or 0) else spec.min_value
        hi = int(spec.max_value) if spec.max_value == int(spec.max_value or 0) else spec.max_value
        parts.append(f"range {lo}..{hi}")
    if spec.pattern is not None:
        parts.append(f"pattern /{spec.pattern}/")
    if spec.telemetry_key is not None:
        parts.append(f"telemetry {spec.telemetry_key}")
    return " ".join(parts)


class _Parser:
    """Single-pass, line-oriented parser collecting diagnostics."""

    def __init__(self, source: str, file: str = "<string>"):
        self.lines = source.splitlines()
        self.file = file
        self.doc = Document()
        self.pos = 0

    def span(self, line_no: int, column: int = 1, length: int = 1) -> SourceSpan:
        return SourceSpan(self.file, max(line_no, 1), max(column, 1), max(length, 1))

    def error(self, code: str, message: str, line_no: int, column: int = 1, length: int = 1):
        self.doc.diagnostics.append(
            ParseDiagnostic(Severity.ERROR, code, message, self.span(line_no, column, length))
        )

    def warn(self, code: str, message: str, line_no: int, column: int = 1, length: int = 1):
        self.doc.diagnostics.append(
            ParseDiagnostic(Severity.WARNING, code, message, self.span(line_no, column, length))
        )

    def _next_content_line(self) -> Optional[tuple[int, str]]:
        """Peek the next non-blank, non-comment line (1-based number, stripped text)."""
        i = self.pos
        while i < len(self.lines):
            stripped = self.lines[i].strip()
            if stripped and not stripped.startswith("#"):
                return i + 1, stripped
            i += 1
        return None

    def _advance_to(self, line_no: int) -> None:
        self.pos = line_no  # line_no is 1-based; pos is the 0-based index after it

    def parse(self) -> Document:
        while True:
            nxt = self._next_content_line()
            if nxt is None:
                break
            line_no, text = nxt
            if text.startswith("scenario "):
                self._advance_to(line_no)
                self._parse_scenario(line_no, text)
            elif text.startswith("subprocess "):
                self._advance_to(line_no)
                self._parse_subprocess(line_no, text)
            elif text.startswith("suite ") or text == "suite":
                self._advance_to(line_no)
                self._parse_suite(line_no, text)
            else:
                keyword = text.split()[0]
                self.error(
                    "unknown-keyword",
                    f"expected scenario, subprocess, or suite declaration, got {keyword!r}",
                    line_no,
                    length=len(keyword),
                )
                self._advance_to(line_no)
        return self.doc

    # -- block bodies ------------------------------------------------------

    _BLOCK_STARTERS = ("scenario ", "subprocess ", "suite ")

    def _body_lines(self):
        """Yield (line_no, text) until the next top-level block starts."""
        while True:
            nxt = self._next_content_line()
            if nxt is None:
                return
            line_no, text = nxt
            if any(text.startswith(k) for k in self._BLOCK_STARTERS):
                return
            self._advance_to(line_no)
            yield line_no, text

    def _parse_scenario(self, line_no: int, header: str) -> None:
        m = re.match(r'^scenario\s+(\S+)(?:\s+"([^"]*)")?\s*$', header)
        if not m:
            self.error("bad-header", "malformed scenario header", line_no)
            scenario_id, name = "<invalid>", ""
        else:
            scenario_id, name = m.group(1), m.group(2) or ""

        description = ""
        primary: list[str] = []
        supporting: list[str] = []
        variables: list[VariableDecl] = []
        phases: list[str] = []
        externals: list[str] = []
        steps: list[StepTemplate] = []
        step_ids: set[str] = set()
        current: Optional[dict] = None

        def flush_step():
            nonlocal current
            if current is None:
                return
            s = current
            current = None
            if not s["when"] and s["subprocess"] is None:
                self.error("missing-when", f"step {s['id']}: missing when-clause", s["line"])
                return
            if s["type"] is StepType.TD and s["data"] is None:
                self.error(
                    "td-missing-data-spec",
                    f"step {s['id']}: TD step requires a data spec",
                    s["line"],
                )
                return
            if s["type"] is StepType.TE and s["data"] is not None:
                self.error(
                    "te-with-data-spec",
                    f"step {s['id']}: TE step must not carry a data spec",
                    s["line"],
                )
                return
            if s["id"] in step_ids:
                self.error("duplicate-step-id", f"duplicate step id {s['id']}", s["line"])
                return
            step_ids.add(s["id"])
            steps.append(
                StepTemplate(
                    step_id=s["id"],
                    when=s["when"],
                    given=tuple(s["given"]),
                    then=tuple(s["then"]),
                    step_type=s["type"],
                    responsible=s["responsible"],
                    priority=s["priority"],
                    phase=s["phase"],
                    duration_limit=s["duration"],
                    subprocess=s["subprocess"],
                    data_spec=s["data"],
                )
            )

        for ln, text in self._body_lines():
            if text.startswith("step "):
                flush_step()
                step_id = text[len("step "):].strip()
                if not step_id:
                    self.error("bad-step-id", "missing step id", ln)
                    step_id = f"<invalid@{ln}>"
                current = {
                    "id": step_id,
                    "line": ln,
                    "given": [],
                    "when": "",
                    "then": [],
                    "type": StepType.TE,
                    "responsible": "",
                    "priority": 3,
                    "phase": "",
                    "duration": None,
                    "subprocess": None,
                    "data": None,
                }
                continue

            if current is not None and self._parse_step_clause(current, ln, text):
                continue

            key, _, rest = text.partition(":")
            key = key.strip()
            rest = rest.strip()
            if key == "description":
                description = rest
            elif key == "primary":
                primary = _split_list(rest)
            elif key == "supporting":
                supporting = _split_list(rest)
            elif key == "phases":
                phases = _split_list(rest)
            elif key == "external":
                if rest:
                    externals.append(rest)
                else:
                    self.error("empty-external", "external clause has no condition text", ln)
            elif text.startswith("var "):
                decl = self._parse_var(ln, text)
                if decl:
                    variables.append(decl)
            elif text.startswith("binding "):
                decl = self._parse_binding(ln, text)
                if decl:
                    variables.append(decl)
            else:
                self.error(
                    "unknown-keyword",
                    f"unrecognized clause in scenario {scenario_id}: {text.split()[0]!r}",
                    ln,
                    length=len(text.split()[0]),
                )
        flush_step()

        # classify external conditions by normalized text
        external_ids: set[str] = set()
        for raw in externals:
            try:
                external_ids.add(normalize_condition(raw))
            except ValidationError:
                pass
        steps = [_apply_external(s, external_ids) for s in steps]

        declared = {v.name for v in variables}
        for s in steps:
            undeclared = s.variables() - declared
            for name in sorted(undeclared):
                self.error(
                    "undeclared-variable",
                    f"step {s.step_id}: undeclared variable <{name}>",
                    line_no,
                )
        seen_phases = {s.phase for s in steps if s.phase}
        for ph in sorted(seen_phases - set(phases)):
            self.error("unknown-phase", f"step references undeclared phase {ph!r}", line_no)

        template = ScenarioTemplate(
            id=scenario_id,
            name=name,
            description=description,
            primary_actors=tuple(primary),
            supporting_actors=tuple(supporting),
            variables=tuple(variables),
            phases=tuple(phases),
            steps=tuple(steps),
        )
        self.doc.scenarios.append(template)

    def _parse_step_clause(self, s: dict, ln: int, text: str) -> bool:
        """Try to consume a line as a step clause. Returns True if consumed."""
        if text.startswith("uses "):
            ref = self._parse_uses(ln, text)
            if ref is not None:
                s["subprocess"] = ref
            return True
        key, sep, rest = text.partition(":")
        if not sep:
            return False
        key = key.strip()
        rest = rest.strip()
        if key == "given":
            kind = ConditionKind.INTERNAL
            m = re.search(r"\s*\[external\]\s*$", rest)
            if m:
                kind = ConditionKind.EXTERNAL
                rest = rest[: m.start()]
            if not rest.strip():
                self.error("empty-condition", "given clause has no condition text", ln)
                return True
            s["given"].append(ConditionText(rest.strip(), kind))
            return True
        if key == "when":
            s["when"] = rest
            return True
        if key == "then":
            if not rest:
                self.error("empty-condition", "then clause has no condition text", ln)
                return True
            s["then"].append(ConditionText(rest, ConditionKind.INTERNAL))
            return True
        if key == "type":
            if rest in ("TE", "TD"):
                s["type"] = StepType(rest)
            elif rest == "PC (M)":
                # legacy spreadsheet code for a manually confirmed execution step
                s["type"] = StepType.TE
            else:
                self.error("unknown-step-type", f"unknown step type {rest!r}", ln)
            return True
        if key == "responsible":
            s["responsible"] = rest
            return True
        if key == "priority":
            try:
                p = int(rest)
            except ValueError:
                self.error("bad-priority", f"priority must be an integer, got {rest!r}", ln)
                return True
            if not (1 <= p <= 5):
                self.error("bad-priority", f"priority {p} not in 1..5", ln)
                return True
            s["priority"] = p
            return True
        if key == "phase":
            s["phase"] = rest
            return True
        if key == "duration":
            d = _parse_duration(rest)
            if d is None:
                self.error("bad-duration", f"malformed duration {rest!r}", ln)
            else:
                s["duration"] = d
            return True
        if key == "data":
            try:
                s["data"] = parse_data_spec(rest)
            except ValidationError as exc:
                self.error("bad-data-spec", str(exc), ln)
            return True
        return False

    def _parse_uses(self, ln: int, text: str) -> Optional[SubProcessRef]:
        m = re.match(r"^uses\s+(\w+)\s*(?:\((.*)\))?\s*$", text)
        if not m:
            self.error("bad-uses", "malformed uses clause", ln)
            return None
        name = m.group(1)
        params: list[tuple[str, str]] = []
        if m.group(2):
            for item in m.group(2).split(","):
                if not item.strip():
                    continue
                k, sep, v = item.partition("=")
                if not sep or not k.strip() or not v.strip():
                    self.error("bad-uses", f"malformed parameter binding {item.strip()!r}", ln)
                    return None
                params.append((k.strip(), v.strip()))
        return SubProcessRef(name=name, params=tuple(params))

    def _parse_var(self, ln: int, text: str) -> Optional[VariableDecl]:
        m = re.match(r"^var\s+(\w+)\s+in\s+(.+)$", text)
        if not m:
            self.error("bad-var", "malformed variable declaration", ln)
            return None
        name, domain_text = m.group(1), m.group(2).strip()
        rm = _RANGE_RE.match(domain_text)
        if rm:
            lo, hi = int(rm.group(1)), int(rm.group(2))
            if lo > hi:
                self.error("bad-var", f"empty range {lo}..{hi}", ln)
                return None
            domain = tuple(str(i) for i in range(lo, hi + 1))
        elif domain_text.startswith("{") and domain_text.endswith("}"):
            domain = tuple(v.strip() for v in domain_text[1:-1].split(",") if v.strip())
            if not domain:
                self.error("bad-var", "empty value list", ln)
                return None
        else:
            self.error("bad-var", f"malformed domain {domain_text!r}", ln)
            return None
        return VariableDecl(name=name, domain=domain, kind=VariableKind.INDEX)

    def _parse_binding(self, ln: int, text: str) -> Optional[VariableDecl]:
        m = re.match(r"^binding\s+(\w+)(?:\s+for\s+(.+))?$", text)
        if not m:
            self.error("bad-binding", "malformed binding declaration", ln)
            return None
        return VariableDecl(
            name=m.group(1),
            domain=(),
            kind=VariableKind.BINDING,
            anchor=m.group(2).strip() if m.group(2) else None,
        )

    def _parse_subprocess(self, line_no: int, header: str) -> None:
        m = re.match(r"^subprocess\s+(\w+)\s*\(([^)]*)\)\s*$", header)
        if not m:
            self.error("bad-header", "malformed subprocess header", line_no)
            return
        name = m.group(1)
        params = tuple(p.strip() for p in m.group(2).split(",") if p.strip())

        steps: list[StepTemplate] = []
        step_ids: set[str] = set()
        current: Optional[dict] = None

        def flush_step():
            nonlocal current
            if current is None:
                return
            s = current
            current = None
            if not s["when"] and s["subprocess"] is None:
                self.error("missing-when", f"step {s['id']}: missing when-clause", s["line"])
                return
            if s["id"] in step_ids:
                self.error("duplicate-step-id", f"duplicate step id {s['id']}", s["line"])
                return
            step_ids.add(s["id"])
            steps.append(
                StepTemplate(
                    step_id=s["id"],
                    when=s["when"],
                    given=tuple(s["given"]),
                    then=tuple(s["then"]),
                    step_type=s["type"],
                    responsible=s["responsible"],
                    priority=s["priority"],
                    phase=s["phase"],
                    duration_limit=s["duration"],
                    subprocess=s["subprocess"],
                    data_spec=s["data"],
                )
            )

        for ln, text in self._body_lines():
            if text.startswith("step "):
                flush_step()
                current = {
                    "id": text[len("step "):].strip(),
                    "line": ln,
                    "given": [],
                    "when": "",
                    "then": [],
                    "type": StepType.TE,
                    "responsible": "",
                    "priority": 3,
                    "phase": "",
                    "duration": None,
                    "subprocess": None,
                    "data": None,
                }
                continue
            if current is None:
                self.error(
                    "step-outside-body",
                    f"clause outside any step in subprocess {name}",
                    ln,
                )
                continue
            if not self._parse_step_clause(current, ln, text):
                self.error(
                    "unknown-keyword",
                    f"unrecognized clause in subprocess {name}: {text.split()[0]!r}",
                    ln,
                )
        flush_step()

        if not steps:
            self.error("empty-subprocess", f"empty sub-process {name}", line_no)
            return

        param_set = set(params)
        for s in steps:
            for var in sorted(s.variables() - param_set):
                self.error(
                    "undeclared-param",
                    f"subprocess {name} step {s.step_id}: undeclared parameter <{var}>",
                    line_no,
                )
        self.doc.subprocesses.append(SubProcessDef(name=name, params=params, steps=tuple(steps)))

    def _parse_suite(self, line_no: int, header: str) -> None:
        m = re.match(r'^suite(?:\s+"([^"]*)")?\s*$', header)
        name = (m.group(1) if m else "") or ""
        refs: list[str] = []
        for ln, text in self._body_lines():
            if text.startswith("include "):
                ref = text[len("include "):].strip()
                if ref in refs:
                    self.error("duplicate-reference", f"duplicate scenario reference {ref!r}", ln)
                else:
                    refs.append(ref)
            else:
                self.error(
                    "unknown-keyword",
                    f"unrecognized clause in suite: {text.split()[0]!r}",
                    ln,
                )
        if not refs:
            self.warn("empty-suite", "empty suite", line_no)
        self.doc.suites.append(Suite(name=name, scenario_refs=tuple(refs)))


def _split_list(text: str) -> list[str]:
    return [item.strip() for item in text.split(",") if item.strip()]


def _apply_external(step: StepTemplate, external_ids: set[str]) -> StepTemplate:
    def reclass(c: ConditionText) -> ConditionText:
        try:
            if c.normalized in external_ids:
                return ConditionText(c.raw, ConditionKind.EXTERNAL)
        except ValidationError:
            pass
        return c

    from dataclasses import replace
    return replace(step, given=tuple(reclass(c) for c in step.given))


# -- public entry points ----------------------------------------------------


def parse_document(source: str, file: str = "<string>") -> Document:
    try:
        return _Parser(source, file).parse()
    except RecursionError:
        doc = Document()
        doc.diagnostics.append(
            ParseDiagnostic(
                Severity.ERROR, "internal", "input too deeply nested", SourceSpan(file, 1)
            )
        )
        return doc


def parse_scenario(source: str, file: str = "<string>") -> ParseResult:
    """Parse a single scenario. Diagnostics instead of exceptions, always."""
    doc = parse_document(source, file)
    result = ParseResult(diagnostics=doc.diagnostics)
    if not doc.scenarios:
        if not result.errors:
            result.diagnostics.append(
                ParseDiagnostic(
                    Severity.ERROR,
                    "no-scenario",
                    "expected scenario declaration",
                    SourceSpan(file, 1, 1),
                )
            )
        return result
    if len(doc.scenarios) > 1:
        result.diagnostics.append(
            ParseDiagnostic(
                Severity.ERROR,
                "multiple-scenarios",
                f"expected one scenario, found {len(doc.scenarios)}",
                SourceSpan(file, 1, 1),
            )
        )
        return result
    if not result.errors:
        result.value = doc.scenarios[0]
    return result


def parse_subprocess(source: str, file: str = "<string>") -> ParseResult:
    doc = parse_document(source, file)
    result = ParseResult(diagnostics=doc.diagnostics)
    if not doc.subprocesses:
        if not result.errors:
            result.diagnostics.append(
                ParseDiagnostic(
                    Severity.ERROR,
                    "no-subprocess",
                    "expected subprocess declaration",
                    SourceSpan(file, 1, 1),
                )
            )
        return result
    if not result.errors:
        result.value = doc.subprocesses[0]
    return result


_SCENARIO_ID_RE = re.compile(r"^\s*scenario\s+(\S+)", re.MULTILINE)


def parse_suite(source: str, file: str = "<string>", base_dir: Optional[Path] = None) -> ParseResult:
    """Parse a suite file; with base_dir, resolve refs and reject duplicate ids."""
    doc = parse_document(source, file)
    result = ParseResult(diagnostics=doc.diagnostics)
    if not doc.suites:
        if not result.errors:
            result.diagnostics.append(
                ParseDiagnostic(
                    Severity.ERROR,
                    "no-suite",
                    "expected suite declaration",
                    SourceSpan(file, 1, 1),
                )
            )
        return result
    suite = doc.suites[0]
    if base_dir is not None:
        seen_ids: dict[str, str] = {}
        resolved: list[str] = []
        for ref in suite.scenario_refs:
            path = (base_dir / ref).resolve()
            if not path.is_file():
                result.diagnostics.append(
                    ParseDiagnostic(
                        Severity.ERROR,
                        "unresolvable-reference",
                        f"scenario file not found: {ref}",
                        SourceSpan(file, 1),
                    )
                )
                continue
            m = _SCENARIO_ID_RE.search(path.read_text(encoding="utf-8"))
            sid = m.group(1) if m else str(path)
            if sid in seen_ids:
                result.diagnostics.append(
                    ParseDiagnostic(
                        Severity.ERROR,
                        "duplicate-scenario-id",
                        f"duplicate scenario id {sid}",
                        SourceSpan(file, 1),
                    )
                )
                continue
            seen_ids[sid] = ref
            resolved.append(str(path))
        suite = Suite(name=suite.name, scenario_refs=tuple(resolved))
    if not result.errors:
        result.value = suite
    return result


# -- CSV import (spreadsheet template layout) --------------------------------

_SETUP_KEYS = {
    "id": "id",
    "name": "name",
    "description": "description",
    "primary actor": "primary",
    "supporting actor": "supporting",
    "variables": "variables",
    "phases": "phases",
    "external": "external",
}

_COLUMN_ALIASES = {
    "step": "step",
    "given": "given",
    "when": "when",
    "then": "then",
    "type": "type",
    "resp.": "responsible",
    "resp": "responsible",
    "responsible": "responsible",
    "prio.": "priority",
    "prio": "priority",
    "priority": "priority",
    "sub.pr.": "subprocess",
    "subprocess": "subprocess",
    "subpr. params": "params",
    "params": "params",
    "phase": "phase",
    "duration": "duration",
    "data": "data",
}

_MANDATORY_COLUMNS = ("step", "given", "when", "then", "type", "responsible")


def import_csv_template(source: str, file: str = "<csv>") -> ParseResult:
    """Import a spreadsheet-style scenario template.

    Optional process-setup rows (ID, Name, Description, Primary Actor,
    Supporting Actor, Variables, Phases, External) may precede the header
    row, which must start with ``Step``. Cells use RFC-4180 quoting.
    """
    result = ParseResult()

    def err(code: str, msg: str, line: int):
        result.diagnostics.append(
            ParseDiagnostic(Severity.ERROR, code, msg, SourceSpan(file, line))
        )

    def warn(code: str, msg: str, line: int):
        result.diagnostics.append(
            ParseDiagnostic(Severity.WARNING, code, msg, SourceSpan(file, line))
        )

    try:
        rows = list(csv.reader(io.StringIO(source)))
    except csv.Error as exc:
        err("bad-csv", f"CSV parse failure: {exc}", 1)
        return result

    setup: dict[str, str] = {}
    header_line = None
    columns: dict[str, int] = {}
    data_rows: list[tuple[int, list[str]]] = []

    for i, row in enumerate(rows, start=1):
        if not row or all(not c.strip() for c in row):
            continue
        first = row[0].strip()
        if header_line is None:
            key = first.lower()
            if key == "step":
                header_line = i
                for j, cell in enumerate(row):
                    canon = _COLUMN_ALIASES.get(cell.strip().lower())
                    if canon:
                        columns[canon] = j
                missing = [c for c in _MANDATORY_COLUMNS if c not in columns]
                if missing:
                    err("missing-column", "missing mandatory column(s): " + ", ".join(missing), i)
                    return result
            elif key in _SETUP_KEYS:
                setup[_SETUP_KEYS[key]] = row[1].strip() if len(row) > 1 else ""
            else:
                err("bad-setup-row", f"unrecognized setup row {first!r} before header", i)
                return result
        else:
            data_rows.append((i, row))

    if header_line is None:
        err("missing-header", "no header row starting with 'Step'", 1)
        return result

    variables: list[VariableDecl] = []
    for decl_text in _split_semis(setup.get("variables", "")):
        bm = re.match(r"^binding\s+(\w+)(?:\s+for\s+(.+))?$", decl_text)
        if bm:
            variables.append(
                VariableDecl(
                    bm.group(1), (), VariableKind.BINDING,
                    anchor=bm.group(2).strip() if bm.group(2) else None,
                )
            )
            continue
        vm = re.match(r"^(\w+)\s+in\s+(.+)$", decl_text)
        if vm:
            rm = _RANGE_RE.match(vm.group(2).strip())
            if rm:
                lo, hi = int(rm.group(1)), int(rm.group(2))
                domain = tuple(str(v) for v in range(lo, hi + 1))
            else:
                domain = tuple(v.strip() for v in vm.group(2).strip("{}").split(",") if v.strip())
            variables.append(VariableDecl(vm.group(1), domain, VariableKind.INDEX))
            continue
        err("bad-setup-row", f"malformed variable declaration {decl_text!r}", header_line)
    index_vars = [v.name for v in variables if v.kind is VariableKind.INDEX]

    externals: set[str] = set()
    for raw in _split_semis(setup.get("external", "")):
        try:
            externals.add(normalize_condition(raw))
        except ValidationError:
            pass

    def cell(row: list[str], name: str) -> str:
        j = columns.get(name)
        if j is None or j >= len(row):
            return ""
        return row[j].strip()

    steps: list[StepTemplate] = []
    seen_ids: set[str] = set()
    for line, row in data_rows:
        step_id = cell(row, "step")
        if not step_id:
            err("bad-step-id", "row has empty Step cell", line)
            continue
        if step_id in seen_ids:
            err("duplicate-step-id", f"duplicate step id {step_id}", line)
            continue
        type_code = cell(row, "type") or "TE"
        if type_code == "PC (M)":
            # legacy spreadsheet code: execution step with mandatory manual confirmation
            step_type = StepType.TE
        elif type_code in ("TE", "TD"):
            step_type = StepType(type_code)
        else:
            err("unknown-step-type", f"unknown Type code {type_code!r}", line)
            continue

        given = []
        for raw in _split_semis(cell(row, "given")):
            kind = ConditionKind.INTERNAL
            try:
                if normalize_condition(raw) in externals:
                    kind = ConditionKind.EXTERNAL
            except ValidationError:
                pass
            given.append(ConditionText(raw, kind))
        then = [ConditionText(raw) for raw in _split_semis(cell(row, "then"))]

        subprocess = None
        sp_name = cell(row, "subprocess")
        if sp_name:
            params_cell = cell(row, "params")
            params: list[tuple[str, str]] = []
            if params_cell:
                import json
                try:
                    obj = json.loads(params_cell)
                except json.JSONDecodeError as exc:
                    err("bad-params", f"malformed params object: {exc}", line)
                    continue
                if not isinstance(obj, dict):
                    err("bad-params", "params object must be a JSON object", line)
                    continue
                for k, v in obj.items():
                    params.append((str(k), _canonicalize_param_expr(str(v), index_vars)))
            subprocess = SubProcessRef(sp_name, tuple(params))

        prio_text = cell(row, "priority")
        try:
            priority = int(prio_text) if prio_text else 3
        except ValueError:
            err("bad-priority", f"priority must be an integer, got {prio_text!r}", line)
            continue
        if not (1 <= priority <= 5):
            err("bad-priority", f"priority {priority} not in 1..5", line)
            continue

        data_spec = None
        data_text = cell(row, "data")
        if data_text:
            try:
                data_spec = parse_data_spec(data_text)
            except ValidationError as exc:
                err("bad-data-spec", str(exc), line)
                continue
        if step_type is StepType.TD and data_spec is None:
            err("td-missing-data-spec", f"step {step_id}: TD step requires data spec", line)
            continue

        duration = None
        dur_text = cell(row, "duration")
        if dur_text:
            duration = _parse_duration(dur_text)
            if duration is None:
                err("bad-duration", f"malformed duration {dur_text!r}", line)
                continue

        when = cell(row, "when")
        if not when and subprocess is None:
            err("missing-when", f"step {step_id}: missing when-clause", line)
            continue

        seen_ids.add(step_id)
        steps.append(
            StepTemplate(
                step_id=step_id,
                when=when,
                given=tuple(given),
                then=tuple(then),
                step_type=step_type,
                responsible=cell(row, "responsible"),
                priority=priority,
                phase=cell(row, "phase"),
                duration_limit=duration,
                subprocess=subprocess,
                data_spec=data_spec,
            )
        )

    if not steps and not result.errors:
        warn("no-steps", "no steps", header_line)

    # infer variables mentioned in steps but not declared in the setup rows
    declared = {v.name for v in variables}
    mentioned: set[str] = set()
    for s in steps:
        mentioned |= s.variables()
    for name in sorted(mentioned - declared):
        if any(name in s.step_id for s in steps):
            warn("inferred-variable", f"index variable <{name}> has no declared domain", header_line)
            variables.append(VariableDecl(name, ("1",), VariableKind.INDEX))
        else:
            warn("inferred-variable", f"binding variable <{name}> inferred", header_line)
            variables.append(VariableDecl(name, (), VariableKind.BINDING))

    if result.errors:
        return result
    result.value = ScenarioTemplate(
        id=setup.get("id", "") or "imported",
        name=setup.get("name", ""),
        description=setup.get("description", ""),
        primary_actors=tuple(_split_list(setup.get("primary", ""))),
        supporting_actors=tuple(_split_list(setup.get("supporting", ""))),
        variables=tuple(variables),
        phases=tuple(_split_semis(setup.get("phases", ""))),
        steps=tuple(steps),
    )
    return result


def _split_semis(text: str) -> list[str]:
    return [item.strip() for item in text.split(";") if item.strip()]


def _canonicalize_param_expr(value: str, index_vars: list[str]) -> str:
    """Rewrite spreadsheet binding notation to DSL form.

    ``sUAS_x`` becomes ``sUAS<x>`` for a declared index variable x;
    ``A > B`` (the pilot bound to A) becomes ``A -> <B>``.
    """
    subject, sep, bound = value.partition(">")
    subject = subject.strip()
    for v in index_vars:
        subject = re.sub(rf"_({re.escape(v)})\b", rf"<\1>", subject)
    if sep:
        return f"{subject} -> <{bound.strip()}>"
    return subject


# -- pretty printer -----------------------------------------------------------


def pretty_print(template: ScenarioTemplate) -> str:
    """Canonical DSL text; parse(pretty_print(t)) is structurally equal to t."""
    out: list[str] = []
    header = f"scenario {template.id}"
    if template.name:
        header += f' "{template.name}"'
    out.append(header)
    if template.description:
        out.append(f"  description: {' '.join(template.description.split())}")
    if template.primary_actors:
        out.append("  primary: " + ", ".join(template.primary_actors))
    if template.supporting_actors:
        out.append("  supporting: " + ", ".join(template.supporting_actors))
    for v in template.variables:
        if v.kind is VariableKind.INDEX:
            out.append("  var {} in {{{}}}".format(v.name, ", ".join(v.domain)))
        else:
            anchor = f" for {v.anchor}" if v.anchor else ""
            out.append(f"  binding {v.name}{anchor}")
    if template.phases:
        out.append("  phases: " + ", ".join(template.phases))
    externals: list[str] = []
    seen_ext: set[str] = set()
    for s in template.steps:
        for c in s.given:
            if c.kind is ConditionKind.EXTERNAL and c.normalized not in seen_ext:
                seen_ext.add(c.normalized)
                externals.append(c.raw)
    for raw in externals:
        out.append(f"  external: {' '.join(raw.split())}")
    for s in template.steps:
        out.append("")
        out.append(f"  step {s.step_id}")
        for c in s.given:
            out.append(f"    given: {' '.join(c.raw.split())}")
        if s.when:
            out.append(f"    when: {' '.join(s.when.split())}")
        for c in s.then:
            out.append(f"    then: {' '.join(c.raw.split())}")
        out.append(f"    type: {s.step_type.value}")
        if s.responsible:
            out.append(f"    responsible: {s.responsible}")
        out.append(f"    priority: {s.priority}")
        if s.phase:
            out.append(f"    phase: {s.phase}")
        if s.duration_limit is not None:
            d = s.duration_limit
            out.append(f"    duration: {int(d) if d == int(d) else d}")
        if s.data_spec is not None:
            out.append(f"    data: {format_data_spec(s.data_spec)}")
        if s.subprocess is not None:
            if s.subprocess.params:
                args = ", ".join(f"{k} = {v}" for k, v in s.subprocess.params)
                out.append(f"    uses {s.subprocess.name}({args})")
            else:
                out.append(f"    uses {s.subprocess.name}")
    return "\n".join(out) + "\n"
