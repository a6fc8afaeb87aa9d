from __future__ import annotations

import re

import pytest
from hypothesis import given, strategies as st

from fits.model import (
    ConditionKind,
    ConditionText,
    DataSpec,
    ScenarioTemplate,
    StepTemplate,
    StepType,
    TaskGraph,
    TaskNode,
    ValidationError,
    VariableDecl,
    VariableKind,
    find_condition_cycle,
    normalize_condition,
    referenced_variables,
    structurally_equal,
)


def reference_normalize(raw: str) -> str:
    """Character-walk reference implementation of the normalization rules."""
    out: list[str] = []
    pending_space = False
    for ch in raw.strip():
        if ch.isspace():
            pending_space = True
            continue
        if pending_space and out:
            out.append(" ")
        pending_space = False
        out.append(ch.lower())
    if out and out[-1] == ".":
        out.pop()
    return "".join(out)


class TestNormalizeCondition:
    def test_table_style_text(self):
        assert (
            normalize_condition("sUAS<x> is placed in its launch position.")
            == "suas<x> is placed in its launch position"
        )

    def test_single_character(self):
        assert normalize_condition("A") == "a"

    def test_against_string_walk_oracle(self):
        raw = "  Drone   armed. "
        assert normalize_condition(raw) == "drone armed"
        assert normalize_condition(raw) == reference_normalize(raw)

    def test_empty_after_trim_rejected(self):
        with pytest.raises(ValidationError):
            normalize_condition("   ")

    @given(st.text(min_size=0, max_size=60))
    def test_matches_reference_and_is_idempotent(self, raw):
        try:
            got = normalize_condition(raw)
        except ValidationError:
            assert not reference_normalize(raw)
            return
        assert got == reference_normalize(raw)
        assert normalize_condition(got) == got

    def test_placeholders_preserved(self):
        assert normalize_condition("Unit <x> READY") == "unit <x> ready"


class TestReferencedVariables:
    def test_collects_bracketed_names(self):
        assert referenced_variables("RPIC(sUAS<x> -> <pilot>)") == {"x", "pilot"}

    def test_none(self):
        assert referenced_variables("no placeholders here") == set()


class TestDataSpec:
    def test_integer_range(self):
        spec = DataSpec("fixes", "integer", min_value=6, max_value=30)
        assert spec.coerce("12") == 12
        assert spec.is_valid(12)
        assert not spec.is_valid(0)

    def test_enum_membership(self):
        spec = DataSpec("mode", "enum", enum_values=("GUIDED", "LOITER", "RTL"))
        assert spec.is_valid("RTL")
        assert not spec.is_valid("AUTO")

    def test_type_mismatch_rejected(self):
        spec = DataSpec("fixes", "integer")
        with pytest.raises(ValidationError):
            spec.coerce("not a number")
        with pytest.raises(ValidationError):
            spec.coerce(True)

    def test_boolean(self):
        spec = DataSpec("armed", "boolean")
        assert spec.coerce("true") is True
        assert spec.coerce(False) is False

    def test_invalid_specs_rejected(self):
        with pytest.raises(ValidationError):
            DataSpec("m", "enum").check()
        with pytest.raises(ValidationError):
            DataSpec("m", "number", min_value=5, max_value=1).check()
        with pytest.raises(ValidationError):
            DataSpec("m", "voltage").check()


def make_template(**overrides) -> ScenarioTemplate:
    base = dict(
        id="S1",
        name="demo",
        description="",
        primary_actors=("operator",),
        supporting_actors=(),
        variables=(),
        phases=("main",),
        steps=(
            StepTemplate(
                step_id="1",
                when="operator shall act.",
                given=(),
                then=(ConditionText("acted"),),
                responsible="operator",
                phase="main",
            ),
        ),
    )
    base.update(overrides)
    return ScenarioTemplate(**base)


class TestTemplateInvariants:
    def test_valid_template_passes(self):
        make_template().check()

    def test_empty_id_rejected(self):
        with pytest.raises(ValidationError):
            make_template(id="").check()

    def test_undeclared_variable_rejected(self):
        step = StepTemplate(
            step_id="1", when="operator shall act on <x>.",
            responsible="operator", phase="main",
        )
        with pytest.raises(ValidationError):
            make_template(steps=(step,)).check()

    def test_binding_variable_needs_no_domain(self):
        step = StepTemplate(
            step_id="1", when="do it for <pilot>.",
            responsible="<pilot>", phase="main",
        )
        make_template(
            variables=(VariableDecl("pilot", (), VariableKind.BINDING),),
            steps=(step,),
        ).check()

    def test_index_variable_needs_domain(self):
        with pytest.raises(ValidationError):
            make_template(
                variables=(VariableDecl("x", (), VariableKind.INDEX),),
            ).check()

    def test_unknown_phase_rejected(self):
        step = StepTemplate(
            step_id="1", when="act.", responsible="operator", phase="bogus",
        )
        with pytest.raises(ValidationError):
            make_template(steps=(step,)).check()

    def test_duplicate_step_ids_rejected(self):
        step = StepTemplate(
            step_id="1", when="act.", responsible="operator", phase="main",
        )
        with pytest.raises(ValidationError):
            make_template(steps=(step, step)).check()

    def test_td_requires_data_spec(self):
        step = StepTemplate(
            step_id="1", when="measure.", step_type=StepType.TD,
            responsible="operator", phase="main",
        )
        with pytest.raises(ValidationError):
            make_template(steps=(step,)).check()


class TestStructuralEquality:
    def test_reflexive(self):
        t = make_template()
        assert structurally_equal(t, t)

    def test_ignores_condition_formatting(self):
        a = make_template()
        b = make_template(
            steps=(
                StepTemplate(
                    step_id="1",
                    when="operator  shall act",
                    given=(),
                    then=(ConditionText("  Acted. "),),
                    responsible="operator",
                    phase="main",
                ),
            )
        )
        assert structurally_equal(a, b)

    def test_detects_differences(self):
        assert not structurally_equal(make_template(), make_template(name="other"))


class TestTaskGraph:
    def test_self_cycle_detected(self):
        graph = TaskGraph(
            mission_template_id="G",
            tasks=(
                TaskNode(
                    task_id="a", when="w", given=("c",), then=("c",),
                    responsible="r",
                ),
            ),
            conditions=(("c", ConditionKind.INTERNAL),),
            actors=("r",),
        )
        cycle = find_condition_cycle(graph)
        assert cycle == ["a", "a"] or cycle == ["a"]
        with pytest.raises(ValidationError):
            graph.check()

    def test_missing_producer_detected(self):
        graph = TaskGraph(
            mission_template_id="G",
            tasks=(
                TaskNode(task_id="a", when="w", given=("c",), responsible="r"),
            ),
            conditions=(("c", ConditionKind.INTERNAL),),
            actors=("r",),
        )
        with pytest.raises(ValidationError):
            graph.check()

    def test_binding_key(self):
        t = TaskNode(task_id="a", when="w", responsible="binding(sUAS2)")
        assert t.binding_key() == "sUAS2"
        assert TaskNode(task_id="b", when="w", responsible="pilot_1").binding_key() is None
