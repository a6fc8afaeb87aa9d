from __future__ import annotations

from pathlib import Path

import pytest

from fits import compiler, dsl

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"


def load_document(name: str) -> dsl.Document:
    doc = dsl.parse_document((SCENARIOS / name).read_text(), file=name)
    assert not doc.errors, [str(d) for d in doc.errors]
    return doc


@pytest.fixture(scope="session")
def tc01_template():
    return load_document("tc01_excerpt.fits").scenarios[0]


@pytest.fixture(scope="session")
def suasarm_defs():
    return load_document("suasarm.fits").subprocesses


@pytest.fixture(scope="session")
def tc01_graph(tc01_template, suasarm_defs):
    return compiler.compile_scenario(tc01_template, suasarm_defs)


@pytest.fixture(scope="session")
def tc01_bindings():
    return {"sUAS1": "pilot_1", "sUAS2": "pilot_2", "sUAS3": "pilot_3"}


@pytest.fixture(scope="session")
def corpus_graphs():
    graphs = {}
    for name in ("takeoff_basic.fits", "takeoff_multi.fits", "mission_exec.fits"):
        tmpl = load_document(name).scenarios[0]
        graphs[tmpl.id] = compiler.compile_scenario(tmpl)
    return graphs
