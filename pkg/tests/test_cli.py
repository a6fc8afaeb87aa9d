from __future__ import annotations

import json
from pathlib import Path

import pytest

from fits import cli, simulate

from conftest import SCENARIOS


def run(argv) -> int:
    return cli.main([str(a) for a in argv])


class TestLint:
    def test_clean_corpus_exit_zero(self, capsys):
        code = run(["lint", SCENARIOS / "takeoff_basic.fits"])
        assert code == 0

    def test_tc01_with_subprocess(self):
        code = run([
            "lint",
            SCENARIOS / "tc01_excerpt.fits",
            SCENARIOS / "suasarm.fits",
        ])
        assert code == 0

    def test_error_exit_two(self, tmp_path):
        bad = tmp_path / "bad.fits"
        bad.write_text(
            'scenario B "b"\n  primary: operator\n  phases: main\n'
            "  step 1\n    when: act.\n    given: never produced.\n"
            "    responsible: operator\n    phase: main\n"
        )
        assert run(["lint", bad]) == 2

    def test_json_format(self, tmp_path, capsys):
        run(["lint", "--format", "json", SCENARIOS / "mission_exec.fits"])
        out = capsys.readouterr().out
        obj = json.loads(out)
        assert obj["passed"] is True
        assert [f for f in obj["findings"] if f["severity"] == "error"] == []

    def test_usage_error(self):
        assert run(["lint"]) == 1
        assert run(["frobnicate"]) == 1

    def test_missing_file_is_io_error(self, tmp_path):
        assert run(["lint", tmp_path / "nope.fits"]) == 4


class TestCompile:
    def test_suite_produces_three_packages(self, tmp_path):
        code = run(["compile", SCENARIOS / "suite.fits", "-o", tmp_path])
        assert code == 0
        names = sorted(p.name for p in tmp_path.glob("*.pkg.json"))
        assert names == ["MX01.pkg.json", "TK01.pkg.json", "TK02.pkg.json"]
        obj = json.loads((tmp_path / "TK02.pkg.json").read_text())
        assert len(obj["tasks"]) == 68

    def test_empty_suite_warns_exit_zero(self, tmp_path, capsys):
        suite = tmp_path / "empty.fits"
        suite.write_text('suite "empty"\n')
        code = run(["compile", suite, "-o", tmp_path])
        assert code == 0
        assert list(tmp_path.glob("*.pkg.json")) == []
        assert "empty suite" in capsys.readouterr().err.lower()

    def test_scenario_with_subprocess_flag(self, tmp_path):
        code = run([
            "compile", SCENARIOS / "tc01_excerpt.fits",
            "-s", SCENARIOS / "suasarm.fits", "-o", tmp_path,
        ])
        assert code == 0
        obj = json.loads((tmp_path / "TC01.pkg.json").read_text())
        assert len(obj["tasks"]) == 12


class TestSimulate:
    @pytest.fixture()
    def tc01_pkg(self, tmp_path):
        run([
            "compile", SCENARIOS / "tc01_excerpt.fits",
            "-s", SCENARIOS / "suasarm.fits", "-o", tmp_path,
        ])
        return tmp_path / "TC01.pkg.json"

    def test_happy_path_status_table(self, tc01_pkg, tmp_path, capsys):
        code = run([
            "simulate", tc01_pkg, "--happy",
            "--bindings", SCENARIOS / "tc01_bindings.json",
            "--out", tmp_path / "ev.ndjson",
        ])
        out = capsys.readouterr().out
        assert code == 0
        assert "12/12 completed" in out
        assert (tmp_path / "ev.ndjson").exists()

    def test_incomplete_exit_three(self, tc01_pkg, tmp_path):
        script = tmp_path / "partial.script"
        script.write_text(
            'confirm "suas1 is available at test site" by pilot_1\n'
            "start 11.1 by pilot_1\n"
            "advance 5\n"
            "complete 11.1 by pilot_1\n"
        )
        code = run([
            "simulate", tc01_pkg, script,
            "--bindings", SCENARIOS / "tc01_bindings.json",
            "--out", tmp_path / "ev.ndjson",
        ])
        assert code == 3

    def test_reproducible_event_log(self, tc01_pkg, tmp_path):
        outs = []
        for name in ("a.ndjson", "b.ndjson"):
            run([
                "simulate", tc01_pkg, "--happy",
                "--bindings", SCENARIOS / "tc01_bindings.json",
                "--out", tmp_path / name,
            ])
            outs.append((tmp_path / name).read_bytes())
        assert outs[0] == outs[1]


class TestReport:
    def test_report_outputs(self, tmp_path, capsys):
        run([
            "compile", SCENARIOS / "tc01_excerpt.fits",
            "-s", SCENARIOS / "suasarm.fits", "-o", tmp_path,
        ])
        run([
            "simulate", tmp_path / "TC01.pkg.json", "--happy",
            "--bindings", SCENARIOS / "tc01_bindings.json",
            "--out", tmp_path / "m1.events.ndjson",
        ])
        tlm = tmp_path / "tlm.csv"
        tlm.write_text("timestamp,key,value\n1,mode,GUIDED\n")
        code = run([
            "report", tmp_path, "--telemetry", tlm, "-o", tmp_path,
        ])
        assert code == 0
        report_files = list(tmp_path.glob("*.report.json"))
        assert len(report_files) == 1
        obj = json.loads(report_files[0].read_text())
        assert obj["totals"]["completed"] == 12
        assert sum(obj["totals"].values()) == 12
        assert list(tmp_path.glob("*.report.md"))
        assert list(tmp_path.glob("*.timeline.csv"))
        assert len(list(tmp_path.glob("*.png"))) == 2
        assert list(tmp_path.glob("*.issues.json"))

    def test_no_figures_flag(self, tmp_path):
        run([
            "compile", SCENARIOS / "tc01_excerpt.fits",
            "-s", SCENARIOS / "suasarm.fits", "-o", tmp_path,
        ])
        run([
            "simulate", tmp_path / "TC01.pkg.json", "--happy",
            "--bindings", SCENARIOS / "tc01_bindings.json",
            "--out", tmp_path / "m1.events.ndjson",
        ])
        out = tmp_path / "rep"
        out.mkdir()
        code = run(["report", tmp_path, "-o", out, "--no-figures"])
        assert code == 0
        assert list(out.glob("*.png")) == []

    def test_missing_dir_is_io_error(self, tmp_path):
        assert run(["report", tmp_path / "ghost"]) == 4


class TestScriptParsing:
    def test_bad_script_line_rejected(self):
        with pytest.raises(simulate.ScriptError):
            simulate.parse_script("launch the missiles\n")

    def test_comments_and_blanks_ignored(self):
        script = simulate.parse_script("# comment\n\nadvance 5\n")
        assert len(script.actions) == 1
        assert script.actions[0].op == "advance"
