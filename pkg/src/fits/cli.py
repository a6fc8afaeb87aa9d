"""Operator command line: lint, compile, simulate, serve, report.

Exit codes: 0 success, 1 usage, 2 lint errors, 3 simulation incomplete,
4 I/O failure.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from . import analysis, compiler, dsl, engine, simulate

EXIT_USAGE = 1
EXIT_LINT = 2
EXIT_INCOMPLETE = 3
EXIT_IO = 4


@click.group()
def cli():
    """Field test scenario toolkit: author, validate, execute, analyze."""


def _read(path: Path) -> str:
    return path.read_text(encoding="utf-8")


def _gather(paths) -> tuple[list, list, list, list]:
    """Parse a set of .fits files into (scenarios, subprocesses, suites, diagnostics)."""
    scenarios, subprocesses, suites, diags = [], [], [], []
    for path in paths:
        path = Path(path)
        doc = dsl.parse_document(_read(path), file=str(path))
        scenarios.extend(doc.scenarios)
        subprocesses.extend(doc.subprocesses)
        suites.extend(doc.suites)
        diags.extend(doc.diagnostics)
    return scenarios, subprocesses, suites, diags


@cli.command("lint")
@click.argument("files", nargs=-1, required=True, type=click.Path(path_type=Path))
@click.option("--format", "fmt", type=click.Choice(["text", "json"]), default="text")
@click.option("--auto-external", is_flag=True,
              help="Treat producer-less Given conditions as externally confirmable.")
@click.pass_context
def lint_cmd(ctx, files, fmt, auto_external):
    """Validate scenario/subprocess files; exit 0 iff no errors."""
    scenarios, subprocesses, _, diags = _gather(files)
    findings = []
    parse_failed = any(d.severity is dsl.Severity.ERROR for d in diags)
    for d in diags:
        findings.append(
            {"code": d.code, "severity": d.severity.value, "message": d.message,
             "location": f"{d.span.file}:{d.span.line}:{d.span.column}"}
        )
    any_lint_error = False
    for template in scenarios:
        report = compiler.lint(template, subprocesses, auto_external=auto_external)
        any_lint_error = any_lint_error or not report.passed
        for f in report.findings:
            findings.append(
                {"code": f.code, "severity": f.severity.value, "message": f.message,
                 "location": f"{template.id}:{f.location}"}
            )
    if fmt == "json":
        click.echo(json.dumps({"findings": findings,
                               "passed": not (parse_failed or any_lint_error)}, indent=2))
    else:
        for f in findings:
            click.echo(f"{f['location']}: {f['severity']}[{f['code']}]: {f['message']}")
        n_err = sum(1 for f in findings if f["severity"] == "error")
        n_warn = len(findings) - n_err
        click.echo(f"{len(scenarios)} scenario(s), {len(subprocesses)} subprocess(es): "
                   f"{n_err} error(s), {n_warn} warning(s)")
    if parse_failed or any_lint_error:
        ctx.exit(EXIT_LINT)


@cli.command("compile")
@click.argument("target", type=click.Path(exists=True, path_type=Path))
@click.option("-o", "--out", "out_dir", type=click.Path(path_type=Path), default=Path("."),
              help="Directory for mission package JSON files.")
@click.option("-s", "--subprocess", "subprocess_files", multiple=True,
              type=click.Path(exists=True, path_type=Path),
              help="Additional sub-process definition files.")
@click.option("--auto-external", is_flag=True)
@click.pass_context
def compile_cmd(ctx, target, out_dir, subprocess_files, auto_external):
    """Compile a scenario or suite into mission packages."""
    doc = dsl.parse_document(_read(target), file=str(target))
    for d in doc.diagnostics:
        click.echo(str(d), err=True)
    if doc.errors:
        ctx.exit(EXIT_LINT)

    templates = list(doc.scenarios)
    defs = list(doc.subprocesses)
    _, extra_defs, _, extra_diags = _gather(subprocess_files)
    defs.extend(extra_defs)
    for d in extra_diags:
        click.echo(str(d), err=True)
    if any(d.severity is dsl.Severity.ERROR for d in extra_diags):
        ctx.exit(EXIT_LINT)

    if doc.suites:
        result = dsl.parse_suite(_read(target), file=str(target), base_dir=target.parent)
        for d in result.diagnostics:
            click.echo(str(d), err=True)
        if not result.ok and result.errors:
            ctx.exit(EXIT_LINT)
        suite = result.value
        templates = []
        for ref in suite.scenario_refs:
            sc, sp, _, diags2 = _gather([ref])
            for d in diags2:
                click.echo(str(d), err=True)
            if any(d.severity is dsl.Severity.ERROR for d in diags2):
                ctx.exit(EXIT_LINT)
            templates.extend(sc)
            defs.extend(sp)
        if not templates:
            click.echo("warning: empty suite, no packages generated", err=True)
            return
        suite_result = compiler.compile_suite(suite, templates, defs,
                                              auto_external=auto_external)
        if not suite_result.ok:
            for sid, report in suite_result.reports:
                for f in report.errors:
                    click.echo(f"{sid}: {f}", err=True)
            ctx.exit(EXIT_LINT)
        graphs = suite_result.graphs
    else:
        if not templates:
            click.echo("error: no scenario found in target", err=True)
            ctx.exit(EXIT_LINT)
        graphs = []
        for template in templates:
            try:
                graphs.append(
                    compiler.compile_scenario(template, defs, auto_external=auto_external)
                )
            except compiler.CompileError as exc:
                click.echo(f"{template.id}: {exc}", err=True)
                ctx.exit(EXIT_LINT)

    out_dir.mkdir(parents=True, exist_ok=True)
    for graph in graphs:
        path = out_dir / f"{graph.mission_template_id}.pkg.json"
        path.write_text(compiler.package_json(graph), encoding="utf-8")
        click.echo(f"{path}: {len(graph.tasks)} tasks")


@cli.command("simulate")
@click.argument("package", type=click.Path(exists=True, path_type=Path))
@click.argument("script", type=click.Path(exists=True, path_type=Path), required=False)
@click.option("--bindings", "bindings_file", type=click.Path(exists=True, path_type=Path),
              help="JSON file mapping binding subjects to actors.")
@click.option("--happy", is_flag=True,
              help="Generate and run a happy-path script instead of reading one.")
@click.option("--out", "out_path", type=click.Path(path_type=Path),
              help="Event log output path (default <mission_id>.events.ndjson).")
@click.option("--mission-id", default="sim")
@click.pass_context
def simulate_cmd(ctx, package, script, bindings_file, happy, out_path, mission_id):
    """Execute a script against a mission package with a logical clock."""
    graph = compiler.from_package(json.loads(_read(package)))
    bindings = json.loads(_read(bindings_file)) if bindings_file else {}
    if happy:
        script_text = simulate.generate_happy_script(graph, bindings)
    elif script is None:
        raise click.UsageError("provide a script file or --happy")
    else:
        script_text = _read(script)
    try:
        parsed = simulate.parse_script(script_text)
        result = simulate.run_script(graph, parsed, bindings=bindings,
                                     mission_id=mission_id)
    except simulate.ScriptError as exc:
        click.echo(f"simulation failed: {exc}", err=True)
        ctx.exit(EXIT_INCOMPLETE)
    out_path = out_path or Path(f"{mission_id}.events.ndjson")
    if out_path.exists():
        out_path.unlink()
    engine.write_events(out_path, result.events)
    click.echo(result.status_table())
    click.echo(f"events: {out_path}")
    if not result.all_completed:
        ctx.exit(EXIT_INCOMPLETE)


@cli.command("serve")
@click.option("--store", "store_dir", type=click.Path(path_type=Path), required=True)
@click.option("--listen", default="127.0.0.1:8800", help="host:port to bind.")
@click.option("--tolerance", type=float, default=analysis.DEFAULT_TOLERANCE_S)
def serve_cmd(store_dir, listen, tolerance):
    """Run the mission HTTP service."""
    import uvicorn

    from .service import create_app

    host, _, port = listen.rpartition(":")
    app = create_app(store_dir, default_tolerance=tolerance)
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port), log_level="warning")


@cli.command("report")
@click.argument("mission_dir", type=click.Path(path_type=Path))
@click.option("--telemetry", "telemetry_files", multiple=True,
              type=click.Path(exists=True, path_type=Path))
@click.option("--tolerance", type=float, default=analysis.DEFAULT_TOLERANCE_S)
@click.option("--format", "fmt", type=click.Choice(["text", "json"]), default="text")
@click.option("--figures/--no-figures", default=True,
              help="Render status and timeline figures as PNG.")
@click.option("-o", "--out", "out_dir", type=click.Path(path_type=Path),
              help="Output directory (default: the mission directory).")
@click.pass_context
def report_cmd(ctx, mission_dir, telemetry_files, tolerance, fmt, figures, out_dir):
    """Build the analysis report for an executed mission directory.

    The directory must hold package.json and an events NDJSON log;
    telemetry CSVs are read from its telemetry/ subdirectory and from
    --telemetry arguments.
    """
    pkg_path = mission_dir / "package.json"
    if not pkg_path.is_file():
        candidates = sorted(mission_dir.glob("*.pkg.json"))
        if not candidates:
            click.echo(f"error: no package.json in {mission_dir}", err=True)
            ctx.exit(EXIT_IO)
        pkg_path = candidates[0]
    graph = compiler.from_package(json.loads(_read(pkg_path)))

    log_candidates = sorted(mission_dir.glob("*.events.ndjson")) or [
        mission_dir / "events.ndjson"
    ]
    log_path = log_candidates[0]
    if not log_path.is_file():
        click.echo(f"error: no event log in {mission_dir}", err=True)
        ctx.exit(EXIT_IO)
    events = engine.read_events(log_path)

    samples = []
    sources = list(telemetry_files)
    tdir = mission_dir / "telemetry"
    if tdir.is_dir():
        sources.extend(sorted(tdir.glob("*.csv")))
    for path in sources:
        result = analysis.ingest_telemetry(_read(Path(path)), origin=Path(path).stem)
        for w in result.warnings:
            click.echo(f"telemetry warning ({path}): {w}", err=True)
        samples.extend(result.samples)
    samples.sort(key=lambda s: (s.timestamp, s.source, s.key))

    report = analysis.build_report(events, graph, samples, tolerance_seconds=tolerance)

    out_dir = out_dir or mission_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    json_path = out_dir / f"{report.mission_id}.report.json"
    md_path = out_dir / f"{report.mission_id}.report.md"
    csv_path = out_dir / f"{report.mission_id}.timeline.csv"
    issues_path = out_dir / f"{report.mission_id}.issues.json"
    json_path.write_text(report.to_json(), encoding="utf-8")
    md_path.write_text(report.to_markdown(), encoding="utf-8")
    analysis.write_timeline_csv(report, csv_path)
    issues_path.write_text(
        json.dumps(analysis.export_issues(report), indent=2, ensure_ascii=False) + "\n",
        encoding="utf-8",
    )
    written = [json_path, md_path, csv_path, issues_path]
    if figures:
        written.extend(Path(p) for p in analysis.render_figures(report, out_dir))

    if fmt == "json":
        click.echo(report.to_json())
    else:
        totals = ", ".join(f"{k}={v}" for k, v in report.totals.items() if v)
        click.echo(f"mission {report.mission_id}: {report.task_count} tasks ({totals})")
        click.echo(f"deviations: {len(report.deviations)}, issues: {len(report.issues)}, "
                   f"data records: {len(report.td_validation)}")
        for path in written:
            click.echo(f"wrote {path}")


def main(argv=None) -> int:
    try:
        # click returns ctx.exit codes instead of raising in non-standalone mode
        rv = cli.main(args=argv, standalone_mode=False)
        if isinstance(rv, int):
            return rv
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.UsageError as exc:
        click.echo(f"usage error: {exc.format_message()}", err=True)
        return EXIT_USAGE
    except click.Abort:
        return EXIT_USAGE
    except (OSError, json.JSONDecodeError, engine.EngineError,
            analysis.AnalysisError, compiler.CompileError) as exc:
        click.echo(f"error: {exc}", err=True)
        return EXIT_IO
    return 0


if __name__ == "__main__":
    sys.exit(main())
