"""Post-mission analysis: telemetry ingest, correlation, coverage reports.

Consolidates a mission's event log, collected data records, issues, and
externally captured telemetry into one AnalysisReport, serializable to JSON
and renderable as Markdown, a delimited timeline, and figures.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Optional, Sequence, Union

from .engine import (
    DataRecord,
    EventKind,
    EventRecord,
    IssueReport,
    MissionState,
    TaskStatus,
    replay,
)
from .model import TaskGraph

DEFAULT_TOLERANCE_S = 2.0
_REL_TOL = 1e-9

# epoch milliseconds start around 1e12; logical/epoch seconds stay far below
_EPOCH_MS_THRESHOLD = 1e11


class AnalysisError(Exception):
    pass


@dataclass(frozen=True)
class TelemetrySample:
    timestamp: float  # seconds
    source: str
    key: str
    value: Union[float, str]


@dataclass
class IngestResult:
    samples: list[TelemetrySample] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)


def _parse_timestamp(text: str) -> float:
    text = text.strip()
    try:
        value = float(text)
    except ValueError:
        pass
    else:
        if abs(value) >= _EPOCH_MS_THRESHOLD:
            return value / 1000.0
        return value
    try:
        dt = datetime.fromisoformat(text.replace("Z", "+00:00"))
    except ValueError:
        raise AnalysisError(f"unparseable timestamp {text!r}") from None
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.timestamp()


def _parse_value(text: str) -> Union[float, str]:
    try:
        return float(text)
    except ValueError:
        return text.strip()


def ingest_telemetry(source: str, origin: str = "telemetry") -> IngestResult:
    """Parse a ``timestamp,key,value`` CSV into sorted samples.

    Unparseable rows become warnings; a missing header or zero parseable
    rows raises AnalysisError.
    """
    rows = list(csv.reader(io.StringIO(source)))
    if not rows:
        raise AnalysisError("missing header: empty telemetry file")
    header = [c.strip().lower() for c in rows[0]]
    if header[:3] != ["timestamp", "key", "value"]:
        raise AnalysisError("missing header: expected 'timestamp,key,value'")
    result = IngestResult()
    for i, row in enumerate(rows[1:], start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) < 3:
            result.warnings.append(f"line {i}: expected 3 columns, got {len(row)}")
            continue
        try:
            ts = _parse_timestamp(row[0])
        except AnalysisError as exc:
            result.warnings.append(f"line {i}: {exc}")
            continue
        key = row[1].strip()
        if not key:
            result.warnings.append(f"line {i}: empty key")
            continue
        result.samples.append(TelemetrySample(ts, origin, key, _parse_value(row[2])))
    if not result.samples:
        raise AnalysisError("no samples")
    result.samples.sort(key=lambda s: (s.timestamp, s.source, s.key))
    return result


# -- correlation ----------------------------------------------------------------


def _values_agree(recorded: object, observed: Union[float, str]) -> bool:
    if isinstance(observed, float) and isinstance(recorded, (int, float)) \
            and not isinstance(recorded, bool):
        a, b = float(recorded), observed
        return abs(a - b) <= _REL_TOL * max(abs(a), abs(b))
    return str(recorded).strip().lower() == str(observed).strip().lower()


@dataclass
class TdValidation:
    task_id: str
    field_name: str
    telemetry_key: Optional[str]
    recorded_value: object
    recorded_at: float
    recorded_valid: bool
    matches: list[TelemetrySample] = field(default_factory=list)
    verdict: str = "unmatched"  # agree | disagree | unmatched

    def to_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            "field_name": self.field_name,
            "telemetry_key": self.telemetry_key,
            "recorded_value": self.recorded_value,
            "recorded_at": self.recorded_at,
            "recorded_valid": self.recorded_valid,
            "matches": [
                {"timestamp": s.timestamp, "source": s.source, "key": s.key, "value": s.value}
                for s in self.matches
            ],
            "verdict": self.verdict,
        }


def correlate(
    records: Sequence[DataRecord],
    graph: TaskGraph,
    samples: Sequence[TelemetrySample],
    tolerance_seconds: float = DEFAULT_TOLERANCE_S,
) -> list[TdValidation]:
    """Match TD data records to telemetry samples within the time tolerance.

    agree: some matched sample equals the recorded value; disagree: matches
    exist but none equal; unmatched: no sample within the window. Absence of
    telemetry is a verdict, never an error.
    """
    if tolerance_seconds <= 0:
        raise AnalysisError("tolerance must be positive")
    out: list[TdValidation] = []
    for rec in records:
        task = graph.task(rec.task_id.split("#", 1)[0]) or graph.task(rec.task_id)
        key = task.data_spec.telemetry_key if task is not None and task.data_spec else None
        entry = TdValidation(
            task_id=rec.task_id,
            field_name=rec.field_name,
            telemetry_key=key,
            recorded_value=rec.value,
            recorded_at=rec.recorded_at,
            recorded_valid=rec.valid,
        )
        if key is not None:
            entry.matches = [
                s
                for s in samples
                if s.key == key and abs(s.timestamp - rec.recorded_at) <= tolerance_seconds
            ]
            if entry.matches:
                agree = any(_values_agree(rec.value, s.value) for s in entry.matches)
                entry.verdict = "agree" if agree else "disagree"
        out.append(entry)
    return out


# -- report ---------------------------------------------------------------------


STATUS_ORDER = [s.value for s in TaskStatus]


@dataclass
class AnalysisReport:
    mission_id: str
    mission_template_id: str
    totals: dict[str, int]
    per_phase: dict[str, dict[str, int]]
    issues: list[IssueReport]
    td_validation: list[TdValidation]
    timeline: list[dict]
    deviations: list[dict]
    tolerance_seconds: float

    @property
    def task_count(self) -> int:
        return sum(self.totals.values())

    def to_dict(self) -> dict:
        return {
            "mission_id": self.mission_id,
            "mission_template_id": self.mission_template_id,
            "totals": self.totals,
            "per_phase": self.per_phase,
            "issues": [
                {
                    "issue_id": i.issue_id,
                    "reporter": i.reporter,
                    "severity": i.severity,
                    "text": i.text,
                    "task_id": i.task_id,
                    "state_snapshot_ref": i.state_snapshot_ref,
                    "reported_at": i.reported_at,
                }
                for i in self.issues
            ],
            "td_validation": [v.to_dict() for v in self.td_validation],
            "timeline": self.timeline,
            "deviations": self.deviations,
            "tolerance_seconds": self.tolerance_seconds,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, ensure_ascii=False) + "\n"

    def to_markdown(self) -> str:
        lines = [f"# Mission report: {self.mission_id}", ""]
        lines.append(f"Template: `{self.mission_template_id}`  ")
        lines.append(f"Tasks: {self.task_count}  ")
        lines.append(f"Correlation tolerance: {self.tolerance_seconds} s")
        lines.append("")
        lines.append("## Task totals")
        lines.append("")
        lines.append("| status | count |")
        lines.append("|---|---|")
        for status in STATUS_ORDER:
            lines.append(f"| {status} | {self.totals.get(status, 0)} |")
        lines.append("")
        if self.per_phase:
            lines.append("## Per phase")
            lines.append("")
            header = "| phase | " + " | ".join(STATUS_ORDER) + " |"
            lines.append(header)
            lines.append("|" + "---|" * (len(STATUS_ORDER) + 1))
            for phase, counts in self.per_phase.items():
                row = [phase or "(none)"] + [str(counts.get(s, 0)) for s in STATUS_ORDER]
                lines.append("| " + " | ".join(row) + " |")
            lines.append("")
        lines.append(f"## Deviations ({len(self.deviations)})")
        lines.append("")
        for d in self.deviations:
            note = f" — {d['note']}" if d.get("note") else ""
            lines.append(f"- `{d['task_id']}`: {d['kind']}{note}")
        if not self.deviations:
            lines.append("None.")
        lines.append("")
        lines.append(f"## Issues ({len(self.issues)})")
        lines.append("")
        for i in self.issues:
            link = f" (task `{i.task_id}`)" if i.task_id else " (mission-level)"
            lines.append(f"- **{i.severity}** {i.issue_id}{link}: {i.text}")
        if not self.issues:
            lines.append("None.")
        lines.append("")
        lines.append(f"## Data validation ({len(self.td_validation)})")
        lines.append("")
        for v in self.td_validation:
            lines.append(
                f"- `{v.task_id}` {v.field_name}={v.recorded_value!r} at "
                f"t={v.recorded_at}: **{v.verdict}** ({len(v.matches)} sample(s))"
            )
        if not self.td_validation:
            lines.append("None.")
        lines.append("")
        lines.append("## Timeline")
        lines.append("")
        for entry in self.timeline:
            lines.append(
                f"- t={entry['time']} [{entry['source']}] {entry['kind']}: {entry['detail']}"
            )
        lines.append("")
        return "\n".join(lines)


def _event_detail(ev: EventRecord) -> str:
    parts = []
    if ev.task_id:
        parts.append(ev.task_id)
    if ev.actor:
        parts.append(f"by {ev.actor}")
    if ev.kind is EventKind.CONDITION_CONFIRMED:
        parts.append(repr(ev.payload.get("condition", "")))
    if ev.payload.get("note"):
        parts.append(f"note: {ev.payload['note']}")
    if ev.payload.get("value") is not None:
        parts.append(f"value: {ev.payload['value']}")
    if ev.kind is EventKind.ISSUE_REPORTED:
        parts.append(f"{ev.payload.get('severity')}: {ev.payload.get('text')}")
    return " ".join(str(p) for p in parts)


def build_report(
    events: Sequence[EventRecord],
    graph: TaskGraph,
    samples: Sequence[TelemetrySample] = (),
    tolerance_seconds: float = DEFAULT_TOLERANCE_S,
    bindings: Optional[dict[str, str]] = None,
) -> AnalysisReport:
    """Pure function of (log, graph, telemetry, tolerance) -> AnalysisReport.

    Data records and issues are recovered by replaying the log; a corrupt
    log propagates the replay error.
    """
    state: MissionState = replay(events, graph, bindings or {})

    totals = {s.value: 0 for s in TaskStatus}
    per_phase: dict[str, dict[str, int]] = {}
    for t in state.all_tasks():
        status = state.task_status[t.task_id].value
        totals[status] += 1
        phase = t.phase or ""
        per_phase.setdefault(phase, {s.value: 0 for s in TaskStatus})[status] += 1

    deviations: list[dict] = []
    notes: dict[str, str] = {}
    for ev in events:
        if ev.kind in (EventKind.TASK_FAILED, EventKind.TASK_SKIPPED) and ev.task_id:
            notes[ev.task_id] = str(ev.payload.get("note", ""))
    for t in state.all_tasks():
        status = state.task_status[t.task_id]
        if status is TaskStatus.FAILED:
            deviations.append(
                {"task_id": t.task_id, "kind": "failed", "note": notes.get(t.task_id, "")}
            )
        elif status is TaskStatus.SKIPPED:
            deviations.append(
                {"task_id": t.task_id, "kind": "skipped", "note": notes.get(t.task_id, "")}
            )
    for task_id in sorted(state.alarmed):
        deviations.append(
            {"task_id": task_id, "kind": "duration_exceeded", "note": ""}
        )

    timeline: list[dict] = []
    for ev in events:
        timeline.append(
            {
                "time": ev.timestamp,
                "source": "mission",
                "seq": ev.seq,
                "kind": ev.kind.value,
                "detail": _event_detail(ev),
            }
        )
    for s in samples:
        timeline.append(
            {
                "time": s.timestamp,
                "source": s.source,
                "seq": 0,
                "kind": "telemetry",
                "detail": f"{s.key}={s.value}",
            }
        )
    timeline.sort(key=lambda e: (e["time"], e["source"], e["seq"]))

    return AnalysisReport(
        mission_id=state.mission_id,
        mission_template_id=graph.mission_template_id,
        totals=totals,
        per_phase=per_phase,
        issues=list(state.issues),
        td_validation=correlate(state.data_records, graph, samples, tolerance_seconds),
        timeline=timeline,
        deviations=deviations,
        tolerance_seconds=tolerance_seconds,
    )


def export_issues(report: AnalysisReport) -> list[dict]:
    """Generic issue-tracker import format: title, body, labels."""
    out = []
    for i in report.issues:
        labels = [report.mission_id]
        if i.task_id:
            labels.append(i.task_id)
        labels.append(i.severity)
        title = i.text.splitlines()[0][:80]
        body = i.text
        if i.task_id:
            body += f"\n\nTask: {i.task_id}"
        body += f"\nReporter: {i.reporter}\nEvent ref: seq {i.state_snapshot_ref}"
        out.append({"title": title, "body": body, "labels": labels})
    return out


def write_timeline_csv(report: AnalysisReport, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["time", "source", "seq", "kind", "detail"])
        for entry in report.timeline:
            writer.writerow(
                [entry["time"], entry["source"], entry["seq"], entry["kind"], entry["detail"]]
            )


def render_figures(report: AnalysisReport, outdir) -> list[str]:
    """Status breakdown and timeline figures as PNG files; returns the paths."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    from pathlib import Path

    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    paths: list[str] = []

    fig, ax = plt.subplots(figsize=(6, 3.5))
    statuses = STATUS_ORDER
    counts = [report.totals.get(s, 0) for s in statuses]
    colors = ["#b0b0b0", "#5b9bd5", "#ffc000", "#70ad47", "#c0504d", "#8064a2"]
    ax.bar(statuses, counts, color=colors)
    ax.set_ylabel("tasks")
    ax.set_title(f"{report.mission_id}: task outcomes")
    fig.tight_layout()
    status_path = outdir / f"{report.mission_id}.status.png"
    fig.savefig(status_path, dpi=120)
    plt.close(fig)
    paths.append(str(status_path))

    fig, ax = plt.subplots(figsize=(8, 4))
    kinds = sorted({e["kind"] for e in report.timeline})
    ypos = {k: i for i, k in enumerate(kinds)}
    for k in kinds:
        xs = [e["time"] for e in report.timeline if e["kind"] == k]
        ax.scatter(xs, [ypos[k]] * len(xs), s=14, label=k)
    ax.set_yticks(range(len(kinds)))
    ax.set_yticklabels(kinds)
    ax.set_xlabel("time (s)")
    ax.set_title(f"{report.mission_id}: timeline")
    fig.tight_layout()
    timeline_path = outdir / f"{report.mission_id}.timeline.png"
    fig.savefig(timeline_path, dpi=120)
    plt.close(fig)
    paths.append(str(timeline_path))
    return paths
