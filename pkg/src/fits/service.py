"""HTTP facade and persistence for mission execution.

Store layout: ``store/<mission_id>/{package.json, events.ndjson, telemetry/*.csv}``.
Every accepted command is appended (and fsynced) to the mission's NDJSON log
before the response is sent; recovery replays the logs. All mutations of one
mission are serialized through its lock; reads serve immutable snapshots.
"""

from __future__ import annotations

import json
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, Query, Request
from fastapi.responses import JSONResponse
from pydantic import BaseModel

from . import analysis, compiler, engine
from .engine import EngineError, EventRecord, MissionState
from .model import TaskGraph


class ApiError(Exception):
    def __init__(self, status: int, code: str, message: str, detail: str = ""):
        super().__init__(message)
        self.status = status
        self.code = code
        self.message = message
        self.detail = detail


_ENGINE_STATUS = {
    "unknown-task": 404,
    "unknown-condition": 404,
    "unknown-role": 404,
    "illegal-transition": 409,
    "not-responsible": 409,
    "mission-closed": 409,
    "clock-regression": 409,
    "internal-condition": 409,
    "seq-gap": 409,
    "validation": 422,
    "missing-note": 422,
    "missing-binding": 422,
    "unknown-actor": 422,
    "not-td-task": 422,
}


def _from_engine_error(exc: EngineError) -> ApiError:
    return ApiError(_ENGINE_STATUS.get(exc.code, 400), exc.code, str(exc))


@dataclass
class MissionRuntime:
    mission_id: str
    directory: Path
    graph: TaskGraph
    state: Optional[MissionState]
    events: list[EventRecord] = field(default_factory=list)
    status: str = "open"  # open | closed | corrupt
    error: str = ""
    lock: threading.Lock = field(default_factory=threading.Lock)
    changed: threading.Condition = field(default_factory=threading.Condition)

    @property
    def events_path(self) -> Path:
        return self.directory / "events.ndjson"

    @property
    def created_at(self) -> float:
        return self.events[0].timestamp if self.events else 0.0


class MissionStore:
    """Registry of missions backed by a store directory."""

    def __init__(self, root: Path, default_tolerance: float = analysis.DEFAULT_TOLERANCE_S):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.default_tolerance = default_tolerance
        self.missions: dict[str, MissionRuntime] = {}
        self._recover()

    def _recover(self) -> None:
        for mdir in sorted(self.root.iterdir() if self.root.is_dir() else []):
            pkg_path = mdir / "package.json"
            if not mdir.is_dir() or not pkg_path.is_file():
                continue
            mission_id = mdir.name
            try:
                graph = compiler.from_package(json.loads(pkg_path.read_text(encoding="utf-8")))
                events_path = mdir / "events.ndjson"
                events = engine.read_events(events_path) if events_path.is_file() else []
                state = engine.replay(events, graph, {}) if events else None
            except (EngineError, compiler.CompileError, json.JSONDecodeError, OSError) as exc:
                self.missions[mission_id] = MissionRuntime(
                    mission_id=mission_id,
                    directory=mdir,
                    graph=TaskGraph(mission_template_id="?"),
                    state=None,
                    status="corrupt",
                    error=str(exc),
                )
                continue
            runtime = MissionRuntime(
                mission_id=mission_id,
                directory=mdir,
                graph=graph,
                state=state,
                events=events,
                status="open" if state is not None and state.open else "closed",
            )
            self.missions[mission_id] = runtime

    def get(self, mission_id: str) -> MissionRuntime:
        runtime = self.missions.get(mission_id)
        if runtime is None:
            raise ApiError(404, "unknown-mission", f"unknown mission {mission_id}")
        if runtime.status == "corrupt":
            raise ApiError(500, "corrupt-log", f"mission {mission_id} log is corrupt",
                           runtime.error)
        return runtime

    def create(
        self,
        package: dict,
        bindings: dict[str, str],
        mission_id: Optional[str] = None,
        commander: str = "mission_commander",
        clock: Optional[float] = None,
    ) -> MissionRuntime:
        try:
            graph = compiler.from_package(package)
        except (compiler.CompileError, KeyError, TypeError, ValueError) as exc:
            raise ApiError(400, "bad-package", f"invalid mission package: {exc}") from exc
        mission_id = mission_id or uuid.uuid4().hex[:12]
        if mission_id in self.missions:
            raise ApiError(409, "duplicate-mission", f"mission {mission_id} already exists")
        try:
            state, events = engine.start_mission(
                graph,
                bindings,
                clock=time.time() if clock is None else clock,
                mission_id=mission_id,
                commander=commander,
            )
        except EngineError as exc:
            raise _from_engine_error(exc) from exc
        mdir = self.root / mission_id
        mdir.mkdir(parents=True, exist_ok=True)
        (mdir / "telemetry").mkdir(exist_ok=True)
        (mdir / "package.json").write_text(
            json.dumps(package, indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
        )
        runtime = MissionRuntime(
            mission_id=mission_id, directory=mdir, graph=graph, state=state
        )
        engine.write_events(runtime.events_path, events, fsync=True)
        runtime.events.extend(events)
        self.missions[mission_id] = runtime
        return runtime

    def execute(self, runtime: MissionRuntime, command) -> list[EventRecord]:
        """Run a state-mutating command under the mission lock.

        ``command`` maps a state snapshot to (new_state, events). The events
        hit disk before the in-memory state advances (write-ahead).
        """
        with runtime.lock:
            if runtime.state is None:
                raise ApiError(500, "no-state", "mission has no state")
            try:
                new_state, events = command(runtime.state)
            except EngineError as exc:
                raise _from_engine_error(exc) from exc
            if events:
                try:
                    engine.write_events(runtime.events_path, events, fsync=True)
                except OSError as exc:
                    raise ApiError(500, "store-io", f"cannot persist events: {exc}") from exc
                runtime.events.extend(events)
            runtime.state = new_state
            if not new_state.open:
                runtime.status = "closed"
        with runtime.changed:
            runtime.changed.notify_all()
        return events

    def telemetry_samples(self, runtime: MissionRuntime) -> list[analysis.TelemetrySample]:
        samples: list[analysis.TelemetrySample] = []
        tdir = runtime.directory / "telemetry"
        if tdir.is_dir():
            for path in sorted(tdir.glob("*.csv")):
                try:
                    result = analysis.ingest_telemetry(
                        path.read_text(encoding="utf-8"), origin=path.stem
                    )
                except analysis.AnalysisError:
                    continue
                samples.extend(result.samples)
        samples.sort(key=lambda s: (s.timestamp, s.source, s.key))
        return samples


# -- request bodies ---------------------------------------------------------------


class CreateMissionBody(BaseModel):
    package: dict
    bindings: dict[str, str] = {}
    mission_id: Optional[str] = None
    commander: str = "mission_commander"
    clock: Optional[float] = None


class CommandBody(BaseModel):
    kind: str
    actor: str = ""
    task_id: Optional[str] = None
    condition: Optional[str] = None
    value: Optional[object] = None
    note: Optional[str] = None
    priority: Optional[int] = None
    override: bool = False
    timestamp: Optional[float] = None


class IssueBody(BaseModel):
    reporter: str
    severity: str = "info"
    text: str
    task_id: Optional[str] = None
    timestamp: Optional[float] = None


class CloseBody(BaseModel):
    actor: Optional[str] = None
    timestamp: Optional[float] = None


def _task_view(state: MissionState, t) -> dict:
    return {
        "task_id": t.task_id,
        "when": t.when,
        "given": list(t.given),
        "then": list(t.then),
        "step_type": t.step_type.value,
        "responsible": state.resolved_responsible(t),
        "priority": state.effective_priority(t),
        "phase": t.phase,
        "duration_limit": t.duration_limit,
        "status": state.task_status[t.task_id].value,
        "data_spec": compiler.data_spec_to_dict(t.data_spec),
    }


def _event_view(ev: EventRecord) -> dict:
    return {
        "seq": ev.seq,
        "timestamp": ev.timestamp,
        "kind": ev.kind.value,
        "actor": ev.actor,
        "task_id": ev.task_id,
        "payload": ev.payload,
    }


def create_app(
    store_dir, default_tolerance: float = analysis.DEFAULT_TOLERANCE_S
) -> FastAPI:
    app = FastAPI(title="fits mission service")
    store = MissionStore(Path(store_dir), default_tolerance)
    app.state.store = store

    @app.exception_handler(ApiError)
    async def handle_api_error(request: Request, exc: ApiError):
        return JSONResponse(
            status_code=exc.status,
            content={"code": exc.code, "message": exc.message, "detail": exc.detail},
        )

    @app.post("/missions", status_code=201)
    def create_mission(body: CreateMissionBody):
        runtime = store.create(
            body.package, body.bindings, body.mission_id, body.commander, body.clock
        )
        return {"mission_id": runtime.mission_id}

    @app.get("/missions")
    def list_missions():
        return {
            "missions": [
                {
                    "mission_id": r.mission_id,
                    "status": r.status,
                    "created_at": r.created_at,
                    "template": r.graph.mission_template_id,
                    "bindings": r.state.bindings if r.state else {},
                }
                for r in store.missions.values()
            ]
        }

    @app.get("/missions/{mission_id}/tasks")
    def get_tasks(mission_id: str, role: str = Query(...)):
        runtime = store.get(mission_id)
        state = runtime.state
        try:
            tasks = engine.view_tasks(state, role)
        except EngineError as exc:
            raise _from_engine_error(exc)
        return {"role": role, "tasks": [_task_view(state, t) for t in tasks]}

    @app.post("/missions/{mission_id}/commands")
    def post_command(mission_id: str, body: CommandBody):
        runtime = store.get(mission_id)
        ts = time.time() if body.timestamp is None else body.timestamp

        def command(state: MissionState):
            kind = body.kind
            if kind == "confirm_condition":
                if body.condition is None:
                    raise ApiError(400, "malformed", "confirm_condition requires 'condition'")
                return engine.confirm_condition(
                    state, body.condition, body.actor, ts, override=body.override
                )
            if kind in ("start_task", "complete_task", "fail_task", "skip_task",
                        "record_data", "reprioritize", "reinstate_task", "tick"):
                if kind == "tick":
                    return engine.tick(state, ts)
                if body.task_id is None:
                    raise ApiError(400, "malformed", f"{kind} requires 'task_id'")
                if kind == "start_task":
                    return engine.start_task(state, body.task_id, body.actor, ts)
                if kind == "complete_task":
                    return engine.complete_task(state, body.task_id, body.actor, ts,
                                                note=body.note or "")
                if kind == "fail_task":
                    return engine.fail_task(state, body.task_id, body.actor, ts,
                                            note=body.note or "")
                if kind == "skip_task":
                    return engine.skip_task(state, body.task_id, body.actor, ts,
                                            note=body.note or "")
                if kind == "record_data":
                    return engine.record_data(state, body.task_id, body.value, body.actor, ts)
                if kind == "reprioritize":
                    if body.priority is None:
                        raise ApiError(400, "malformed", "reprioritize requires 'priority'")
                    return engine.reprioritize_task(
                        state, body.task_id, body.priority, body.actor, ts
                    )
                return engine.reinstate_task(state, body.task_id, body.actor, ts)
            raise ApiError(400, "malformed", f"unknown command kind {kind!r}")

        events = store.execute(runtime, command)
        return {
            "seq": runtime.state.last_seq,
            "events": [_event_view(e) for e in events],
        }

    @app.post("/missions/{mission_id}/issues", status_code=201)
    def post_issue(mission_id: str, body: IssueBody):
        runtime = store.get(mission_id)
        ts = time.time() if body.timestamp is None else body.timestamp

        def command(state: MissionState):
            return engine.report_issue(
                state, body.reporter, body.severity, body.text, ts, task_id=body.task_id
            )

        store.execute(runtime, command)
        issue = runtime.state.issues[-1]
        return {"issue_id": issue.issue_id, "seq": runtime.state.last_seq}

    @app.get("/missions/{mission_id}/events")
    def get_events(mission_id: str, since: int = 0, wait: float = 0.0):
        """Incremental event feed: all events with seq > since.

        With wait > 0, long-polls up to that many seconds for new events.
        """
        runtime = store.get(mission_id)
        deadline = time.monotonic() + min(wait, 30.0)
        while True:
            with runtime.lock:
                events = [e for e in runtime.events if e.seq > since]
            if events or time.monotonic() >= deadline:
                return {
                    "events": [_event_view(e) for e in events],
                    "last_seq": events[-1].seq if events else since,
                }
            with runtime.changed:
                runtime.changed.wait(timeout=min(0.25, max(deadline - time.monotonic(), 0.01)))

    @app.post("/missions/{mission_id}/telemetry", status_code=202)
    async def post_telemetry(mission_id: str, request: Request):
        runtime = store.get(mission_id)
        text = (await request.body()).decode("utf-8", errors="replace")
        try:
            result = analysis.ingest_telemetry(text)
        except analysis.AnalysisError as exc:
            raise ApiError(422, "bad-telemetry", str(exc))
        tdir = runtime.directory / "telemetry"
        tdir.mkdir(exist_ok=True)
        n = len(list(tdir.glob("*.csv"))) + 1
        (tdir / f"upload_{n:03d}.csv").write_text(text, encoding="utf-8")
        return {"samples": len(result.samples), "warnings": result.warnings}

    @app.get("/missions/{mission_id}/report")
    def get_report(mission_id: str, tolerance: Optional[float] = None):
        runtime = store.get(mission_id)
        samples = store.telemetry_samples(runtime)
        with runtime.lock:
            events = list(runtime.events)
        try:
            report = analysis.build_report(
                events,
                runtime.graph,
                samples,
                tolerance_seconds=tolerance or store.default_tolerance,
            )
        except (EngineError, analysis.AnalysisError) as exc:
            raise ApiError(500, "report-failed", str(exc))
        return report.to_dict()

    @app.post("/missions/{mission_id}/close")
    def close_mission(mission_id: str, body: CloseBody = CloseBody()):
        runtime = store.get(mission_id)
        ts = time.time() if body.timestamp is None else body.timestamp
        actor = body.actor or (runtime.state.commander if runtime.state else "mission_commander")

        def command(state: MissionState):
            return engine.close_mission(state, actor, ts)

        store.execute(runtime, command)
        return {"status": "closed", "seq": runtime.state.last_seq}

    return app
