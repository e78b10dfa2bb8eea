"""HTTP wire protocol over the orchestrator.

Bodies are passed to the session layer nearly raw so that validation and
error messages are identical whether a session is driven in process or
over the wire. Protocol mistakes map to 4xx with {"error": "..."}.
"""

from __future__ import annotations

import pathlib
import threading
from typing import Any

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, PlainTextResponse

from . import __version__
from .orchestrator import DEFAULT_ACTION_BUDGET, Orchestrator, ProtocolError
from .scenario import ProblemCache


def _status_for(exc: ProtocolError) -> int:
    missing = str(exc).startswith(("unknown problem", "unknown session"))
    return 404 if missing else 400


def create_app(
    cache: ProblemCache,
    budget: int = DEFAULT_ACTION_BUDGET,
    ui_dir: str | pathlib.Path | None = None,
) -> FastAPI:
    app = FastAPI(title="opsbench", version=__version__)
    orchestrator = Orchestrator(cache)
    locks: dict[str, threading.Lock] = {}
    registry_lock = threading.Lock()

    def session_lock(session_id: str) -> threading.Lock:
        with registry_lock:
            lock = locks.get(session_id)
        if lock is None:
            raise ProtocolError(f"unknown session '{session_id}'")
        return lock

    @app.exception_handler(ProtocolError)
    def protocol_error(request: Request, exc: ProtocolError) -> JSONResponse:
        return JSONResponse(status_code=_status_for(exc), content={"error": str(exc)})

    @app.get("/problems")
    def list_problems() -> dict:
        items = []
        for problem in cache.problems():
            scenario = problem.scenario
            items.append(
                {
                    "problem_id": problem.problem_id,
                    "task": scenario.task,
                    "app": scenario.topology.app_name,
                    "namespace": scenario.topology.namespace,
                    "focus": scenario.focus_service,
                }
            )
        return {"problems": items}

    @app.post("/sessions")
    def start_session(body: dict) -> dict:
        problem_id = body.get("problem_id")
        if not isinstance(problem_id, str):
            raise ProtocolError("problem_id must be a string")
        seed = body.get("seed")
        if seed is not None and not isinstance(seed, int):
            raise ProtocolError("seed must be an integer")
        session_budget = body.get("budget", budget)
        if not isinstance(session_budget, int) or session_budget < 1:
            raise ProtocolError("budget must be a positive integer")
        with registry_lock:
            session = orchestrator.start_session(problem_id, budget=session_budget, seed=seed)
            locks[session.session_id] = threading.Lock()
        return {
            "session_id": session.session_id,
            "problem_id": session.problem.problem_id,
            "task": session.problem.task,
            "budget": session.budget,
            "action_latency_ms": session.problem.scenario.action_latency_ms,
            "briefing": session.briefing,
        }

    @app.post("/sessions/{session_id}/actions")
    def act(session_id: str, body: dict) -> dict:
        with session_lock(session_id):
            session = orchestrator.get_session(session_id)
            record = session.act(body.get("api"), body.get("args"), body.get("thought", ""))
        return {
            "observation": record.observation,
            "error": record.error,
            "sim_time_ms": record.sim_time_ms,
        }

    @app.post("/sessions/{session_id}/submit")
    def submit(session_id: str, body: dict) -> Any:
        with session_lock(session_id):
            session = orchestrator.get_session(session_id)
            session.act(
                "submit", {"solution": body.get("solution")}, body.get("thought", "")
            )
            return session.report

    @app.get("/sessions/{session_id}/transcript")
    def transcript(session_id: str) -> PlainTextResponse:
        with session_lock(session_id):
            session = orchestrator.get_session(session_id)
            text = session.transcript_jsonl()
        return PlainTextResponse(text, media_type="application/x-ndjson")

    @app.get("/sessions/{session_id}/report")
    def report(session_id: str) -> Any:
        with session_lock(session_id):
            session = orchestrator.get_session(session_id)
            if session.report is None:
                return JSONResponse(
                    status_code=409, content={"error": "session is still open"}
                )
            return session.report

    if ui_dir is not None:
        path = pathlib.Path(ui_dir)
        if path.is_dir():
            from fastapi.staticfiles import StaticFiles

            app.mount("/ui", StaticFiles(directory=str(path), html=True), name="ui")

    return app
