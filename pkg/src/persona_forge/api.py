"""HTTP surface: session lifecycle, query submission, and the event stream.

Queries are accepted asynchronously; progress and results flow to clients
over Server-Sent Events. The `since` query parameter (or a standard
Last-Event-ID header) resumes a stream without losing or repeating events.
"""

from __future__ import annotations

import json

from fastapi import FastAPI, Request, Response
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import JSONResponse, StreamingResponse
from pydantic import BaseModel

from .model import canonical_json
from .orchestrator import compute_waves
from .session import SessionBusy, SessionRuntime, SessionService


class QueryBody(BaseModel):
    text: str


def create_app(service: SessionService, keepalive_s: float = 15.0) -> FastAPI:
    app = FastAPI(title="persona-forge", docs_url=None, redoc_url=None)
    app.state.service = service
    # The browser UI is served separately from the API, so cross-origin
    # access must be allowed for both fetch and EventSource.
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    def _get(session_id: str) -> SessionRuntime | None:
        return service.get(session_id)

    def _missing() -> JSONResponse:
        return JSONResponse({"detail": "unknown session"}, status_code=404)

    @app.post("/v1/sessions", status_code=201)
    def create_session() -> dict:
        runtime = service.create()
        return {"session_id": runtime.session_id}

    @app.delete("/v1/sessions/{session_id}", status_code=204)
    def delete_session(session_id: str) -> Response:
        if not service.delete(session_id):
            return _missing()
        return Response(status_code=204)

    @app.post("/v1/sessions/{session_id}/queries", status_code=202)
    def submit_query(session_id: str, body: QueryBody):
        runtime = _get(session_id)
        if runtime is None:
            return _missing()
        if not body.text.strip():
            return JSONResponse({"detail": "text must be non-empty"}, status_code=400)
        try:
            query_id = runtime.submit_query(body.text)
        except SessionBusy:
            return JSONResponse(
                {"detail": "a query is already in flight"}, status_code=409
            )
        return {"query_id": query_id}

    @app.get("/v1/sessions/{session_id}/events")
    def stream_events(session_id: str, request: Request, since: int | None = None):
        runtime = _get(session_id)
        if runtime is None:
            return _missing()
        if since is None:
            header = request.headers.get("last-event-id")
            since = int(header) if header and header.isdigit() else 0

        cursor = runtime.subscribe(since=since)

        def generate():
            try:
                while True:
                    event = cursor.next(timeout=keepalive_s)
                    if event is None:
                        yield ": ping\n\n"
                        continue
                    yield f"id: {event.seq}\ndata: {canonical_json(event.to_doc())}\n\n"
            finally:
                cursor.close()

        return StreamingResponse(generate(), media_type="text/event-stream")

    @app.get("/v1/sessions/{session_id}/plan/{query_id}")
    def get_plan(session_id: str, query_id: str):
        runtime = _get(session_id)
        if runtime is None:
            return _missing()
        plan = runtime.state.plans.get(query_id)
        if plan is None:
            return JSONResponse({"detail": "unknown query"}, status_code=404)
        return {
            "plan": plan.to_doc(),
            "waves": compute_waves(plan),
            "task_statuses": runtime.state.task_statuses.get(query_id, {}),
        }

    @app.get("/v1/sessions/{session_id}/agents")
    def get_agents(session_id: str):
        runtime = _get(session_id)
        if runtime is None:
            return _missing()
        agents = sorted(
            (a.to_doc() for a in runtime.state.agents.values()),
            key=lambda d: d["agent_id"],
        )
        personas = [p.to_doc() for p in runtime.state.pool.personas]
        return {"agents": agents, "personas": personas}

    @app.get("/v1/sessions/{session_id}/responses/{query_id}")
    def get_response(session_id: str, query_id: str):
        runtime = _get(session_id)
        if runtime is None:
            return _missing()
        entry = runtime.state.responses.get(query_id)
        if entry is None:
            known = any(q.id == query_id for q in runtime.state.queries)
            detail = "response not ready" if known else "unknown query"
            return JSONResponse({"detail": detail}, status_code=404)
        response, status = entry
        return {"response": response.to_doc(), "status": status}

    return app


def parse_sse(raw: str) -> list[dict]:
    """Decode an SSE stream body into event documents; comments are skipped.

    The inverse of what `stream_events` emits, shared by tests and tooling.
    """
    events: list[dict] = []
    for block in raw.split("\n\n"):
        data_lines = [
            line[len("data:"):].strip()
            for line in block.splitlines()
            if line.startswith("data:")
        ]
        if data_lines:
            events.append(json.loads("\n".join(data_lines)))
    return events
