"""Session lifecycle: pipeline runs, the event log, persistence, and restore.

A session is an append-only event log plus state folded from it. Persistence
is event-sourced: every run appends events as they happen, snapshots are taken
at query boundaries, and restore replays the tail on top of the last snapshot.
A restore never resurrects a half-finished query; the log is rolled back to
the last completed response, write-ahead style.
"""

from __future__ import annotations

import json
import queue
import re
import shutil
import threading
from collections import deque
from pathlib import Path
from typing import Any, Callable

from .aggregator import STATUS_ERROR, aggregate
from .analysis import AnalysisError, profile_encode, task_decompose
from .config import EngineConfig, build_gateway
from .foundry import AgentFactory, FoundryError, PersonaFoundry, persona_fingerprint
from .gateway import Gateway
from .model import (
    AgentInstance,
    AgentStatus,
    Doc,
    EventKind,
    FinalResponse,
    PersonaPool,
    PipelineEvent,
    Query,
    TaskPlan,
    UserProfile,
    agent_from_doc,
    default_profile,
    event_from_doc,
    now_iso,
    persona_from_doc,
    plan_from_doc,
    profile_from_doc,
    query_from_doc,
    response_from_doc,
)
from .orchestrator import STATUS_FAILED, STATUS_FAILED_UPSTREAM, compute_waves, execute_plan

SNAPSHOT_EVERY = 200

# Wall-clock fields carry no meaning for replay comparison; everything else does.
TIMESTAMP_KEYS = frozenset({"at", "submitted_at", "completed_at", "created_at"})

_SESSION_DIR = re.compile(r"^s-(\d+)$")


class SessionBusy(Exception):
    """A query is already in flight; sessions process one at a time."""


def scrub_timestamps(doc: Any) -> Any:
    if isinstance(doc, dict):
        return {k: scrub_timestamps(v) for k, v in doc.items() if k not in TIMESTAMP_KEYS}
    if isinstance(doc, list):
        return [scrub_timestamps(v) for v in doc]
    return doc


def semantic_transcript(events: list[PipelineEvent]) -> list[Doc]:
    """The comparable form of an event log: everything but wall-clock noise."""
    return [scrub_timestamps(e.to_doc()) for e in events]


class SessionState:
    """Everything a session knows, foldable from its event log."""

    def __init__(self, session_id: str):
        self.session_id = session_id
        self.profile: UserProfile = default_profile()
        self.pool = PersonaPool(session_id=session_id)
        self.agents: dict[str, AgentInstance] = {}
        self.queries: list[Query] = []
        self.plans: dict[str, TaskPlan] = {}
        self.task_statuses: dict[str, dict[str, str]] = {}
        self.responses: dict[str, tuple[FinalResponse, str]] = {}
        self.last_seq = 0

    def to_doc(self) -> Doc:
        return {
            "session_id": self.session_id,
            "last_seq": self.last_seq,
            "profile": self.profile.to_doc(),
            "pool": self.pool.to_doc(),
            "agents": {pid: a.to_doc() for pid, a in self.agents.items()},
            "queries": [q.to_doc() for q in self.queries],
            "plans": {qid: p.to_doc() for qid, p in self.plans.items()},
            "task_statuses": self.task_statuses,
            "responses": {
                qid: {"response": r.to_doc(), "status": s}
                for qid, (r, s) in self.responses.items()
            },
        }

    @classmethod
    def from_doc(cls, doc: Doc) -> "SessionState":
        state = cls(doc["session_id"])
        state.last_seq = int(doc["last_seq"])
        state.profile = profile_from_doc(doc["profile"])
        for spec_doc in doc["pool"]["personas"]:
            spec = persona_from_doc(spec_doc)
            state.pool.add(
                spec,
                persona_fingerprint(
                    spec.role, spec.capabilities, spec.communication_style.value
                ),
            )
        state.agents = {pid: agent_from_doc(d) for pid, d in doc["agents"].items()}
        state.queries = [query_from_doc(d) for d in doc["queries"]]
        state.plans = {qid: plan_from_doc(d) for qid, d in doc["plans"].items()}
        state.task_statuses = {
            qid: dict(statuses) for qid, statuses in doc["task_statuses"].items()
        }
        state.responses = {
            qid: (response_from_doc(entry["response"]), entry["status"])
            for qid, entry in doc["responses"].items()
        }
        return state


def fold_event(state: SessionState, doc: Doc) -> None:
    """Apply one logged event to state. Restore is a left fold of this."""
    kind = doc["kind"]
    payload = doc.get("payload", {})
    if kind == EventKind.QUERY_RECEIVED.value:
        state.queries.append(query_from_doc(payload["query"]))
    elif kind == EventKind.PROFILE_UPDATED.value:
        state.profile = profile_from_doc(payload["profile"])
    elif kind == EventKind.PLAN_READY.value:
        plan = plan_from_doc(payload["plan"])
        state.plans[plan.query_id] = plan
    elif kind == EventKind.PERSONA_CREATED.value:
        spec = persona_from_doc(payload["persona"])
        state.pool.add(spec, payload["fingerprint"])
    elif kind == EventKind.AGENT_SPAWNED.value:
        agent = agent_from_doc(payload["agent"])
        state.agents[agent.persona_id] = agent
    elif kind == EventKind.TASK_COMPLETED.value:
        _query_statuses(state)[payload["task_id"]] = "done"
    elif kind == EventKind.TASK_FAILED.value:
        status = STATUS_FAILED_UPSTREAM if payload.get("reason") == "upstream" else STATUS_FAILED
        _query_statuses(state)[payload["task_id"]] = status
    elif kind == EventKind.RESPONSE_READY.value:
        response = response_from_doc(payload["response"])
        state.responses[response.query_id] = (response, payload.get("status", "ok"))
    state.last_seq = max(state.last_seq, int(doc["seq"]))


def _query_statuses(state: SessionState) -> dict[str, str]:
    if not state.queries:
        raise ValueError("task event before any query_received")
    return state.task_statuses.setdefault(state.queries[-1].id, {})


class EventStore:
    """Files for one session: events.jsonl, snapshot.json, meta.json.

    With no root directory the store is a no-op sink: the session runs
    entirely in memory and cannot be restored.
    """

    def __init__(self, root: Path | None, session_id: str):
        self.dir = (root / session_id) if root is not None else None
        self._lock = threading.Lock()

    @property
    def persistent(self) -> bool:
        return self.dir is not None

    @property
    def events_path(self) -> Path:
        assert self.dir is not None
        return self.dir / "events.jsonl"

    def create(self, meta: Doc) -> None:
        if self.dir is None:
            return
        self.dir.mkdir(parents=True, exist_ok=True)
        (self.dir / "meta.json").write_text(json.dumps(meta, indent=2), encoding="utf-8")
        self.events_path.touch()

    def append(self, event_doc: Doc) -> None:
        if self.dir is None:
            return
        line = json.dumps(event_doc, sort_keys=True, ensure_ascii=False)
        with self._lock:
            with self.events_path.open("a", encoding="utf-8") as fh:
                fh.write(line + "\n")
                fh.flush()

    def read_events(self) -> list[Doc]:
        """Read the log, stopping at the first undecodable line.

        A torn final line is expected after a crash; everything before it is
        intact because appends are line-atomic under the lock.
        """
        if self.dir is None or not self.events_path.exists():
            return []
        events: list[Doc] = []
        for line in self.events_path.read_text(encoding="utf-8").splitlines():
            if not line.strip():
                continue
            try:
                doc = json.loads(line)
            except json.JSONDecodeError:
                break
            events.append(doc)
        return events

    def truncate_after(self, seq: int) -> None:
        """Rewrite the log keeping only events with seq <= the boundary."""
        if self.dir is None:
            return
        with self._lock:
            kept = [d for d in self.read_events() if int(d["seq"]) <= seq]
            tmp = self.events_path.with_suffix(".jsonl.tmp")
            with tmp.open("w", encoding="utf-8") as fh:
                for doc in kept:
                    fh.write(json.dumps(doc, sort_keys=True, ensure_ascii=False) + "\n")
            tmp.replace(self.events_path)

    def write_snapshot(self, doc: Doc) -> None:
        if self.dir is None:
            return
        tmp = self.dir / "snapshot.json.tmp"
        tmp.write_text(json.dumps(doc, sort_keys=True, ensure_ascii=False), encoding="utf-8")
        tmp.replace(self.dir / "snapshot.json")

    def read_snapshot(self) -> Doc | None:
        if self.dir is None:
            return None
        path = self.dir / "snapshot.json"
        if not path.exists():
            return None
        try:
            return json.loads(path.read_text(encoding="utf-8"))
        except json.JSONDecodeError:
            return None

    def read_meta(self) -> Doc | None:
        if self.dir is None:
            return None
        path = self.dir / "meta.json"
        if not path.exists():
            return None
        return json.loads(path.read_text(encoding="utf-8"))

    def destroy(self) -> None:
        if self.dir is not None and self.dir.exists():
            shutil.rmtree(self.dir)


class EventCursor:
    """Reader over a session's event stream: logged backlog, then live."""

    def __init__(self, backlog: list[PipelineEvent], unsubscribe: Callable[[], None]):
        self._backlog = deque(backlog)
        self._live: queue.Queue[PipelineEvent] = queue.Queue()
        self._unsubscribe = unsubscribe
        self.closed = False

    def push(self, event: PipelineEvent) -> None:
        self._live.put(event)

    def next(self, timeout: float | None = None) -> PipelineEvent | None:
        if self._backlog:
            return self._backlog.popleft()
        try:
            return self._live.get(timeout=timeout)
        except queue.Empty:
            return None

    def close(self) -> None:
        if not self.closed:
            self.closed = True
            self._unsubscribe()


class SessionRuntime:
    """One live session: owns the state, the log, and query execution."""

    def __init__(
        self,
        state: SessionState,
        store: EventStore,
        config: EngineConfig,
        gateway: Gateway,
        events: list[PipelineEvent] | None = None,
        snapshot_every: int = SNAPSHOT_EVERY,
    ):
        self.state = state
        self.store = store
        self.config = config
        self.gateway = gateway
        self.events: list[PipelineEvent] = events or []
        self.snapshot_every = snapshot_every
        self._lock = threading.RLock()
        self._busy = False
        self._cursors: list[EventCursor] = []
        self._worker: threading.Thread | None = None
        self._snapshot_seq = state.last_seq

    @property
    def session_id(self) -> str:
        return self.state.session_id

    @property
    def busy(self) -> bool:
        with self._lock:
            return self._busy

    # --- event stream ---------------------------------------------------

    def emit(self, kind: EventKind, payload: Doc) -> PipelineEvent:
        with self._lock:
            event = PipelineEvent(
                seq=self.state.last_seq + 1, kind=kind, payload=payload, at=now_iso()
            )
            self.state.last_seq = event.seq
            self.events.append(event)
            self.store.append(event.to_doc())
            for cursor in list(self._cursors):
                cursor.push(event)
        return event

    def subscribe(self, since: int = 0) -> EventCursor:
        with self._lock:
            backlog = [e for e in self.events if e.seq > since]
            cursor = EventCursor(backlog, unsubscribe=lambda: self._drop_cursor(cursor))
            self._cursors.append(cursor)
            return cursor

    def _drop_cursor(self, cursor: EventCursor) -> None:
        with self._lock:
            if cursor in self._cursors:
                self._cursors.remove(cursor)

    # --- query execution --------------------------------------------------

    def run_query(self, text: str) -> str:
        """Run one query to completion; returns its id."""
        query = self._begin(text)
        self._pipeline(query)
        return query.id

    def submit_query(self, text: str) -> str:
        """Accept a query and run it on a worker thread; returns its id."""
        query = self._begin(text)
        worker = threading.Thread(target=self._pipeline, args=(query,), daemon=True)
        self._worker = worker
        worker.start()
        return query.id

    def join(self, timeout: float | None = None) -> None:
        worker = self._worker
        if worker is not None:
            worker.join(timeout)

    def _begin(self, text: str) -> Query:
        with self._lock:
            if self._busy:
                raise SessionBusy(f"session {self.session_id} has a query in flight")
            self._busy = True
            query = Query(
                id=f"q-{len(self.state.queries) + 1:03d}",
                session_id=self.session_id,
                text=text,
                submitted_at=now_iso(),
            )
            self.state.queries.append(query)
        self.emit(EventKind.QUERY_RECEIVED, {"query": query.to_doc()})
        return query

    def _pipeline(self, query: Query) -> None:
        """Profile, plan, staff, execute, aggregate: the whole run for one query.

        Never raises: every failure path ends in a response_ready event so
        callers and subscribers always see the query reach a terminal state.
        """
        try:
            history = [q.text for q in self.state.queries[:-1]]
            profiled = profile_encode(self.gateway, query, self.state.profile, history)
            self.state.profile = profiled.profile
            self.emit(
                EventKind.PROFILE_UPDATED,
                {"profile": profiled.profile.to_doc(), "degraded": profiled.degraded},
            )

            decomposed = task_decompose(
                self.gateway, query, profiled.profile, plan_id=f"pl-{len(self.state.plans) + 1:03d}"
            )
            plan = decomposed.plan
            self.state.plans[query.id] = plan
            waves = compute_waves(plan)
            self.emit(
                EventKind.PLAN_READY,
                {
                    "plan": plan.to_doc(),
                    "waves": waves,
                    "structured_repair": decomposed.structured_repair,
                    "plan_repair": decomposed.plan_repair,
                },
            )

            foundry = PersonaFoundry(self.gateway, self.state.pool, self.emit)
            factory = AgentFactory(self.gateway.backend_ref, self.state.agents, self.emit)
            nodes = plan.nodes_by_id()
            assignments: dict[str, AgentInstance] = {}
            pre_failed: dict[str, str] = {}
            for wave in waves:
                for task_id in wave:
                    try:
                        persona = foundry.craft(nodes[task_id], profiled.profile)
                        assignments[task_id] = factory.agent_for(persona)
                    except FoundryError as exc:
                        pre_failed[task_id] = str(exc)

            outcome = execute_plan(
                plan,
                assignments,
                self.gateway,
                self.emit,
                parallelism_cap=self.config.parallelism_cap,
                retries=self.config.retries,
                pre_failed=pre_failed,
                set_status=factory.set_status,
            )
            self.state.task_statuses[query.id] = dict(outcome.statuses)

            agg = aggregate(
                self.gateway,
                query,
                plan,
                outcome,
                profiled.profile,
                scope=self.config.aggregate_scope,
            )
            self._finish(query, agg.response, agg.status, fallback=agg.fallback)
        except AnalysisError as exc:
            self._finish_error(query, f"Could not plan this request: {exc}")
        except Exception as exc:  # noqa: BLE001 -- terminal state must be reached
            self._finish_error(query, f"Pipeline error: {exc}")

    def _finish_error(self, query: Query, detail: str) -> None:
        response = FinalResponse(
            query_id=query.id,
            content=detail,
            source_results=frozenset(),
            style_applied=self.state.profile.communication_style,
        )
        self._finish(query, response, STATUS_ERROR, fallback=False)

    def _finish(
        self, query: Query, response: FinalResponse, status: str, fallback: bool
    ) -> None:
        with self._lock:
            self.state.responses[query.id] = (response, status)
            for pid, agent in list(self.state.agents.items()):
                if agent.status is not AgentStatus.IDLE:
                    self.state.agents[pid] = AgentInstance(
                        agent_id=agent.agent_id,
                        persona_id=agent.persona_id,
                        rendered_system_prompt=agent.rendered_system_prompt,
                        backend_ref=agent.backend_ref,
                        status=AgentStatus.IDLE,
                    )
        self.emit(
            EventKind.RESPONSE_READY,
            {"response": response.to_doc(), "status": status, "fallback": fallback},
        )
        with self._lock:
            if self.state.last_seq - self._snapshot_seq >= self.snapshot_every:
                self.store.write_snapshot(self.state.to_doc())
                self._snapshot_seq = self.state.last_seq
            self._busy = False


class SessionService:
    """Creates, restores, and deletes sessions under one engine config."""

    def __init__(self, config: EngineConfig, gateway: Gateway | None = None):
        self.config = config.validated()
        self.gateway = gateway or build_gateway(config)
        self.root = Path(config.data_dir) if config.data_dir else None
        self._sessions: dict[str, SessionRuntime] = {}
        self._lock = threading.Lock()

    def create(self, session_id: str | None = None) -> SessionRuntime:
        with self._lock:
            if session_id is None:
                session_id = f"s-{self._next_index():03d}"
            elif session_id in self._sessions or self._on_disk(session_id):
                raise ValueError(f"session already exists: {session_id}")
            store = EventStore(self.root, session_id)
            store.create({"session_id": session_id, "created_at": now_iso()})
            runtime = SessionRuntime(
                SessionState(session_id), store, self.config, self.gateway
            )
            self._sessions[session_id] = runtime
            return runtime

    def get(self, session_id: str) -> SessionRuntime | None:
        with self._lock:
            runtime = self._sessions.get(session_id)
            if runtime is not None:
                return runtime
            if not self._on_disk(session_id):
                return None
            runtime = self._restore(session_id)
            self._sessions[session_id] = runtime
            return runtime

    def delete(self, session_id: str) -> bool:
        with self._lock:
            runtime = self._sessions.pop(session_id, None)
            if runtime is not None:
                runtime.store.destroy()
                return True
            if self._on_disk(session_id):
                EventStore(self.root, session_id).destroy()
                return True
            return False

    def list_ids(self) -> list[str]:
        with self._lock:
            ids = set(self._sessions)
            if self.root is not None and self.root.exists():
                ids.update(p.name for p in self.root.iterdir() if p.is_dir())
            return sorted(ids)

    def _on_disk(self, session_id: str) -> bool:
        return self.root is not None and (self.root / session_id).is_dir()

    def _next_index(self) -> int:
        taken = [0]
        for sid in list(self._sessions):
            m = _SESSION_DIR.match(sid)
            if m:
                taken.append(int(m.group(1)))
        if self.root is not None and self.root.exists():
            for p in self.root.iterdir():
                m = _SESSION_DIR.match(p.name)
                if m:
                    taken.append(int(m.group(1)))
        return max(taken) + 1

    def _restore(self, session_id: str) -> SessionRuntime:
        """Rebuild a session from disk, rolled back to the last completed query.

        Any events past the last response_ready belong to a query that never
        finished; they are removed from the log so the restored session can
        accept new queries with a clean, gapless sequence.
        """
        store = EventStore(self.root, session_id)
        event_docs = store.read_events()

        boundary = 0
        for doc in event_docs:
            if doc["kind"] == EventKind.RESPONSE_READY.value:
                boundary = int(doc["seq"])
        kept = [d for d in event_docs if int(d["seq"]) <= boundary]

        snapshot = store.read_snapshot()
        if snapshot is not None and int(snapshot["last_seq"]) <= boundary:
            state = SessionState.from_doc(snapshot)
            tail = [d for d in kept if int(d["seq"]) > state.last_seq]
        else:
            # Snapshot missing or ahead of the valid log: fold from scratch.
            state = SessionState(session_id)
            tail = kept
        for doc in tail:
            fold_event(state, doc)
        state.last_seq = boundary

        if len(kept) != len(event_docs):
            store.truncate_after(boundary)

        events = [event_from_doc(d) for d in kept]
        return SessionRuntime(state, store, self.config, self.gateway, events=events)
