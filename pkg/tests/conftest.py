"""Shared test backends, builders, and fixture plumbing."""

from __future__ import annotations

import json
import threading
from pathlib import Path

import pytest

from persona_forge.config import BackendConfig, EngineConfig
from persona_forge.gateway import CompletionRequest, FixtureMissError, Gateway
from persona_forge.model import TaskNode, TaskPlan
from persona_forge.session import SessionService

FIXTURES = Path(__file__).parent / "fixtures"
SESSION_FIXTURE = FIXTURES / "session_fixture.json"
GOLDEN_TRANSCRIPT = FIXTURES / "golden_transcript.json"

GOLDEN_QUERIES = [
    "Compare Rust and Go for building a CLI tool. Be brief.",
    "Which one handles concurrency better?",
    "Summarize everything we discussed in plain language.",
]


class FnBackend:
    """Backend computed from the request; the workhorse for fuzz tests."""

    def __init__(self, fn, ref: str = "scripted:fn"):
        self.fn = fn
        self.ref = ref

    def complete(self, request: CompletionRequest) -> str:
        return self.fn(request)


class RecordingBackend:
    """Wraps a backend and keeps every request it saw."""

    def __init__(self, inner):
        self.inner = inner
        self.ref = inner.ref
        self.requests: list[CompletionRequest] = []
        self._lock = threading.Lock()

    def complete(self, request: CompletionRequest) -> str:
        with self._lock:
            self.requests.append(request)
        return self.inner.complete(request)

    def by_tag(self, tag: str) -> list[CompletionRequest]:
        with self._lock:
            return [r for r in self.requests if r.tag == tag]


class EchoBackend:
    """Completes every request with a stamp of what it was asked."""

    ref = "scripted:echo"

    def complete(self, request: CompletionRequest) -> str:
        return f"echo[{request.tag}]:{request.prompt.splitlines()[0]}"


class FailTasksBackend:
    """Echo backend that refuses specific tasks, for failure-path tests."""

    ref = "scripted:fail-tasks"

    def __init__(self, inner, fail_task_ids: set[str]):
        self.inner = inner
        self.fail_task_ids = fail_task_ids

    def complete(self, request: CompletionRequest) -> str:
        if request.tag == "task":
            first = request.prompt.splitlines()[0]
            for task_id in self.fail_task_ids:
                if first.startswith(f"Task {task_id}:"):
                    raise FixtureMissError(f"no fixture rule for task {task_id}")
        return self.inner.complete(request)


def gateway_for(backend, cap: int = 4) -> Gateway:
    # No sleeping in tests even when retry paths run.
    return Gateway(backend, max_inflight=cap, sleeper=lambda _: None)


def plan_of(nodes: dict[str, set[str]], plan_id: str = "pl-t", query_id: str = "q-t") -> TaskPlan:
    """Build a plan from {task_id: deps}; descriptions are derived."""
    return TaskPlan(
        plan_id=plan_id,
        query_id=query_id,
        nodes=tuple(
            TaskNode(
                task_id=t,
                description=f"work on {t}",
                depends_on=frozenset(deps),
            )
            for t, deps in nodes.items()
        ),
    )


def scripted_config(tmp_path: Path | None = None, **overrides) -> EngineConfig:
    config = EngineConfig(
        backend=BackendConfig(mode="scripted", fixture_path=str(SESSION_FIXTURE)),
        data_dir=str(tmp_path) if tmp_path is not None else None,
    )
    for key, value in overrides.items():
        setattr(config, key, value)
    return config


@pytest.fixture
def golden_service(tmp_path) -> SessionService:
    return SessionService(scripted_config(tmp_path / "data"))


@pytest.fixture
def memory_service() -> SessionService:
    return SessionService(scripted_config())


@pytest.fixture
def golden_transcript() -> list[dict]:
    return json.loads(GOLDEN_TRANSCRIPT.read_text(encoding="utf-8"))
