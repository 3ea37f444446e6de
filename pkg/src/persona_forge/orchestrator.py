"""Wave scheduling and dependency-routed execution of a task plan.

A plan is layered into waves by longest dependency chain, waves run under a
barrier, and each task receives exactly the outputs of its declared
dependencies: nothing more, nothing less. Failures do not stop a wave; they
mark the failed task and cascade a distinct status to everything downstream.

The event log is a deterministic linearization of the run: within a wave,
starts and completions are released in lexicographic task order through a
virtual schedule that respects the parallelism cap, while the real work runs
concurrently underneath. The log therefore replays identically across runs
regardless of thread timing.
"""

from __future__ import annotations

import threading
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

from . import prompts
from .foundry import EmitFn
from .gateway import TAG_TASK, CompletionRequest, Gateway, GatewayError
from .model import (
    AgentInstance,
    AgentStatus,
    EventKind,
    PartialResult,
    TaskNode,
    TaskPlan,
    now_iso,
)

STATUS_DONE = "done"
STATUS_FAILED = "failed"
STATUS_FAILED_UPSTREAM = "failed-upstream"

REASON_ERROR = "error"
REASON_UPSTREAM = "upstream"
REASON_PERSONA = "persona"


class OrchestrationError(Exception):
    """An internal invariant broke; plans reaching here are pre-validated."""


def compute_waves(plan: TaskPlan) -> list[list[str]]:
    """Layer a valid plan: a task's wave is its longest dependency chain length.

    Tasks in the same wave share no path between them, so each wave is safe to
    run fully in parallel. Waves are lexicographically sorted inside.
    """
    nodes = plan.nodes_by_id()
    remaining = {t: set(n.depends_on) for t, n in nodes.items()}
    dependents: dict[str, list[str]] = {t: [] for t in nodes}
    for t, deps in remaining.items():
        for d in deps:
            dependents[d].append(t)

    level: dict[str, int] = {}
    frontier = [t for t, deps in remaining.items() if not deps]
    for t in frontier:
        level[t] = 0
    while frontier:
        current = frontier.pop()
        for dep in dependents[current]:
            remaining[dep].discard(current)
            level[dep] = max(level.get(dep, 0), level[current] + 1)
            if not remaining[dep]:
                frontier.append(dep)

    if len(level) != len(nodes):
        raise OrchestrationError("plan is not acyclic; validate before scheduling")

    waves: list[list[str]] = [[] for _ in range(max(level.values()) + 1)] if level else []
    for t, lvl in level.items():
        waves[lvl].append(t)
    for wave in waves:
        wave.sort()
    return waves


def route_context(
    task: TaskNode,
    nodes: dict[str, TaskNode],
    results: dict[str, PartialResult],
) -> dict[str, tuple[str, str]]:
    """Inputs for one task: its declared dependencies' outputs, exactly.

    Missing results here mean the scheduler ran a task before its inputs,
    which is an invariant violation, not a recoverable condition.
    """
    context: dict[str, tuple[str, str]] = {}
    for dep in sorted(task.depends_on):
        if dep not in results:
            raise OrchestrationError(f"task {task.task_id} routed before dependency {dep}")
        context[dep] = (nodes[dep].description, results[dep].content)
    return context


def route_inputs(
    plan: TaskPlan, results: dict[str, PartialResult]
) -> dict[str, dict[str, tuple[str, str]]]:
    """Contexts for every task whose dependencies all completed, ordered by
    (wave, task_id). Tasks with incomplete dependencies are omitted."""
    nodes = plan.nodes_by_id()
    routed: dict[str, dict[str, tuple[str, str]]] = {}
    for wave in compute_waves(plan):
        for task_id in wave:
            task = nodes[task_id]
            if all(dep in results for dep in task.depends_on):
                routed[task_id] = route_context(task, nodes, results)
    return routed


@dataclass(frozen=True)
class TaskFailure:
    reason: str
    detail: str
    attempts: int = 0
    failed_dependencies: tuple[str, ...] = ()


@dataclass
class ExecutionOutcome:
    results: dict[str, PartialResult] = field(default_factory=dict)
    statuses: dict[str, str] = field(default_factory=dict)
    failures: dict[str, TaskFailure] = field(default_factory=dict)

    @property
    def all_done(self) -> bool:
        return all(s == STATUS_DONE for s in self.statuses.values())


class _TaskError(Exception):
    def __init__(self, detail: str, attempts: int):
        super().__init__(detail)
        self.detail = detail
        self.attempts = attempts


def execute_plan(
    plan: TaskPlan,
    assignments: dict[str, AgentInstance],
    gateway: Gateway,
    emit: EmitFn,
    parallelism_cap: int = 4,
    retries: int = 1,
    pre_failed: dict[str, str] | None = None,
    set_status: Callable[[str, AgentStatus], None] | None = None,
) -> ExecutionOutcome:
    """Run the plan wave by wave and emit the execution event stream.

    `pre_failed` names tasks that never got a working agent; they fail without
    running and poison their descendants. Every task in the plan ends in
    exactly one of done, failed, or failed-upstream.
    """
    pre_failed = pre_failed or {}
    nodes = plan.nodes_by_id()
    for task_id in nodes:
        if task_id not in assignments and task_id not in pre_failed:
            raise OrchestrationError(f"task {task_id} has no agent assigned")

    outcome = ExecutionOutcome()
    status_lock = threading.Lock()

    def transition(agent: AgentInstance, status: AgentStatus) -> None:
        if set_status is not None:
            with status_lock:
                set_status(agent.persona_id, status)

    for wave_index, wave in enumerate(compute_waves(plan)):
        emit(EventKind.WAVE_STARTED, {"wave": wave_index, "tasks": list(wave)})

        runnable: list[str] = []
        for task_id in wave:
            task = nodes[task_id]
            bad_deps = tuple(
                d for d in sorted(task.depends_on) if outcome.statuses.get(d) != STATUS_DONE
            )
            if task_id in pre_failed:
                _emit_start(emit, task, wave_index, None)
                failure = TaskFailure(reason=REASON_PERSONA, detail=pre_failed[task_id])
                _fail(emit, outcome, task, wave_index, None, failure, STATUS_FAILED)
            elif bad_deps:
                _emit_start(emit, task, wave_index, assignments.get(task_id))
                failure = TaskFailure(
                    reason=REASON_UPSTREAM,
                    detail=f"dependencies failed: {', '.join(bad_deps)}",
                    failed_dependencies=bad_deps,
                )
                _fail(
                    emit,
                    outcome,
                    task,
                    wave_index,
                    assignments.get(task_id),
                    failure,
                    STATUS_FAILED_UPSTREAM,
                )
            else:
                runnable.append(task_id)

        if not runnable:
            continue

        with ThreadPoolExecutor(max_workers=parallelism_cap) as pool:
            futures: dict[str, Future[PartialResult]] = {}
            for task_id in runnable:
                task = nodes[task_id]
                agent = assignments[task_id]
                context = route_context(task, nodes, outcome.results)
                transition(agent, AgentStatus.RUNNING)
                futures[task_id] = pool.submit(
                    _run_task, task, agent, context, gateway, retries
                )

            # Virtual schedule: at most `parallelism_cap` tasks are open in
            # the log at any point, starts backfill as completions release.
            for i in range(min(parallelism_cap, len(runnable))):
                _emit_start(emit, nodes[runnable[i]], wave_index, assignments[runnable[i]])
            for i, task_id in enumerate(runnable):
                task = nodes[task_id]
                agent = assignments[task_id]
                try:
                    result = futures[task_id].result()
                except _TaskError as exc:
                    transition(agent, AgentStatus.FAILED)
                    failure = TaskFailure(
                        reason=REASON_ERROR, detail=exc.detail, attempts=exc.attempts
                    )
                    _fail(emit, outcome, task, wave_index, agent, failure, STATUS_FAILED)
                else:
                    transition(agent, AgentStatus.DONE)
                    outcome.results[task_id] = result
                    outcome.statuses[task_id] = STATUS_DONE
                    emit(
                        EventKind.TASK_COMPLETED,
                        {
                            "task_id": task_id,
                            "wave": wave_index,
                            "agent_id": agent.agent_id,
                            "result": result.to_doc(),
                        },
                    )
                nxt = i + parallelism_cap
                if nxt < len(runnable):
                    _emit_start(emit, nodes[runnable[nxt]], wave_index, assignments[runnable[nxt]])

    return outcome


def _emit_start(
    emit: EmitFn, task: TaskNode, wave_index: int, agent: AgentInstance | None
) -> None:
    emit(
        EventKind.TASK_STARTED,
        {
            "task_id": task.task_id,
            "wave": wave_index,
            "agent_id": agent.agent_id if agent else None,
            "inputs": sorted(task.depends_on),
        },
    )


def _fail(
    emit: EmitFn,
    outcome: ExecutionOutcome,
    task: TaskNode,
    wave_index: int,
    agent: AgentInstance | None,
    failure: TaskFailure,
    status: str,
) -> None:
    outcome.statuses[task.task_id] = status
    outcome.failures[task.task_id] = failure
    emit(
        EventKind.TASK_FAILED,
        {
            "task_id": task.task_id,
            "wave": wave_index,
            "agent_id": agent.agent_id if agent else None,
            "reason": failure.reason,
            "detail": failure.detail,
            "attempts": failure.attempts,
            "failed_dependencies": list(failure.failed_dependencies),
        },
    )


def _run_task(
    task: TaskNode,
    agent: AgentInstance,
    context: dict[str, tuple[str, str]],
    gateway: Gateway,
    retries: int,
) -> PartialResult:
    request = CompletionRequest(
        system=agent.rendered_system_prompt,
        prompt=prompts.task_prompt(task, context),
        tag=TAG_TASK,
    )
    last = "unknown error"
    for attempt in range(1, retries + 2):
        try:
            content = gateway.complete(request)
        except GatewayError as exc:
            last = str(exc)
            continue
        return PartialResult(
            task_id=task.task_id,
            agent_id=agent.agent_id,
            content=content,
            inputs_used=frozenset(context),
            completed_at=now_iso(),
            attempt=attempt,
        )
    raise _TaskError(last, attempts=retries + 1)
