"""Wave layering, input routing, and wave-barrier execution."""

from __future__ import annotations

import random
import threading

import pytest
from conftest import EchoBackend, FailTasksBackend, FnBackend, gateway_for, plan_of
from oracles import (
    levels_by_enumeration,
    levels_by_relaxation,
    propagation_oracle,
    verify_schedule,
)

from persona_forge.foundry import EmitFn
from persona_forge.gateway import CompletionRequest, FixtureMissError
from persona_forge.model import AgentInstance, AgentStatus, EventKind, TaskPlan
from persona_forge.orchestrator import (
    REASON_ERROR,
    REASON_PERSONA,
    REASON_UPSTREAM,
    STATUS_DONE,
    STATUS_FAILED,
    STATUS_FAILED_UPSTREAM,
    OrchestrationError,
    compute_waves,
    execute_plan,
    route_context,
    route_inputs,
)


def agents_for(plan: TaskPlan) -> dict[str, AgentInstance]:
    return {
        n.task_id: AgentInstance(
            agent_id=f"a-{i + 1:03d}",
            persona_id=f"p-{i + 1:03d}",
            rendered_system_prompt=f"You handle {n.task_id}.",
            backend_ref="scripted:test",
        )
        for i, n in enumerate(plan.nodes)
    }


class Recorder:
    def __init__(self):
        self.events: list[dict] = []
        self._lock = threading.Lock()

    def __call__(self, kind: EventKind, payload: dict) -> None:
        with self._lock:
            self.events.append({"kind": kind.value, "payload": payload})

    def kinds(self):
        return [e["kind"] for e in self.events]


def run(plan: TaskPlan, backend=None, cap: int = 4, retries: int = 1, pre_failed=None):
    recorder = Recorder()
    outcome = execute_plan(
        plan,
        agents_for(plan),
        gateway_for(backend or EchoBackend(), cap=cap),
        recorder,
        parallelism_cap=cap,
        retries=retries,
        pre_failed=pre_failed,
    )
    return outcome, recorder


def random_plan(rng: random.Random, n: int, density: float) -> TaskPlan:
    ids = [f"t{i:02d}" for i in range(n)]
    nodes = {}
    for i, t in enumerate(ids):
        deps = {ids[j] for j in range(i) if rng.random() < density}
        nodes[t] = deps
    return plan_of(nodes)


# --- compute_waves -----------------------------------------------------------------


def test_waves_linear_chain():
    plan = plan_of({"a": set(), "b": {"a"}, "c": {"b"}})
    assert compute_waves(plan) == [["a"], ["b"], ["c"]]


def test_waves_diamond():
    plan = plan_of({"a": set(), "b": {"a"}, "c": {"a"}, "d": {"b", "c"}})
    assert compute_waves(plan) == [["a"], ["b", "c"], ["d"]]


def test_waves_longest_chain_wins():
    # d depends on both a (level 0) and c (level 1): it sits at level 2.
    plan = plan_of({"a": set(), "b": set(), "c": {"b"}, "d": {"a", "c"}})
    assert compute_waves(plan) == [["a", "b"], ["c"], ["d"]]


def test_waves_lexicographic_within_wave():
    plan = plan_of({"zeta": set(), "alpha": set(), "mid": set()})
    assert compute_waves(plan) == [["alpha", "mid", "zeta"]]


def test_waves_cycle_raises():
    plan = plan_of({"a": {"b"}, "b": {"a"}})
    with pytest.raises(OrchestrationError):
        compute_waves(plan)


def test_waves_match_both_oracles_small():
    rng = random.Random(7)
    for _ in range(100):
        plan = random_plan(rng, rng.randrange(1, 13), rng.random() * 0.5)
        waves = compute_waves(plan)
        deps = {n.task_id: set(n.depends_on) for n in plan.nodes}
        exhaustive = levels_by_enumeration(deps)
        relaxed = levels_by_relaxation(deps)
        assert exhaustive == relaxed
        for level, wave in enumerate(waves):
            for t in wave:
                assert exhaustive[t] == level, plan.to_doc()
        assert sorted(t for w in waves for t in w) == sorted(deps)


# --- routing -------------------------------------------------------------------------


def _results_for(plan: TaskPlan, ids: list[str]):
    from persona_forge.model import PartialResult

    return {
        t: PartialResult(t, "a-001", f"output of {t}", frozenset(), "", 1) for t in ids
    }


def test_route_context_includes_exactly_dependencies():
    plan = plan_of({"a": set(), "b": set(), "c": {"a"}})
    nodes = plan.nodes_by_id()
    results = _results_for(plan, ["a", "b"])
    context = route_context(nodes["c"], nodes, results)
    assert set(context) == {"a"}
    assert context["a"] == ("work on a", "output of a")


def test_route_context_missing_dependency_is_invariant_error():
    plan = plan_of({"a": set(), "b": {"a"}})
    nodes = plan.nodes_by_id()
    with pytest.raises(OrchestrationError, match="routed before"):
        route_context(nodes["b"], nodes, {})


def test_route_inputs_ordered_and_filtered():
    plan = plan_of({"b": set(), "a": set(), "c": {"a", "b"}, "d": {"c"}})
    results = _results_for(plan, ["a", "b"])
    routed = route_inputs(plan, results)
    assert list(routed) == ["a", "b", "c"]  # d omitted: c has no result yet
    assert set(routed["c"]) == {"a", "b"}
    assert routed["a"] == {}


# --- execution: happy path -------------------------------------------------------------


def test_execute_linear_plan_events_and_results():
    plan = plan_of({"a": set(), "b": {"a"}})
    outcome, recorder = run(plan)
    assert outcome.statuses == {"a": STATUS_DONE, "b": STATUS_DONE}
    assert outcome.all_done
    assert recorder.kinds() == [
        "wave_started",
        "task_started",
        "task_completed",
        "wave_started",
        "task_started",
        "task_completed",
    ]
    assert outcome.results["b"].inputs_used == {"a"}
    assert outcome.results["a"].attempt == 1


def test_execute_passes_dependency_content_downstream():
    seen: list[str] = []

    def fn(request: CompletionRequest) -> str:
        seen.append(request.prompt)
        return f"made for: {request.prompt.splitlines()[0]}"

    plan = plan_of({"a": set(), "b": {"a"}})
    run(plan, backend=FnBackend(fn))
    b_prompt = next(p for p in seen if p.startswith("Task b:"))
    assert "--- input a: work on a ---" in b_prompt
    assert "made for: Task a: work on a" in b_prompt


def test_execute_routes_only_declared_inputs():
    prompts: dict[str, str] = {}

    def fn(request: CompletionRequest) -> str:
        first = request.prompt.splitlines()[0]
        prompts[first.split()[1].rstrip(":")] = request.prompt
        return f"content::{first}"

    plan = plan_of({"a": set(), "b": set(), "c": {"a"}})
    outcome, _ = run(plan, backend=FnBackend(fn))
    assert outcome.all_done
    assert "content::Task a:" in prompts["c"]
    assert "content::Task b:" not in prompts["c"]  # b is not a dependency of c
    assert "--- input" not in prompts["a"]


def test_execute_log_satisfies_verifier_wide_wave():
    plan = plan_of({f"t{i}": set() for i in range(9)})
    outcome, recorder = run(plan, cap=3)
    assert outcome.all_done
    nodes = [n.to_doc() for n in plan.nodes]
    assert verify_schedule(nodes, recorder.events, cap=3) == []


def test_execute_runs_wave_concurrently():
    barrier = threading.Barrier(3, timeout=5)

    def fn(request: CompletionRequest) -> str:
        barrier.wait()  # deadlocks unless all three run simultaneously
        return "ok"

    plan = plan_of({"a": set(), "b": set(), "c": set()})
    outcome, _ = run(plan, backend=FnBackend(fn), cap=3)
    assert outcome.all_done


def test_execute_deterministic_event_order_despite_jitter():
    def make_fn():
        rng = random.Random()

        def fn(request: CompletionRequest) -> str:
            import time

            time.sleep(rng.uniform(0, 0.02))
            return "ok"

        return fn

    plan = plan_of({f"t{i}": set() for i in range(8)} | {"z": {"t0", "t3"}})
    logs = []
    for _ in range(3):
        _, recorder = run(plan, backend=FnBackend(make_fn()), cap=3)
        logs.append([(e["kind"], e["payload"].get("task_id")) for e in recorder.events])
    assert logs[0] == logs[1] == logs[2]


# --- execution: failure paths ------------------------------------------------------------


def test_failed_task_poisons_descendants_exactly():
    plan = plan_of(
        {
            "root": set(),
            "bad": {"root"},
            "child": {"bad"},
            "grandchild": {"child"},
            "bystander": {"root"},
        }
    )
    outcome, recorder = run(plan, backend=FailTasksBackend(EchoBackend(), {"bad"}))
    assert outcome.statuses["bad"] == STATUS_FAILED
    assert outcome.statuses["child"] == STATUS_FAILED_UPSTREAM
    assert outcome.statuses["grandchild"] == STATUS_FAILED_UPSTREAM
    assert outcome.statuses["root"] == STATUS_DONE
    assert outcome.statuses["bystander"] == STATUS_DONE

    deps = {n.task_id: set(n.depends_on) for n in plan.nodes}
    expected_poisoned = propagation_oracle(deps, {"bad"})
    actual_poisoned = {t for t, s in outcome.statuses.items() if s == STATUS_FAILED_UPSTREAM}
    assert actual_poisoned == expected_poisoned

    failed_events = [e for e in recorder.events if e["kind"] == "task_failed"]
    by_task = {e["payload"]["task_id"]: e["payload"] for e in failed_events}
    assert by_task["bad"]["reason"] == REASON_ERROR
    assert by_task["child"]["reason"] == REASON_UPSTREAM
    assert by_task["child"]["failed_dependencies"] == ["bad"]
    assert by_task["grandchild"]["failed_dependencies"] == ["child"]


def test_upstream_failed_task_never_calls_backend():
    calls: list[str] = []

    class Counting(FailTasksBackend):
        def complete(self, request: CompletionRequest) -> str:
            calls.append(request.prompt.splitlines()[0])
            return super().complete(request)

    plan = plan_of({"a": set(), "b": {"a"}, "c": {"b"}})
    run(plan, backend=Counting(EchoBackend(), {"a"}), retries=0)
    assert calls == ["Task a: work on a"]  # b and c were never attempted


def test_retry_succeeds_on_second_attempt():
    attempts = {"n": 0}

    def fn(request: CompletionRequest) -> str:
        attempts["n"] += 1
        if attempts["n"] == 1:
            raise FixtureMissError("first try fails")
        return "recovered"

    plan = plan_of({"only": set()})
    outcome, _ = run(plan, backend=FnBackend(fn), retries=1)
    assert outcome.statuses["only"] == STATUS_DONE
    assert outcome.results["only"].attempt == 2


def test_failure_records_attempt_count():
    plan = plan_of({"only": set()})
    outcome, recorder = run(plan, backend=FailTasksBackend(EchoBackend(), {"only"}), retries=1)
    assert outcome.statuses["only"] == STATUS_FAILED
    failed = [e for e in recorder.events if e["kind"] == "task_failed"]
    assert failed[0]["payload"]["attempts"] == 2
    assert outcome.failures["only"].attempts == 2


def test_pre_failed_task_fails_with_persona_reason():
    plan = plan_of({"a": set(), "b": {"a"}})
    agents = agents_for(plan)
    del agents["a"]
    recorder = Recorder()
    outcome = execute_plan(
        plan,
        agents,
        gateway_for(EchoBackend()),
        recorder,
        pre_failed={"a": "no persona could be crafted"},
    )
    assert outcome.statuses == {"a": STATUS_FAILED, "b": STATUS_FAILED_UPSTREAM}
    failed = [e["payload"] for e in recorder.events if e["kind"] == "task_failed"]
    assert failed[0]["reason"] == REASON_PERSONA
    assert failed[0]["agent_id"] is None
    # Started-then-failed, so the log still covers every task.
    nodes = [n.to_doc() for n in plan.nodes]
    assert verify_schedule(nodes, recorder.events, cap=4) == []


def test_missing_assignment_is_an_error():
    plan = plan_of({"a": set()})
    with pytest.raises(OrchestrationError, match="no agent assigned"):
        execute_plan(plan, {}, gateway_for(EchoBackend()), Recorder())


def test_agent_status_transitions():
    plan = plan_of({"a": set()})
    agents = agents_for(plan)
    transitions: list[tuple[str, str]] = []
    execute_plan(
        plan,
        agents,
        gateway_for(EchoBackend()),
        Recorder(),
        set_status=lambda pid, status: transitions.append((pid, status.value)),
    )
    assert transitions == [("p-001", "running"), ("p-001", "done")]


# --- randomized schedule validity -----------------------------------------------------


def test_random_dags_produce_valid_schedules():
    rng = random.Random(1234)
    for _ in range(30):
        plan = random_plan(rng, rng.randrange(1, 26), rng.random() * 0.3)
        cap = rng.choice([1, 2, 4])
        outcome, recorder = run(plan, cap=cap)
        assert outcome.all_done
        nodes = [n.to_doc() for n in plan.nodes]
        assert verify_schedule(nodes, recorder.events, cap=cap) == [], plan.to_doc()
