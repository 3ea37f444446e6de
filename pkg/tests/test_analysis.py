"""Profile encoding and task decomposition, including plan repair."""

from __future__ import annotations

import json
import random

import pytest
from conftest import FnBackend, gateway_for, plan_of
from oracles import plan_defects

from persona_forge.analysis import (
    AnalysisError,
    extract_explicit_signals,
    profile_encode,
    repair_plan,
    task_decompose,
)
from persona_forge.gateway import CompletionRequest
from persona_forge.model import (
    CommunicationStyle,
    DomainSkill,
    ExpertiseLevel,
    Query,
    TaskFamiliarity,
    TaskNode,
    TaskPlan,
    UserProfile,
    default_profile,
    validate_plan,
)


def q(text: str) -> Query:
    return Query(id="q-001", session_id="s-001", text=text, submitted_at="")


# --- explicit signals ------------------------------------------------------------


def test_signal_found_verbatim():
    signals = extract_explicit_signals("Compare them. Be brief.")
    assert [s.text for s in signals] == ["Be brief"]
    assert signals[0].field == "communication_style"
    assert signals[0].value == "concise"


def test_signals_ordered_by_position():
    signals = extract_explicit_signals("I'm new to this, explain it in plain language")
    assert [s.text for s in signals] == ["I'm new to", "plain language"]


def test_no_signals():
    assert extract_explicit_signals("what is a monad") == []


# --- profile encoding -------------------------------------------------------------


def _profile_backend(doc: dict):
    return FnBackend(lambda r: json.dumps(doc) if r.tag == "profile" else "?")


def test_profile_defaults_plus_inference():
    gateway = gateway_for(_profile_backend({"intent": "learn about x"}))
    out = profile_encode(gateway, q("tell me about x"), default_profile(), [])
    assert not out.degraded
    assert out.profile.intent == "learn about x"
    assert out.profile.communication_style is CommunicationStyle.DETAILED
    assert out.profile.task_familiarity is TaskFamiliarity.MEDIUM
    assert out.profile.confidence == pytest.approx(0.4)


def test_explicit_signal_outranks_inference():
    gateway = gateway_for(
        _profile_backend({"intent": "x", "communication_style": "formal"})
    )
    out = profile_encode(gateway, q("be brief about x"), default_profile(), [])
    assert out.profile.communication_style is CommunicationStyle.CONCISE
    assert out.profile.explicit_signals == ("be brief",)
    assert out.profile.confidence == pytest.approx(0.6)


def test_inference_outranks_prior():
    prior = default_profile()
    gateway = gateway_for(
        _profile_backend({"intent": "x", "task_familiarity": "high"})
    )
    out = profile_encode(gateway, q("next question"), prior, [])
    assert out.profile.task_familiarity is TaskFamiliarity.HIGH


def test_prior_style_sticks_without_new_evidence():
    prior = UserProfile(
        domain_expertise=(),
        communication_style=CommunicationStyle.CONCISE,
        task_familiarity=TaskFamiliarity.LOW,
        intent="old",
        explicit_signals=("be brief",),
        confidence=0.6,
    )
    gateway = gateway_for(_profile_backend({"intent": "new thing"}))
    out = profile_encode(gateway, q("another question"), prior, ["first question"])
    assert out.profile.communication_style is CommunicationStyle.CONCISE
    assert out.profile.task_familiarity is TaskFamiliarity.LOW
    assert out.profile.explicit_signals == ("be brief",)
    assert out.profile.intent == "new thing"


def test_signals_accumulate_across_queries():
    prior = default_profile()
    gateway = gateway_for(_profile_backend({"intent": "x"}))
    first = profile_encode(gateway, q("be brief please"), prior, []).profile
    second = profile_encode(gateway, q("now in plain language"), first, ["be brief please"]).profile
    assert second.explicit_signals == ("be brief", "plain language")
    assert second.communication_style is CommunicationStyle.PLAIN


def test_domain_expertise_merges_by_domain():
    prior = UserProfile(
        domain_expertise=(DomainSkill("rust", ExpertiseLevel.NOVICE),),
        communication_style=CommunicationStyle.DETAILED,
        task_familiarity=TaskFamiliarity.MEDIUM,
        intent="",
        explicit_signals=(),
        confidence=0.0,
    )
    gateway = gateway_for(
        _profile_backend(
            {
                "intent": "x",
                "domain_expertise": [
                    {"domain": "rust", "level": "intermediate"},
                    {"domain": "go", "level": "novice"},
                ],
            }
        )
    )
    out = profile_encode(gateway, q("question"), prior, [])
    skills = {s.domain: s.level for s in out.profile.domain_expertise}
    assert skills == {"rust": ExpertiseLevel.INTERMEDIATE, "go": ExpertiseLevel.NOVICE}
    # Deterministic ordering by domain name.
    assert [s.domain for s in out.profile.domain_expertise] == ["go", "rust"]


def test_degraded_profile_still_merges_signals():
    def fn(request: CompletionRequest) -> str:
        return "total garbage, no json"

    out = profile_encode(gateway_for(FnBackend(fn)), q("be brief: what is go"), default_profile(), [])
    assert out.degraded
    assert out.profile.intent == "be brief: what is go"
    assert out.profile.confidence == 0.0
    assert out.profile.communication_style is CommunicationStyle.CONCISE


def test_confidence_caps_at_one():
    text = "be brief, no jargon, plain language, step by step, i'm new to this"
    gateway = gateway_for(_profile_backend({"intent": "x"}))
    out = profile_encode(gateway, q(text), default_profile(), [])
    assert out.profile.confidence == 1.0


def test_profile_prompt_includes_history():
    prompts: list[str] = []

    def fn(request: CompletionRequest) -> str:
        prompts.append(request.prompt)
        return '{"intent": "x"}'

    profile_encode(gateway_for(FnBackend(fn)), q("second"), default_profile(), ["first thing"])
    assert "first thing" in prompts[0]
    assert "Current query: second" in prompts[0]


# --- task decomposition --------------------------------------------------------------


def _decompose_backend(tasks):
    def fn(request: CompletionRequest) -> str:
        assert request.tag == "decompose"
        return json.dumps({"tasks": tasks})

    return gateway_for(FnBackend(fn))


def test_decompose_builds_normalized_plan():
    gateway = _decompose_backend(
        [
            {"task_id": "Gather Facts!", "description": "gather", "required_capabilities": ["Search", "search"]},
            {"task_id": "write up", "description": "write", "depends_on": ["Gather Facts!"]},
        ]
    )
    out = task_decompose(gateway, q("do a thing"), default_profile(), plan_id="pl-001")
    ids = [n.task_id for n in out.plan.nodes]
    assert ids == ["gather-facts", "write-up"]
    assert out.plan.nodes[1].depends_on == {"gather-facts"}
    assert out.plan.nodes[0].required_capabilities == ("search",)
    assert out.plan.plan_id == "pl-001"
    assert out.plan.query_id == "q-001"
    assert not out.plan_repair
    assert validate_plan(out.plan) == []


def test_decompose_repairs_broken_plan():
    gateway = _decompose_backend(
        [
            {"task_id": "a", "description": "x", "depends_on": ["ghost", "b"]},
            {"task_id": "b", "description": "x", "depends_on": ["a"]},
        ]
    )
    out = task_decompose(gateway, q("do"), default_profile(), plan_id="pl-001")
    assert out.plan_repair
    assert validate_plan(out.plan) == []
    by_id = out.plan.nodes_by_id()
    assert by_id["a"].depends_on == {"b"}
    assert by_id["b"].depends_on == frozenset()


def test_decompose_unusable_output_raises():
    def fn(request: CompletionRequest) -> str:
        return "not json, ever"

    with pytest.raises(AnalysisError, match="decomposition failed"):
        task_decompose(gateway_for(FnBackend(fn)), q("do"), default_profile(), plan_id="pl-001")


def test_decompose_empty_task_list_raises():
    def fn(request: CompletionRequest) -> str:
        return '{"tasks": []}'

    with pytest.raises(AnalysisError):
        task_decompose(gateway_for(FnBackend(fn)), q("do"), default_profile(), plan_id="pl-001")


# --- repair rules ----------------------------------------------------------------------


def test_repair_drops_unknown_and_self_deps():
    plan = plan_of({"a": {"ghost", "a", "b"}, "b": set()})
    fixed = repair_plan(plan)
    assert fixed.nodes_by_id()["a"].depends_on == {"b"}


def test_repair_renames_duplicates_and_keeps_first():
    plan = TaskPlan(
        plan_id="p",
        query_id="q",
        nodes=(
            TaskNode("dup", "first", frozenset()),
            TaskNode("dup", "second", frozenset()),
            TaskNode("dup", "third", frozenset()),
            TaskNode("user", "references dup", frozenset({"dup"})),
        ),
    )
    fixed = repair_plan(plan)
    ids = [n.task_id for n in fixed.nodes]
    assert ids == ["dup", "dup-2", "dup-3", "user"]
    assert fixed.nodes_by_id()["user"].depends_on == {"dup"}
    assert fixed.nodes_by_id()["dup"].description == "first"


def test_repair_breaks_two_cycle_deterministically():
    plan = plan_of({"a": {"b"}, "b": {"a"}})
    fixed = repair_plan(plan)
    by_id = fixed.nodes_by_id()
    # Walk starts at a, so the edge found pointing back into the walk is b->a.
    assert by_id["a"].depends_on == {"b"}
    assert by_id["b"].depends_on == frozenset()


def test_repair_breaks_longer_cycle_minimally():
    plan = plan_of({"a": {"c"}, "b": {"a"}, "c": {"b"}})
    fixed = repair_plan(plan)
    assert validate_plan(fixed) == []
    kept = sum(len(n.depends_on) for n in fixed.nodes)
    assert kept == 2  # exactly one edge removed


def test_repair_preserves_valid_plans():
    plan = plan_of({"a": set(), "b": {"a"}, "c": {"a", "b"}})
    assert repair_plan(plan) == plan


def test_repair_is_idempotent_on_fuzzed_plans():
    rng = random.Random(4242)
    for _ in range(200):
        ids = [f"t{i}" for i in range(rng.randrange(1, 7))]
        nodes = []
        for i in ids:
            pool = ids + ["ghost", i]
            deps = set(rng.sample(pool, k=rng.randrange(0, len(pool))))
            nodes.append(TaskNode(i, "d", frozenset(deps)))
        if rng.random() < 0.3:
            nodes.append(nodes[0])
        plan = TaskPlan(plan_id="p", query_id="q", nodes=tuple(nodes))
        once = repair_plan(plan)
        assert validate_plan(once) == [], plan
        assert repair_plan(once) == once
        docs = [n.to_doc() for n in once.nodes]
        assert plan_defects(docs) == set()
