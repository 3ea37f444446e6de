"""Shared domain types for the pipeline and the structural checks on task plans.

Every type here is an immutable value object; stages communicate by
constructing new values, never by mutating shared state. The one deliberately
mutable collection is :class:`PersonaPool`, which is owned and serialized by a
single session. The canonical serialized form of every type is a plain JSON
document using exactly the field names defined here.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from typing import Any, Iterable, Iterator

Doc = dict[str, Any]

_TASK_ID_JUNK = re.compile(r"[^a-z0-9]+")


def canonical_json(doc: Any) -> str:
    """Stable JSON encoding: sorted keys, compact separators."""
    return json.dumps(doc, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def now_iso() -> str:
    return datetime.now(timezone.utc).isoformat()


def normalize_task_id(raw: str) -> str:
    """Map a decomposer-emitted identifier onto lowercase alphanumeric-plus-hyphen.

    Deterministic: non-alphanumeric runs collapse to single hyphens, outer
    hyphens are stripped, and an identifier with nothing left becomes "task".
    """
    slug = _TASK_ID_JUNK.sub("-", str(raw).strip().lower()).strip("-")
    return slug or "task"


def normalize_tag(raw: str) -> str:
    """Capability and competency tags compare case-insensitively after trimming."""
    return str(raw).strip().lower()


def normalize_tags(raw: Iterable[str]) -> tuple[str, ...]:
    out: list[str] = []
    for item in raw:
        tag = normalize_tag(item)
        if tag and tag not in out:
            out.append(tag)
    return tuple(out)


class CommunicationStyle(str, Enum):
    CONCISE = "concise"
    DETAILED = "detailed"
    FORMAL = "formal"
    CASUAL = "casual"
    TECHNICAL = "technical"
    PLAIN = "plain"


class ExpertiseLevel(str, Enum):
    NOVICE = "novice"
    INTERMEDIATE = "intermediate"
    EXPERT = "expert"


class TaskFamiliarity(str, Enum):
    LOW = "low"
    MEDIUM = "medium"
    HIGH = "high"


class AgentStatus(str, Enum):
    IDLE = "idle"
    RUNNING = "running"
    DONE = "done"
    FAILED = "failed"


class EventKind(str, Enum):
    QUERY_RECEIVED = "query_received"
    PROFILE_UPDATED = "profile_updated"
    PLAN_READY = "plan_ready"
    PERSONA_CREATED = "persona_created"
    PERSONA_REUSED = "persona_reused"
    AGENT_SPAWNED = "agent_spawned"
    WAVE_STARTED = "wave_started"
    TASK_STARTED = "task_started"
    TASK_COMPLETED = "task_completed"
    TASK_FAILED = "task_failed"
    RESPONSE_READY = "response_ready"


@dataclass(frozen=True)
class Query:
    id: str
    session_id: str
    text: str
    submitted_at: str

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise ValueError("query text must be non-empty")

    def to_doc(self) -> Doc:
        return {
            "id": self.id,
            "session_id": self.session_id,
            "text": self.text,
            "submitted_at": self.submitted_at,
        }


def query_from_doc(doc: Doc) -> Query:
    return Query(
        id=doc["id"],
        session_id=doc["session_id"],
        text=doc["text"],
        submitted_at=doc.get("submitted_at", ""),
    )


@dataclass(frozen=True)
class DomainSkill:
    domain: str
    level: ExpertiseLevel

    def to_doc(self) -> Doc:
        return {"domain": self.domain, "level": self.level.value}


@dataclass(frozen=True)
class UserProfile:
    """Symbolic representation of the user built from query signals.

    `explicit_signals` holds verbatim substrings of session queries; they are
    the strongest evidence tier and are never dropped once observed.
    """

    domain_expertise: tuple[DomainSkill, ...]
    communication_style: CommunicationStyle
    task_familiarity: TaskFamiliarity
    intent: str
    explicit_signals: tuple[str, ...]
    confidence: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence must be in [0,1], got {self.confidence}")

    def to_doc(self) -> Doc:
        return {
            "domain_expertise": [s.to_doc() for s in self.domain_expertise],
            "communication_style": self.communication_style.value,
            "task_familiarity": self.task_familiarity.value,
            "intent": self.intent,
            "explicit_signals": list(self.explicit_signals),
            "confidence": self.confidence,
        }


def default_profile() -> UserProfile:
    return UserProfile(
        domain_expertise=(),
        communication_style=CommunicationStyle.DETAILED,
        task_familiarity=TaskFamiliarity.MEDIUM,
        intent="",
        explicit_signals=(),
        confidence=0.0,
    )


def profile_from_doc(doc: Doc) -> UserProfile:
    return UserProfile(
        domain_expertise=tuple(
            DomainSkill(domain=d["domain"], level=ExpertiseLevel(d["level"]))
            for d in doc.get("domain_expertise", [])
        ),
        communication_style=CommunicationStyle(doc["communication_style"]),
        task_familiarity=TaskFamiliarity(doc["task_familiarity"]),
        intent=doc.get("intent", ""),
        explicit_signals=tuple(doc.get("explicit_signals", [])),
        confidence=float(doc.get("confidence", 0.0)),
    )


@dataclass(frozen=True)
class TaskNode:
    """One discrete task; `depends_on` names the tasks whose output it needs.

    Values that violate plan invariants (self-loops, dangling references) are
    representable on purpose: `validate_plan` reports them as data.
    """

    task_id: str
    description: str
    depends_on: frozenset[str]
    required_capabilities: tuple[str, ...] = ()
    expected_output: str = ""

    def to_doc(self) -> Doc:
        return {
            "task_id": self.task_id,
            "description": self.description,
            "depends_on": sorted(self.depends_on),
            "required_capabilities": list(self.required_capabilities),
            "expected_output": self.expected_output,
        }


def node_from_doc(doc: Doc) -> TaskNode:
    return TaskNode(
        task_id=doc["task_id"],
        description=doc.get("description", ""),
        depends_on=frozenset(doc.get("depends_on", [])),
        required_capabilities=tuple(doc.get("required_capabilities", [])),
        expected_output=doc.get("expected_output", ""),
    )


@dataclass(frozen=True)
class TaskPlan:
    plan_id: str
    query_id: str
    nodes: tuple[TaskNode, ...]

    def nodes_by_id(self) -> dict[str, TaskNode]:
        return {n.task_id: n for n in self.nodes}

    def to_doc(self) -> Doc:
        return {
            "plan_id": self.plan_id,
            "query_id": self.query_id,
            "nodes": [n.to_doc() for n in self.nodes],
        }


def plan_from_doc(doc: Doc) -> TaskPlan:
    return TaskPlan(
        plan_id=doc["plan_id"],
        query_id=doc["query_id"],
        nodes=tuple(node_from_doc(n) for n in doc.get("nodes", [])),
    )


@dataclass(frozen=True)
class PersonaSpec:
    """Structured persona: the conditioning contract an agent is built from."""

    persona_id: str
    role: str
    competencies: tuple[str, ...]
    communication_style: CommunicationStyle
    capabilities: tuple[str, ...]
    system_prompt_seed: str
    created_for_task: str
    reused: bool = False

    def __post_init__(self) -> None:
        if not self.role.strip():
            raise ValueError("persona role must be non-empty")

    def to_doc(self) -> Doc:
        return {
            "persona_id": self.persona_id,
            "role": self.role,
            "competencies": list(self.competencies),
            "communication_style": self.communication_style.value,
            "capabilities": list(self.capabilities),
            "system_prompt_seed": self.system_prompt_seed,
            "created_for_task": self.created_for_task,
            "reused": self.reused,
        }


def persona_from_doc(doc: Doc) -> PersonaSpec:
    return PersonaSpec(
        persona_id=doc["persona_id"],
        role=doc["role"],
        competencies=tuple(doc.get("competencies", [])),
        communication_style=CommunicationStyle(doc["communication_style"]),
        capabilities=tuple(doc.get("capabilities", [])),
        system_prompt_seed=doc.get("system_prompt_seed", ""),
        created_for_task=doc.get("created_for_task", ""),
        reused=bool(doc.get("reused", False)),
    )


@dataclass
class PersonaPool:
    """Session-scoped, deduplicated persona collection; grows monotonically.

    The fingerprint index is derived state: rebuilding a pool from its
    serialized form recomputes it entry by entry via the caller.
    """

    session_id: str
    personas: list[PersonaSpec] = field(default_factory=list)
    _by_fingerprint: dict[str, str] = field(default_factory=dict, repr=False)

    @property
    def fingerprints(self) -> frozenset[str]:
        return frozenset(self._by_fingerprint)

    def find(self, fingerprint: str) -> PersonaSpec | None:
        persona_id = self._by_fingerprint.get(fingerprint)
        if persona_id is None:
            return None
        return next(p for p in self.personas if p.persona_id == persona_id)

    def add(self, spec: PersonaSpec, fingerprint: str) -> None:
        if fingerprint in self._by_fingerprint:
            raise ValueError(f"fingerprint already pooled: {fingerprint}")
        self.personas.append(spec)
        self._by_fingerprint[fingerprint] = spec.persona_id

    def to_doc(self) -> Doc:
        return {
            "session_id": self.session_id,
            "personas": [p.to_doc() for p in self.personas],
            "fingerprints": sorted(self._by_fingerprint),
        }


@dataclass(frozen=True)
class AgentInstance:
    agent_id: str
    persona_id: str
    rendered_system_prompt: str
    backend_ref: str
    status: AgentStatus = AgentStatus.IDLE

    def to_doc(self) -> Doc:
        return {
            "agent_id": self.agent_id,
            "persona_id": self.persona_id,
            "rendered_system_prompt": self.rendered_system_prompt,
            "backend_ref": self.backend_ref,
            "status": self.status.value,
        }


def agent_from_doc(doc: Doc) -> AgentInstance:
    return AgentInstance(
        agent_id=doc["agent_id"],
        persona_id=doc["persona_id"],
        rendered_system_prompt=doc["rendered_system_prompt"],
        backend_ref=doc.get("backend_ref", ""),
        status=AgentStatus(doc.get("status", "idle")),
    )


@dataclass(frozen=True)
class PartialResult:
    task_id: str
    agent_id: str
    content: str
    inputs_used: frozenset[str]
    completed_at: str
    attempt: int = 1

    def to_doc(self) -> Doc:
        return {
            "task_id": self.task_id,
            "agent_id": self.agent_id,
            "content": self.content,
            "inputs_used": sorted(self.inputs_used),
            "completed_at": self.completed_at,
            "attempt": self.attempt,
        }


def result_from_doc(doc: Doc) -> PartialResult:
    return PartialResult(
        task_id=doc["task_id"],
        agent_id=doc["agent_id"],
        content=doc["content"],
        inputs_used=frozenset(doc.get("inputs_used", [])),
        completed_at=doc.get("completed_at", ""),
        attempt=int(doc.get("attempt", 1)),
    )


@dataclass(frozen=True)
class FinalResponse:
    query_id: str
    content: str
    source_results: frozenset[str]
    style_applied: CommunicationStyle

    def to_doc(self) -> Doc:
        return {
            "query_id": self.query_id,
            "content": self.content,
            "source_results": sorted(self.source_results),
            "style_applied": self.style_applied.value,
        }


def response_from_doc(doc: Doc) -> FinalResponse:
    return FinalResponse(
        query_id=doc["query_id"],
        content=doc["content"],
        source_results=frozenset(doc.get("source_results", [])),
        style_applied=CommunicationStyle(doc.get("style_applied", "detailed")),
    )


@dataclass(frozen=True)
class PipelineEvent:
    seq: int
    kind: EventKind
    payload: Doc
    at: str

    def to_doc(self) -> Doc:
        return {"seq": self.seq, "kind": self.kind.value, "payload": self.payload, "at": self.at}


def event_from_doc(doc: Doc) -> PipelineEvent:
    return PipelineEvent(
        seq=int(doc["seq"]),
        kind=EventKind(doc["kind"]),
        payload=doc.get("payload", {}),
        at=doc.get("at", ""),
    )


# --- structural checks -------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    rule: str
    task_ids: tuple[str, ...]
    message: str


def validate_plan(plan: TaskPlan) -> list[Violation]:
    """Check every plan invariant; an empty list means the plan is valid.

    Total function: malformed plans produce violations as data, never raise.
    """
    violations: list[Violation] = []
    if not plan.nodes:
        return [Violation("empty-plan", (), "plan has no tasks")]

    ids = [n.task_id for n in plan.nodes]
    known = set(ids)
    seen: set[str] = set()
    for task_id in ids:
        if task_id in seen:
            violations.append(
                Violation("duplicate-id", (task_id,), f"duplicate task_id {task_id}")
            )
        seen.add(task_id)

    deps_by_id: dict[str, set[str]] = {i: set() for i in known}
    for node in plan.nodes:
        for dep in sorted(node.depends_on):
            if dep == node.task_id:
                violations.append(
                    Violation("self-loop", (node.task_id,), f"self-loop {node.task_id}")
                )
            elif dep not in known:
                violations.append(
                    Violation(
                        "unknown-dependency",
                        (node.task_id, dep),
                        f"unknown dependency {dep} (task {node.task_id})",
                    )
                )
            else:
                deps_by_id[node.task_id].add(dep)

    for members in _strongly_connected_cycles(deps_by_id):
        violations.append(
            Violation("cycle", members, f"cycle: [{','.join(members)}]")
        )
    return violations


def plan_is_valid(plan: TaskPlan) -> bool:
    return not validate_plan(plan)


def sink_nodes(plan: TaskPlan) -> set[str]:
    """Tasks no other task depends on; these feed final aggregation."""
    known = {n.task_id for n in plan.nodes}
    consumed: set[str] = set()
    for node in plan.nodes:
        consumed |= node.depends_on & known
    return known - consumed


def _strongly_connected_cycles(adj: dict[str, set[str]]) -> list[tuple[str, ...]]:
    """Components of size > 1 under Tarjan's algorithm, deterministically ordered.

    `adj` maps a node to its dependency set; SCC membership is direction
    agnostic, so dependency edges serve directly.
    """
    index: dict[str, int] = {}
    low: dict[str, int] = {}
    on_stack: set[str] = set()
    stack: list[str] = []
    counter = 0
    components: list[tuple[str, ...]] = []

    for root in sorted(adj):
        if root in index:
            continue
        index[root] = low[root] = counter
        counter += 1
        stack.append(root)
        on_stack.add(root)
        work: list[tuple[str, Iterator[str]]] = [(root, iter(sorted(adj[root])))]
        while work:
            node, neighbours = work[-1]
            pushed = False
            for nxt in neighbours:
                if nxt not in index:
                    index[nxt] = low[nxt] = counter
                    counter += 1
                    stack.append(nxt)
                    on_stack.add(nxt)
                    work.append((nxt, iter(sorted(adj[nxt]))))
                    pushed = True
                    break
                if nxt in on_stack:
                    low[node] = min(low[node], index[nxt])
            if pushed:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[node])
            if low[node] == index[node]:
                component: list[str] = []
                while True:
                    member = stack.pop()
                    on_stack.discard(member)
                    component.append(member)
                    if member == node:
                        break
                if len(component) > 1:
                    components.append(tuple(sorted(component)))
    return sorted(components)
