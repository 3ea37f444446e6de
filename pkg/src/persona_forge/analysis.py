"""Query analysis: profile encoding and task decomposition.

Profile encoding layers evidence by strength: explicit phrases in the query
outrank model inference, which outranks the prior session profile, which
outranks defaults. Decomposition asks the model for a task graph and then
repairs structural damage deterministically rather than re-rolling.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import prompts
from .gateway import (
    TAG_DECOMPOSE,
    TAG_PROFILE,
    CompletionRequest,
    Gateway,
    GatewayError,
)
from .model import (
    CommunicationStyle,
    Doc,
    DomainSkill,
    ExpertiseLevel,
    Query,
    TaskFamiliarity,
    TaskNode,
    TaskPlan,
    UserProfile,
    normalize_tags,
    normalize_task_id,
    validate_plan,
)


class AnalysisError(Exception):
    """A stage produced output that could not be used or repaired."""


@dataclass(frozen=True)
class Signal:
    """An explicit preference phrase found verbatim in the query."""

    text: str
    field: str
    value: str


# Ordered: earlier entries win when phrases overlap in the text. Matching is
# case-insensitive, but the slice stored on the profile is verbatim.
SIGNAL_RULES: tuple[tuple[str, str, str], ...] = (
    ("be brief", "communication_style", "concise"),
    ("keep it short", "communication_style", "concise"),
    ("short answer", "communication_style", "concise"),
    ("in detail", "communication_style", "detailed"),
    ("step by step", "communication_style", "detailed"),
    ("plain language", "communication_style", "plain"),
    ("plain english", "communication_style", "plain"),
    ("no jargon", "communication_style", "plain"),
    ("formal tone", "communication_style", "formal"),
    ("keep it casual", "communication_style", "casual"),
    ("casual tone", "communication_style", "casual"),
    ("get technical", "communication_style", "technical"),
    ("technical depth", "communication_style", "technical"),
    ("explain like i'm a beginner", "task_familiarity", "low"),
    ("i'm new to", "task_familiarity", "low"),
    ("i am new to", "task_familiarity", "low"),
    ("never done this before", "task_familiarity", "low"),
    ("i know this area well", "task_familiarity", "high"),
    ("i'm experienced with", "task_familiarity", "high"),
    ("i am experienced with", "task_familiarity", "high"),
)


def extract_explicit_signals(text: str) -> list[Signal]:
    """Find lexicon phrases in the query, ordered by position of occurrence."""
    lowered = text.lower()
    found: list[tuple[int, Signal]] = []
    for phrase, fld, value in SIGNAL_RULES:
        at = lowered.find(phrase)
        if at >= 0:
            found.append((at, Signal(text=text[at : at + len(phrase)], field=fld, value=value)))
    found.sort(key=lambda pair: pair[0])
    out: list[Signal] = []
    for _, sig in found:
        if sig.text not in [s.text for s in out]:
            out.append(sig)
    return out


PROFILE_SCHEMA: Doc = {
    "type": "object",
    "required": ["intent"],
    "properties": {
        "intent": {"type": "string", "minLength": 1},
        "domain_expertise": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["domain", "level"],
                "properties": {
                    "domain": {"type": "string", "minLength": 1},
                    "level": {"enum": ["novice", "intermediate", "expert"]},
                },
            },
        },
        "communication_style": {
            "enum": ["concise", "detailed", "formal", "casual", "technical", "plain"]
        },
        "task_familiarity": {"enum": ["low", "medium", "high"]},
    },
}


@dataclass(frozen=True)
class ProfileOutcome:
    profile: UserProfile
    degraded: bool


def profile_encode(
    gateway: Gateway,
    query: Query,
    prior: UserProfile,
    history: list[str],
) -> ProfileOutcome:
    """Fold one query into the session profile.

    Model inference failing is survivable: explicit signals and the prior
    still apply, intent falls back to the raw query text, and confidence
    drops to zero so downstream consumers can see the profile is weak.
    """
    signals = extract_explicit_signals(query.text)

    inferred: Doc | None = None
    try:
        result = gateway.complete_structured(
            CompletionRequest(
                system=prompts.profile_system(),
                prompt=prompts.profile_prompt(query.text, prior.intent, history),
                tag=TAG_PROFILE,
            ),
            PROFILE_SCHEMA,
        )
        inferred = result.doc
    except GatewayError:
        inferred = None

    style = prior.communication_style
    familiarity = prior.task_familiarity
    if inferred is not None:
        if "communication_style" in inferred:
            style = CommunicationStyle(inferred["communication_style"])
        if "task_familiarity" in inferred:
            familiarity = TaskFamiliarity(inferred["task_familiarity"])
    # Explicit phrases outrank inference; the last phrase in the query wins.
    for sig in signals:
        if sig.field == "communication_style":
            style = CommunicationStyle(sig.value)
        elif sig.field == "task_familiarity":
            familiarity = TaskFamiliarity(sig.value)

    skills = {s.domain: s for s in prior.domain_expertise}
    if inferred is not None:
        for entry in inferred.get("domain_expertise", []):
            skills[entry["domain"]] = DomainSkill(
                domain=entry["domain"], level=ExpertiseLevel(entry["level"])
            )

    merged_signals = list(prior.explicit_signals)
    for sig in signals:
        if sig.text not in merged_signals:
            merged_signals.append(sig.text)

    if inferred is None:
        intent = query.text
        confidence = 0.0
    else:
        intent = inferred["intent"]
        confidence = min(1.0, round(0.2 * (len(merged_signals) + 2), 2))

    profile = UserProfile(
        domain_expertise=tuple(sorted(skills.values(), key=lambda s: s.domain)),
        communication_style=style,
        task_familiarity=familiarity,
        intent=intent,
        explicit_signals=tuple(merged_signals),
        confidence=confidence,
    )
    return ProfileOutcome(profile=profile, degraded=inferred is None)


PLAN_SCHEMA: Doc = {
    "type": "object",
    "required": ["tasks"],
    "properties": {
        "tasks": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["task_id", "description"],
                "properties": {
                    "task_id": {"type": "string", "minLength": 1},
                    "description": {"type": "string", "minLength": 1},
                    "depends_on": {"type": "array", "items": {"type": "string"}},
                    "required_capabilities": {"type": "array", "items": {"type": "string"}},
                    "expected_output": {"type": "string"},
                },
            },
        }
    },
}


@dataclass(frozen=True)
class DecomposeOutcome:
    plan: TaskPlan
    structured_repair: bool
    plan_repair: bool


def task_decompose(
    gateway: Gateway,
    query: Query,
    profile: UserProfile,
    plan_id: str,
) -> DecomposeOutcome:
    try:
        result = gateway.complete_structured(
            CompletionRequest(
                system=prompts.decompose_system(),
                prompt=prompts.decompose_prompt(query.text, profile),
                tag=TAG_DECOMPOSE,
            ),
            PLAN_SCHEMA,
        )
    except GatewayError as exc:
        raise AnalysisError(f"decomposition failed: {exc}") from exc

    nodes = tuple(_node_from_entry(entry) for entry in result.doc["tasks"])
    plan = TaskPlan(plan_id=plan_id, query_id=query.id, nodes=nodes)

    plan_repair = False
    if validate_plan(plan):
        plan = repair_plan(plan)
        plan_repair = True
        remaining = validate_plan(plan)
        if remaining:
            raise AnalysisError(
                "plan unusable after repair: " + "; ".join(v.message for v in remaining)
            )
    return DecomposeOutcome(plan=plan, structured_repair=result.repaired, plan_repair=plan_repair)


def _node_from_entry(entry: Doc) -> TaskNode:
    return TaskNode(
        task_id=normalize_task_id(entry["task_id"]),
        description=entry["description"],
        depends_on=frozenset(normalize_task_id(d) for d in entry.get("depends_on", [])),
        required_capabilities=normalize_tags(entry.get("required_capabilities", [])),
        expected_output=entry.get("expected_output", ""),
    )


def repair_plan(plan: TaskPlan) -> TaskPlan:
    """Deterministically fix a structurally broken plan.

    Three rules, applied in order:
      1. drop dependencies on ids not present in the plan (self-loops included);
      2. rename duplicate ids by suffixing -2, -3, ... in order of appearance;
         references keep pointing at the first occurrence, which keeps its id;
      3. break cycles by dropping the back edges of a depth-first walk over
         dependencies, roots and neighbours visited in sorted order.

    Idempotent: repairing a repaired plan changes nothing.
    """
    if not plan.nodes:
        return plan

    known = {n.task_id for n in plan.nodes}
    nodes = [
        TaskNode(
            task_id=n.task_id,
            description=n.description,
            depends_on=frozenset(d for d in n.depends_on if d in known and d != n.task_id),
            required_capabilities=n.required_capabilities,
            expected_output=n.expected_output,
        )
        for n in plan.nodes
    ]

    counts: dict[str, int] = {}
    renamed: list[TaskNode] = []
    for node in nodes:
        counts[node.task_id] = counts.get(node.task_id, 0) + 1
        if counts[node.task_id] == 1:
            renamed.append(node)
        else:
            renamed.append(
                TaskNode(
                    task_id=f"{node.task_id}-{counts[node.task_id]}",
                    description=node.description,
                    depends_on=node.depends_on,
                    required_capabilities=node.required_capabilities,
                    expected_output=node.expected_output,
                )
            )
    nodes = renamed

    drop = _back_edges({n.task_id: set(n.depends_on) for n in nodes})
    if drop:
        nodes = [
            TaskNode(
                task_id=n.task_id,
                description=n.description,
                depends_on=frozenset(d for d in n.depends_on if (n.task_id, d) not in drop),
                required_capabilities=n.required_capabilities,
                expected_output=n.expected_output,
            )
            for n in nodes
        ]
    return TaskPlan(plan_id=plan.plan_id, query_id=plan.query_id, nodes=tuple(nodes))


def _back_edges(deps: dict[str, set[str]]) -> set[tuple[str, str]]:
    """Back edges of a DFS over the dependency relation.

    Removing exactly these edges leaves the graph acyclic; visiting roots and
    dependency lists in sorted order makes the choice deterministic.
    """
    WHITE, GRAY, BLACK = 0, 1, 2
    color = {node: WHITE for node in deps}
    drop: set[tuple[str, str]] = set()

    for root in sorted(deps):
        if color[root] != WHITE:
            continue
        stack: list[tuple[str, list[str], int]] = [(root, sorted(deps[root]), 0)]
        color[root] = GRAY
        while stack:
            node, targets, i = stack.pop()
            advanced = False
            while i < len(targets):
                dep = targets[i]
                i += 1
                if color[dep] == GRAY:
                    drop.add((node, dep))
                elif color[dep] == WHITE:
                    color[dep] = GRAY
                    stack.append((node, targets, i))
                    stack.append((dep, sorted(deps[dep]), 0))
                    advanced = True
                    break
            if not advanced:
                color[node] = BLACK
    return drop
