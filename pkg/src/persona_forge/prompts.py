"""Prompt templates for every pipeline stage.

Templates are versioned: the version tag is baked into each rendered agent
prompt, so two personas built under different template revisions never
fingerprint-collide silently across upgrades.
"""

from __future__ import annotations

from .model import PersonaSpec, TaskNode, UserProfile, canonical_json

TEMPLATE_VERSION = "pf-v1"

_STYLE_DIRECTIVES = {
    "concise": "Answer briefly. Short sentences, no filler.",
    "detailed": "Answer thoroughly, covering relevant background and trade-offs.",
    "formal": "Use formal, professional prose.",
    "casual": "Use a relaxed, conversational tone.",
    "technical": "Use precise technical vocabulary; assume a practitioner reader.",
    "plain": "Use plain language; avoid jargon, define any term a layperson would not know.",
}


def style_directive(style: str) -> str:
    return _STYLE_DIRECTIVES[style]


def profile_system() -> str:
    return (
        "You analyze a user's query history to infer who they are. "
        "You output structured judgments only."
    )


def profile_prompt(query_text: str, prior_intent: str, history: list[str]) -> str:
    lines = ["Infer the user's intent and background from their queries."]
    if history:
        lines.append("Earlier queries this session:")
        lines.extend(f"- {q}" for q in history)
    if prior_intent:
        lines.append(f"Previously inferred intent: {prior_intent}")
    lines.append(f"Current query: {query_text}")
    return "\n".join(lines)


def decompose_system() -> str:
    return (
        "You are a planner. You break a request into discrete tasks with "
        "explicit dependencies, so independent tasks can run in parallel."
    )


def decompose_prompt(query_text: str, profile: UserProfile) -> str:
    return (
        "Break this request into tasks. Each task lists the ids of tasks whose "
        "output it needs; leave depends_on empty for independent work. Name the "
        "capabilities each task requires.\n"
        f"User intent: {profile.intent or 'unknown'}\n"
        f"Task familiarity: {profile.task_familiarity.value}\n"
        f"Request: {query_text}"
    )


def persona_system() -> str:
    return (
        "You design specialist personas for agents. Given a task, you describe "
        "the expert best suited to perform it."
    )


def persona_prompt(task: TaskNode, profile: UserProfile) -> str:
    caps = ", ".join(task.required_capabilities) or "general reasoning"
    return (
        "Design the specialist persona for this task.\n"
        f"Task {task.task_id}: {task.description}\n"
        f"Required capabilities: {caps}\n"
        f"Expected output: {task.expected_output or 'a useful written result'}\n"
        f"The end user prefers {profile.communication_style.value} communication."
    )


def agent_seed(role: str, competencies: tuple[str, ...], style: str, capabilities: tuple[str, ...]) -> str:
    """Canonical record of everything the rendered prompt is a function of."""
    return canonical_json(
        {
            "template_version": TEMPLATE_VERSION,
            "role": role,
            "competencies": list(competencies),
            "style": style,
            "capabilities": list(capabilities),
        }
    )


def render_agent_prompt(persona: PersonaSpec) -> str:
    competencies = "\n".join(f"- {c}" for c in persona.competencies) or "- general reasoning"
    capabilities = ", ".join(persona.capabilities) or "none declared"
    return (
        f"You are {persona.role}.\n"
        "Your competencies:\n"
        f"{competencies}\n"
        f"Capabilities at your disposal: {capabilities}.\n"
        f"{style_directive(persona.communication_style.value)}\n"
        "Complete the task you are given using only the inputs provided. "
        "If an input is missing, say so rather than inventing it.\n"
        f"[template {TEMPLATE_VERSION}]"
    )


def task_prompt(task: TaskNode, context: dict[str, tuple[str, str]]) -> str:
    """Render a task call; `context` maps dependency id to (description, content)."""
    lines = [f"Task {task.task_id}: {task.description}"]
    if task.expected_output:
        lines.append(f"Expected output: {task.expected_output}")
    for dep_id in sorted(context):
        desc, content = context[dep_id]
        lines.append(f"--- input {dep_id}: {desc} ---")
        lines.append(content)
    if context:
        lines.append("--- end of inputs ---")
    return "\n".join(lines)


def aggregate_system(style: str) -> str:
    return (
        "You compose the final answer to the user's request from completed "
        f"task results. {style_directive(style)}"
    )


def aggregate_prompt(query_text: str, parts: list[tuple[str, str]], notice: str = "") -> str:
    lines = [f"Original request: {query_text}", "Task results:"]
    for task_id, content in parts:
        lines.append(f"--- result {task_id} ---")
        lines.append(content)
    lines.append("--- end of results ---")
    if notice:
        lines.append(notice)
    lines.append("Write the final answer for the user.")
    return "\n".join(lines)
