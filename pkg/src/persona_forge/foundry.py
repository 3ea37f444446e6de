"""Persona synthesis and agent instantiation.

Personas are deduplicated by a semantic fingerprint, not by raw string
equality: role wording is tokenized and sorted, capability tags are
normalized, so "Systems Research Analyst" and "research analyst, systems"
collapse to one pool entry. The pool only ever grows within a session.
"""

from __future__ import annotations

import dataclasses
import hashlib
import re
import threading
from typing import Callable

from . import prompts
from .gateway import TAG_PERSONA, CompletionRequest, Gateway, GatewayError
from .model import (
    AgentInstance,
    AgentStatus,
    Doc,
    EventKind,
    PersonaPool,
    PersonaSpec,
    TaskNode,
    UserProfile,
    canonical_json,
    normalize_tags,
)

EmitFn = Callable[[EventKind, Doc], None]

_ROLE_TOKEN = re.compile(r"[a-z0-9]+")


class FoundryError(Exception):
    """Persona synthesis produced nothing usable for the task."""


def persona_fingerprint(role: str, capabilities: tuple[str, ...], style: str) -> str:
    """Semantic identity of a persona: order- and case-insensitive.

    Two crafted personas with the same role vocabulary, capability set, and
    communication style are the same persona regardless of wording order.
    """
    key = canonical_json(
        [
            sorted(_ROLE_TOKEN.findall(role.lower())),
            sorted(normalize_tags(capabilities)),
            style,
        ]
    )
    return hashlib.sha256(key.encode("utf-8")).hexdigest()


PERSONA_SCHEMA: Doc = {
    "type": "object",
    "required": ["role", "capabilities", "competencies"],
    "properties": {
        "role": {"type": "string", "minLength": 1},
        "capabilities": {"type": "array", "items": {"type": "string"}},
        "competencies": {"type": "array", "items": {"type": "string"}},
    },
}


class PersonaFoundry:
    """Crafts personas for tasks, reusing pooled ones on fingerprint match.

    The check-then-insert on the pool runs under a lock so concurrent craft
    calls can never race two copies of the same persona into the pool.
    """

    def __init__(self, gateway: Gateway, pool: PersonaPool, emit: EmitFn):
        self.gateway = gateway
        self.pool = pool
        self.emit = emit
        self._lock = threading.Lock()

    def craft(self, task: TaskNode, profile: UserProfile) -> PersonaSpec:
        doc = self._synthesize(task, profile)
        role = doc["role"].strip()
        capabilities = normalize_tags(doc["capabilities"])
        competencies = tuple(c.strip() for c in doc["competencies"] if c.strip())
        style = profile.communication_style

        fingerprint = persona_fingerprint(role, capabilities, style.value)
        with self._lock:
            existing = self.pool.find(fingerprint)
            if existing is not None:
                self.emit(
                    EventKind.PERSONA_REUSED,
                    {
                        "persona_id": existing.persona_id,
                        "fingerprint": fingerprint,
                        "task_id": task.task_id,
                    },
                )
                return dataclasses.replace(existing, reused=True)

            spec = PersonaSpec(
                persona_id=f"p-{len(self.pool.personas) + 1:03d}",
                role=role,
                competencies=competencies,
                communication_style=style,
                capabilities=capabilities,
                system_prompt_seed=prompts.agent_seed(role, competencies, style.value, capabilities),
                created_for_task=task.task_id,
                reused=False,
            )
            self.pool.add(spec, fingerprint)
        self.emit(
            EventKind.PERSONA_CREATED,
            {"persona": spec.to_doc(), "fingerprint": fingerprint, "task_id": task.task_id},
        )
        return spec

    def _synthesize(self, task: TaskNode, profile: UserProfile) -> Doc:
        base = CompletionRequest(
            system=prompts.persona_system(),
            prompt=prompts.persona_prompt(task, profile),
            tag=TAG_PERSONA,
        )
        try:
            doc = self.gateway.complete_structured(base, PERSONA_SCHEMA).doc
        except GatewayError as exc:
            raise FoundryError(f"persona synthesis failed for {task.task_id}: {exc}") from exc

        missing = self._missing_capabilities(task, doc)
        if not missing:
            return doc

        # One targeted retry naming the gap; a persona that cannot cover the
        # task's required capabilities is useless to assign.
        retry = CompletionRequest(
            system=base.system,
            prompt=(
                f"{base.prompt}\n\nYour previous persona omitted required capabilities: "
                f"{', '.join(sorted(missing))}. Include every required capability."
            ),
            tag=TAG_PERSONA,
        )
        try:
            doc = self.gateway.complete_structured(retry, PERSONA_SCHEMA).doc
        except GatewayError as exc:
            raise FoundryError(f"persona synthesis failed for {task.task_id}: {exc}") from exc
        missing = self._missing_capabilities(task, doc)
        if missing:
            raise FoundryError(
                f"persona for {task.task_id} lacks required capabilities: {sorted(missing)}"
            )
        return doc

    @staticmethod
    def _missing_capabilities(task: TaskNode, doc: Doc) -> set[str]:
        offered = set(normalize_tags(doc.get("capabilities", [])))
        return set(normalize_tags(task.required_capabilities)) - offered


class AgentFactory:
    """One agent per persona per session; repeat requests return the same one."""

    def __init__(self, backend_ref: str, agents: dict[str, AgentInstance], emit: EmitFn):
        self.backend_ref = backend_ref
        self.agents = agents
        self.emit = emit
        self._lock = threading.Lock()

    def agent_for(self, persona: PersonaSpec) -> AgentInstance:
        with self._lock:
            existing = self.agents.get(persona.persona_id)
            if existing is not None:
                return existing
            agent = AgentInstance(
                agent_id=f"a-{len(self.agents) + 1:03d}",
                persona_id=persona.persona_id,
                rendered_system_prompt=prompts.render_agent_prompt(persona),
                backend_ref=self.backend_ref,
                status=AgentStatus.IDLE,
            )
            self.agents[persona.persona_id] = agent
        self.emit(EventKind.AGENT_SPAWNED, {"agent": agent.to_doc()})
        return agent

    def set_status(self, persona_id: str, status: AgentStatus) -> AgentInstance:
        with self._lock:
            agent = dataclasses.replace(self.agents[persona_id], status=status)
            self.agents[persona_id] = agent
            return agent
