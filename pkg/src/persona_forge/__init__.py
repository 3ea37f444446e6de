"""Session-scoped multi-agent pipeline: profile, plan, staff, execute, compose."""

from .aggregator import AggregateOutcome, aggregate
from .analysis import profile_encode, repair_plan, task_decompose
from .config import EngineConfig, load_config
from .foundry import AgentFactory, PersonaFoundry, persona_fingerprint
from .gateway import CompletionRequest, Gateway, HttpChatBackend, ScriptedBackend
from .model import (
    AgentInstance,
    FinalResponse,
    PartialResult,
    PersonaPool,
    PersonaSpec,
    PipelineEvent,
    Query,
    TaskNode,
    TaskPlan,
    UserProfile,
    validate_plan,
)
from .orchestrator import compute_waves, execute_plan, route_inputs
from .session import SessionRuntime, SessionService, semantic_transcript

__version__ = "0.1.0"

__all__ = [
    "AgentFactory",
    "AgentInstance",
    "AggregateOutcome",
    "CompletionRequest",
    "EngineConfig",
    "FinalResponse",
    "Gateway",
    "HttpChatBackend",
    "PartialResult",
    "PersonaFoundry",
    "PersonaPool",
    "PersonaSpec",
    "PipelineEvent",
    "Query",
    "ScriptedBackend",
    "SessionRuntime",
    "SessionService",
    "TaskNode",
    "TaskPlan",
    "UserProfile",
    "aggregate",
    "compute_waves",
    "execute_plan",
    "load_config",
    "persona_fingerprint",
    "profile_encode",
    "repair_plan",
    "route_inputs",
    "semantic_transcript",
    "task_decompose",
    "validate_plan",
    "__version__",
]
