"""Composition of partial results into the final, style-adapted response.

The aggregator never invents completeness: when tasks failed, the response
carries a deterministic partial-answer notice, and when every sink failed it
returns a structured failure report instead of prose built on nothing.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import prompts
from .gateway import TAG_AGGREGATE, CompletionRequest, Gateway, GatewayError
from .model import FinalResponse, Query, TaskPlan, UserProfile, sink_nodes
from .orchestrator import STATUS_DONE, ExecutionOutcome, compute_waves

STATUS_OK = "ok"
STATUS_PARTIAL = "partial"
STATUS_ERROR = "error"

SCOPE_SINKS = "sinks"
SCOPE_ALL = "all"

PARTIAL_NOTICE = "Note: {failed} of {total} tasks did not complete; this answer is based on partial results."


@dataclass(frozen=True)
class AggregateOutcome:
    response: FinalResponse
    status: str
    fallback: bool


def aggregate(
    gateway: Gateway,
    query: Query,
    plan: TaskPlan,
    outcome: ExecutionOutcome,
    profile: UserProfile,
    scope: str = SCOPE_SINKS,
) -> AggregateOutcome:
    """Fold executed results into one response in the user's preferred style.

    `scope` widens which results feed the composition prompt; provenance
    (`source_results`) always names the executed sink tasks, since sinks are
    what the plan defined as its final outputs.
    """
    if scope not in (SCOPE_SINKS, SCOPE_ALL):
        raise ValueError(f"unknown aggregate scope: {scope}")

    ordered = [t for wave in compute_waves(plan) for t in wave]
    sinks = sink_nodes(plan)
    executed_sinks = [t for t in ordered if t in sinks and t in outcome.results]
    failed = [t for t in ordered if outcome.statuses.get(t) != STATUS_DONE]
    style = profile.communication_style

    if not executed_sinks:
        return AggregateOutcome(
            response=FinalResponse(
                query_id=query.id,
                content=_failure_report(ordered, outcome),
                source_results=frozenset(),
                style_applied=style,
            ),
            status=STATUS_ERROR,
            fallback=False,
        )

    if scope == SCOPE_ALL:
        part_ids = [t for t in ordered if t in outcome.results]
    else:
        part_ids = executed_sinks
    parts = [(t, outcome.results[t].content) for t in part_ids]

    notice = ""
    if failed:
        notice = PARTIAL_NOTICE.format(failed=len(failed), total=len(ordered))

    fallback = False
    try:
        content = gateway.complete(
            CompletionRequest(
                system=prompts.aggregate_system(style.value),
                prompt=prompts.aggregate_prompt(
                    query.text,
                    parts,
                    notice="Some tasks failed; compose the best answer from what is available."
                    if failed
                    else "",
                ),
                tag=TAG_AGGREGATE,
            )
        )
    except GatewayError:
        # Composition is a nicety; the partial results are the substance.
        # Degrade to a labeled concatenation rather than losing the work.
        fallback = True
        content = "\n\n".join(f"## {t}\n{text}" for t, text in parts)

    if notice:
        content = f"{content}\n\n{notice}"

    return AggregateOutcome(
        response=FinalResponse(
            query_id=query.id,
            content=content,
            source_results=frozenset(executed_sinks),
            style_applied=style,
        ),
        status=STATUS_PARTIAL if failed else STATUS_OK,
        fallback=fallback,
    )


def _failure_report(ordered: list[str], outcome: ExecutionOutcome) -> str:
    lines = ["No tasks produced usable results. Failure summary:"]
    for task_id in ordered:
        failure = outcome.failures.get(task_id)
        if failure is not None:
            lines.append(f"- {task_id}: {failure.reason} ({failure.detail})")
    return "\n".join(lines)
