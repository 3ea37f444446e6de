"""Uniform completion interface over interchangeable model backends.

Two backends ship: a scripted fixture backend that replays canned responses
for deterministic runs, and a live HTTP backend speaking the chat-completions
wire format. Everything above this module sees only `Gateway`, so swapping
backends never touches pipeline code.
"""

from __future__ import annotations

import json
import os
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Protocol

import httpx

from .model import Doc, normalize_tag

# Stage tags double as fixture routing keys; fixtures match on them.
TAG_PROFILE = "profile"
TAG_DECOMPOSE = "decompose"
TAG_PERSONA = "persona"
TAG_TASK = "task"
TAG_AGGREGATE = "aggregate"

STAGE_TAGS = (TAG_PROFILE, TAG_DECOMPOSE, TAG_PERSONA, TAG_TASK, TAG_AGGREGATE)

ENV_API_KEY = "PERSONA_FORGE_API_KEY"


class GatewayError(Exception):
    """Base class for everything this module raises."""


class FixtureMissError(GatewayError):
    """A scripted run hit a request no fixture rule covers."""


class TransportFailure(GatewayError):
    """The backend was unreachable after all retries."""


class StructuredOutputError(GatewayError):
    """The model never produced a document that passes the schema."""

    def __init__(self, errors: list[str], attempts: tuple[str, ...]):
        super().__init__(f"structured output failed after {len(attempts)} attempt(s): {errors}")
        self.errors = errors
        self.attempts = attempts


@dataclass(frozen=True)
class CompletionRequest:
    """One model call. `tag` names the pipeline stage issuing it."""

    system: str
    prompt: str
    tag: str
    temperature: float = 0.0

    def __post_init__(self) -> None:
        if self.tag not in STAGE_TAGS:
            raise ValueError(f"unknown stage tag: {self.tag}")


class Backend(Protocol):
    ref: str

    def complete(self, request: CompletionRequest) -> str: ...


@dataclass(frozen=True)
class FixtureRule:
    response: str
    tag: str | None = None
    contains: str | None = None

    def matches(self, request: CompletionRequest) -> bool:
        if self.tag is not None and normalize_tag(self.tag) != request.tag:
            return False
        if self.contains is not None and self.contains not in request.prompt:
            return False
        return True


class ScriptedBackend:
    """Replays canned responses: first matching rule wins, else the default.

    Rules are ordered; a rule may constrain the stage tag, a prompt substring,
    both, or neither. A request matching nothing, with no default configured,
    is a hard error so fixture gaps surface instead of silently degrading.
    """

    def __init__(self, rules: list[FixtureRule], default: str | None = None, name: str = "inline"):
        self.rules = list(rules)
        self.default = default
        self.ref = f"scripted:{name}"

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedBackend":
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls.from_doc(doc, name=Path(path).name)

    @classmethod
    def from_doc(cls, doc: Doc, name: str = "inline") -> "ScriptedBackend":
        rules = [
            FixtureRule(
                response=r["response"],
                tag=r.get("tag"),
                contains=r.get("contains"),
            )
            for r in doc.get("rules", [])
        ]
        return cls(rules, default=doc.get("default"), name=name)

    def complete(self, request: CompletionRequest) -> str:
        for rule in self.rules:
            if rule.matches(request):
                return rule.response
        if self.default is not None:
            return self.default
        raise FixtureMissError(
            f"no fixture rule for tag={request.tag!r} prompt={request.prompt[:120]!r}"
        )


class HttpChatBackend:
    """Chat-completions client. Auth comes from the environment, never config."""

    def __init__(
        self,
        endpoint: str,
        model: str,
        timeout: float = 60.0,
        transport: httpx.BaseTransport | None = None,
    ):
        self.endpoint = endpoint.rstrip("/")
        self.model = model
        self.ref = f"live:{model}"
        headers = {}
        api_key = os.environ.get(ENV_API_KEY)
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        self._client = httpx.Client(headers=headers, timeout=timeout, transport=transport)

    def complete(self, request: CompletionRequest) -> str:
        payload = {
            "model": self.model,
            "messages": [
                {"role": "system", "content": request.system},
                {"role": "user", "content": request.prompt},
            ],
            "temperature": request.temperature,
        }
        try:
            resp = self._client.post(f"{self.endpoint}/chat/completions", json=payload)
            resp.raise_for_status()
        except httpx.TransportError as exc:
            raise TransportFailure(str(exc)) from exc
        except httpx.HTTPStatusError as exc:
            raise TransportFailure(f"backend returned {exc.response.status_code}") from exc
        body = resp.json()
        try:
            return body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise TransportFailure(f"malformed completion body: {body!r}") from exc

    def close(self) -> None:
        self._client.close()


@dataclass(frozen=True)
class StructuredResult:
    doc: Doc
    attempts: tuple[str, ...]
    repaired: bool

    @property
    def calls(self) -> int:
        return len(self.attempts)


class Gateway:
    """Concurrency-capped, retrying front door for all model calls.

    In deterministic mode every request is coerced to temperature zero before
    dispatch, so a scripted or temperature-sensitive backend sees identical
    inputs across runs.
    """

    def __init__(
        self,
        backend: Backend,
        deterministic: bool = True,
        max_inflight: int = 4,
        transport_retries: int = 2,
        backoff_base: float = 0.5,
        sleeper: Callable[[float], None] = time.sleep,
    ):
        if max_inflight < 1:
            raise ValueError("max_inflight must be >= 1")
        self.backend = backend
        self.deterministic = deterministic
        self.transport_retries = transport_retries
        self.backoff_base = backoff_base
        self._sleep = sleeper
        self._slots = threading.Semaphore(max_inflight)

    @property
    def backend_ref(self) -> str:
        return self.backend.ref

    def complete(self, request: CompletionRequest) -> str:
        if self.deterministic and request.temperature != 0.0:
            request = CompletionRequest(
                system=request.system, prompt=request.prompt, tag=request.tag, temperature=0.0
            )
        delay = self.backoff_base
        with self._slots:
            for attempt in range(self.transport_retries + 1):
                try:
                    return self.backend.complete(request)
                except TransportFailure:
                    if attempt == self.transport_retries:
                        raise
                    self._sleep(delay)
                    delay *= 2
        raise AssertionError("unreachable")

    def complete_structured(self, request: CompletionRequest, schema: Doc) -> StructuredResult:
        """Call, parse, validate; on failure, one repair round with the errors.

        Exactly one repair call is ever made. If the repair still fails the
        schema, the caller gets both raw texts back in the error for
        diagnostics instead of a silently mangled document.
        """
        framed = CompletionRequest(
            system=request.system,
            prompt=(
                f"{request.prompt}\n\n"
                "Respond with a single JSON object matching this schema, no prose:\n"
                f"{json.dumps(schema, sort_keys=True)}"
            ),
            tag=request.tag,
            temperature=request.temperature,
        )
        first = self.complete(framed)
        doc, errors = _parse_and_validate(first, schema)
        if doc is not None and not errors:
            return StructuredResult(doc=doc, attempts=(first,), repaired=False)

        repair = CompletionRequest(
            system=request.system,
            prompt=(
                f"{framed.prompt}\n\n"
                "Your previous reply was rejected:\n"
                f"{first}\n\n"
                "Validation errors:\n"
                + "\n".join(f"- {e}" for e in errors)
                + "\nReturn a corrected JSON object only."
            ),
            tag=request.tag,
            temperature=request.temperature,
        )
        second = self.complete(repair)
        doc, errors = _parse_and_validate(second, schema)
        if doc is not None and not errors:
            return StructuredResult(doc=doc, attempts=(first, second), repaired=True)
        raise StructuredOutputError(errors, attempts=(first, second))


def _parse_and_validate(text: str, schema: Doc) -> tuple[Doc | None, list[str]]:
    try:
        doc = extract_json_document(text)
    except ValueError as exc:
        return None, [str(exc)]
    errors = validate_document(doc, schema)
    return (doc if not errors else None), errors


def extract_json_document(text: str) -> Doc:
    """Pull the largest parseable JSON object out of free-form model text.

    Models wrap JSON in prose and code fences; scanning for balanced brace
    spans (string- and escape-aware) and parsing the longest one tolerates
    all of that without regex fragility.
    """
    spans: list[tuple[int, int]] = []
    depth = 0
    start = -1
    in_string = False
    escaped = False
    for i, ch in enumerate(text):
        if in_string:
            if escaped:
                escaped = False
            elif ch == "\\":
                escaped = True
            elif ch == '"':
                in_string = False
            continue
        if ch == '"':
            if depth > 0:
                in_string = True
        elif ch == "{":
            if depth == 0:
                start = i
            depth += 1
        elif ch == "}":
            if depth > 0:
                depth -= 1
                if depth == 0:
                    spans.append((start, i + 1))
    for lo, hi in sorted(spans, key=lambda s: s[0] - s[1]):
        try:
            doc = json.loads(text[lo:hi])
        except json.JSONDecodeError:
            continue
        if isinstance(doc, dict):
            return doc
    raise ValueError("no JSON object found in response")


def validate_document(doc: Any, schema: Doc, path: str = "$") -> list[str]:
    """Check a document against the schema subset the pipeline uses.

    Supported keywords: type, properties, required, additionalProperties,
    items, enum, minItems, minLength. Returns every violation found, with
    a path locating each one.
    """
    errors: list[str] = []
    expected = schema.get("type")
    if expected is not None and not _type_matches(doc, expected):
        errors.append(f"{path}: expected {expected}, got {_type_name(doc)}")
        return errors

    if "enum" in schema and doc not in schema["enum"]:
        errors.append(f"{path}: {doc!r} not in enum {schema['enum']}")

    if isinstance(doc, dict):
        props: Doc = schema.get("properties", {})
        for key in schema.get("required", []):
            if key not in doc:
                errors.append(f"{path}: missing required property {key!r}")
        for key, value in doc.items():
            if key in props:
                errors.extend(validate_document(value, props[key], f"{path}.{key}"))
            elif schema.get("additionalProperties") is False:
                errors.append(f"{path}: unexpected property {key!r}")

    if isinstance(doc, list):
        if "minItems" in schema and len(doc) < schema["minItems"]:
            errors.append(f"{path}: expected at least {schema['minItems']} items, got {len(doc)}")
        item_schema = schema.get("items")
        if item_schema is not None:
            for i, item in enumerate(doc):
                errors.extend(validate_document(item, item_schema, f"{path}[{i}]"))

    if isinstance(doc, str) and "minLength" in schema and len(doc) < schema["minLength"]:
        errors.append(f"{path}: string shorter than minLength {schema['minLength']}")

    return errors


def _type_matches(value: Any, expected: str) -> bool:
    if expected == "object":
        return isinstance(value, dict)
    if expected == "array":
        return isinstance(value, list)
    if expected == "string":
        return isinstance(value, str)
    if expected == "boolean":
        return isinstance(value, bool)
    if expected == "integer":
        return isinstance(value, int) and not isinstance(value, bool)
    if expected == "number":
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    raise ValueError(f"unsupported schema type: {expected}")


def _type_name(value: Any) -> str:
    if isinstance(value, bool):
        return "boolean"
    if isinstance(value, dict):
        return "object"
    if isinstance(value, list):
        return "array"
    if isinstance(value, str):
        return "string"
    if isinstance(value, int):
        return "integer"
    if isinstance(value, float):
        return "number"
    return type(value).__name__
