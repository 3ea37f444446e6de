"""Command-line entry point: one-shot queries, a REPL, the API server, and
record/replay of deterministic sessions.

Exit codes: 0 success, 1 a query ended in a non-ok status, 2 replay mismatch,
64 usage or configuration error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .config import ConfigError, EngineConfig, config_from_doc, load_config
from .model import canonical_json
from .orchestrator import compute_waves
from .session import SessionRuntime, SessionService, semantic_transcript

EXIT_OK = 0
EXIT_PIPELINE = 1
EXIT_REPLAY_MISMATCH = 2
EXIT_USAGE = 64


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def build_parser() -> _Parser:
    parser = _Parser(prog="persona-forge", description="Multi-agent query pipeline")
    parser.add_argument("query", nargs="?", help="run one query and print the answer")
    parser.add_argument("--config", help="path to a JSON config file")
    parser.add_argument("--backend", choices=["scripted", "live"], help="override backend mode")
    parser.add_argument("--fixture", help="override scripted fixture path")
    parser.add_argument("--data-dir", help="directory for persisted sessions")
    parser.add_argument("--serve", action="store_true", help="run the HTTP API server")
    parser.add_argument("--port", type=int, default=8080, help="server port (with --serve)")
    parser.add_argument("--replay", metavar="PATH", help="re-run a recording and compare")
    parser.add_argument("--record", metavar="PATH", help="write a session recording")
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.query is not None and not args.query.strip():
            raise ConfigError("query text is empty")
        if args.replay:
            return _replay(args)
        config = _resolve_config(args)
        service = SessionService(config)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    if args.serve:
        return _serve(service, args.port)
    if args.query is not None:
        return _oneshot(service, args.query, args.record)
    return _repl(service, args.record)


def _resolve_config(args: argparse.Namespace) -> EngineConfig:
    config = load_config(args.config)
    if args.backend:
        config.backend.mode = args.backend
    if args.fixture:
        config.backend.fixture_path = args.fixture
    if args.data_dir:
        config.data_dir = args.data_dir
    return config.validated()


def _oneshot(service: SessionService, text: str, record: str | None) -> int:
    runtime = service.create()
    query_id = runtime.run_query(text)
    response, status = runtime.state.responses[query_id]
    print(response.content)
    if record:
        _write_recording(runtime, service.config, record)
    return EXIT_OK if status == "ok" else EXIT_PIPELINE


def _repl(service: SessionService, record: str | None) -> int:
    runtime = service.create()
    print(f"session {runtime.session_id}; :agents :plan :events :quit")
    worst = EXIT_OK
    while True:
        try:
            line = input("> ").strip()
        except EOFError:
            break
        if not line:
            continue
        if line == ":quit":
            break
        if line == ":agents":
            for persona in runtime.state.pool.personas:
                agent = runtime.state.agents.get(persona.persona_id)
                agent_id = agent.agent_id if agent else "-"
                print(f"{persona.persona_id} {agent_id} {persona.role}")
            continue
        if line == ":plan":
            plan = _latest_plan(runtime)
            if plan is None:
                print("no plan yet")
            else:
                for i, wave in enumerate(compute_waves(plan)):
                    print(f"wave {i}: {', '.join(wave)}")
            continue
        if line == ":events":
            for doc in semantic_transcript(runtime.events):
                print(canonical_json(doc))
            continue
        query_id = runtime.run_query(line)
        response, status = runtime.state.responses[query_id]
        print(response.content)
        if status != "ok":
            print(f"[status: {status}]")
            worst = EXIT_PIPELINE
    if record:
        _write_recording(runtime, service.config, record)
    return worst


def _latest_plan(runtime: SessionRuntime):
    if not runtime.state.queries:
        return None
    return runtime.state.plans.get(runtime.state.queries[-1].id)


def _serve(service: SessionService, port: int) -> int:
    import uvicorn

    from .api import create_app

    uvicorn.run(create_app(service), host="127.0.0.1", port=port)
    return EXIT_OK


def _write_recording(runtime: SessionRuntime, config: EngineConfig, path: str) -> None:
    doc = {
        "session_id": runtime.session_id,
        "config": config.to_doc(),
        "queries": [q.text for q in runtime.state.queries],
        "transcript": semantic_transcript(runtime.events),
    }
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True), encoding="utf-8")


def _replay(args: argparse.Namespace) -> int:
    try:
        recording = json.loads(Path(args.replay).read_text(encoding="utf-8"))
    except FileNotFoundError:
        print(f"error: recording not found: {args.replay}", file=sys.stderr)
        return EXIT_USAGE
    except json.JSONDecodeError as exc:
        print(f"error: recording is not valid JSON: {exc}", file=sys.stderr)
        return EXIT_USAGE

    try:
        if args.config or args.backend or args.fixture:
            config = _resolve_config(args)
        else:
            config = config_from_doc(recording.get("config", {}))
            config.data_dir = None
            config.validated()
        service = SessionService(config)
        runtime = service.create(session_id=recording["session_id"])
    except (ConfigError, ValueError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    for text in recording.get("queries", []):
        runtime.run_query(text)

    expected = recording.get("transcript", [])
    actual = semantic_transcript(runtime.events)
    if actual == expected:
        print(f"replay ok: {len(actual)} events match")
        return EXIT_OK

    print("replay mismatch:", file=sys.stderr)
    for i in range(max(len(expected), len(actual))):
        want = expected[i] if i < len(expected) else None
        got = actual[i] if i < len(actual) else None
        if want != got:
            print(f"  first divergence at event {i}:", file=sys.stderr)
            print(f"    expected: {canonical_json(want) if want else '<missing>'}", file=sys.stderr)
            print(f"    actual:   {canonical_json(got) if got else '<missing>'}", file=sys.stderr)
            break
    print(
        f"  expected {len(expected)} events, got {len(actual)}",
        file=sys.stderr,
    )
    return EXIT_REPLAY_MISMATCH


if __name__ == "__main__":
    sys.exit(main())
