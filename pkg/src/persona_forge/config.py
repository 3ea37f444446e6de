"""Engine configuration: file format, defaults, and gateway construction."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

from .gateway import Gateway, HttpChatBackend, ScriptedBackend

MODE_SCRIPTED = "scripted"
MODE_LIVE = "live"


class ConfigError(Exception):
    """Bad configuration is a usage error, reported before anything runs."""


@dataclass
class BackendConfig:
    mode: str = MODE_SCRIPTED
    fixture_path: str | None = None
    endpoint: str = ""
    model: str = ""


@dataclass
class EngineConfig:
    backend: BackendConfig = field(default_factory=BackendConfig)
    parallelism_cap: int = 4
    retries: int = 1
    request_timeout_s: float = 60.0
    data_dir: str | None = None
    aggregate_scope: str = "sinks"

    def validated(self) -> "EngineConfig":
        if self.backend.mode not in (MODE_SCRIPTED, MODE_LIVE):
            raise ConfigError(f"backend.mode must be scripted or live, got {self.backend.mode!r}")
        if self.backend.mode == MODE_SCRIPTED and not self.backend.fixture_path:
            raise ConfigError("scripted backend requires backend.fixture_path")
        if self.backend.mode == MODE_LIVE and not (self.backend.endpoint and self.backend.model):
            raise ConfigError("live backend requires backend.endpoint and backend.model")
        if self.parallelism_cap < 1:
            raise ConfigError("parallelism_cap must be >= 1")
        if self.retries < 0:
            raise ConfigError("retries must be >= 0")
        if self.aggregate_scope not in ("sinks", "all"):
            raise ConfigError(f"aggregate_scope must be sinks or all, got {self.aggregate_scope!r}")
        return self

    def to_doc(self) -> dict:
        return {
            "backend": {
                "mode": self.backend.mode,
                "fixture_path": self.backend.fixture_path,
                "endpoint": self.backend.endpoint,
                "model": self.backend.model,
            },
            "parallelism_cap": self.parallelism_cap,
            "retries": self.retries,
            "timeouts": {"request_s": self.request_timeout_s},
            "data_dir": self.data_dir,
            "aggregate_scope": self.aggregate_scope,
        }


def config_from_doc(doc: dict) -> EngineConfig:
    backend_doc = doc.get("backend", {})
    backend = BackendConfig(
        mode=backend_doc.get("mode", MODE_SCRIPTED),
        fixture_path=backend_doc.get("fixture_path"),
        endpoint=backend_doc.get("endpoint", ""),
        model=backend_doc.get("model", ""),
    )
    timeouts = doc.get("timeouts", {})
    return EngineConfig(
        backend=backend,
        parallelism_cap=int(doc.get("parallelism_cap", 4)),
        retries=int(doc.get("retries", 1)),
        request_timeout_s=float(timeouts.get("request_s", 60.0)),
        data_dir=doc.get("data_dir"),
        aggregate_scope=doc.get("aggregate_scope", "sinks"),
    )


def load_config(path: str | Path | None) -> EngineConfig:
    if path is None:
        return EngineConfig()
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config file must hold a JSON object")
    return config_from_doc(doc)


def build_gateway(config: EngineConfig) -> Gateway:
    config.validated()
    if config.backend.mode == MODE_SCRIPTED:
        assert config.backend.fixture_path is not None
        try:
            backend = ScriptedBackend.from_file(config.backend.fixture_path)
        except FileNotFoundError as exc:
            raise ConfigError(f"fixture file not found: {config.backend.fixture_path}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"fixture file is not valid JSON: {exc}") from exc
    else:
        backend = HttpChatBackend(
            endpoint=config.backend.endpoint,
            model=config.backend.model,
            timeout=config.request_timeout_s,
        )
    return Gateway(
        backend,
        deterministic=True,
        max_inflight=config.parallelism_cap,
        transport_retries=config.retries,
    )
