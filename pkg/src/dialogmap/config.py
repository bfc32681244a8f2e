"""Server configuration: JSON config file plus DIALOGMAP_* env overrides.

Documented keys (env name in parentheses):
  listen_host (DIALOGMAP_LISTEN_HOST), listen_port (DIALOGMAP_LISTEN_PORT),
  log_dir (DIALOGMAP_LOG_DIR), mode (DIALOGMAP_MODE),
  checkpoint_words (DIALOGMAP_CHECKPOINT_WORDS),
  summary_word_limit (DIALOGMAP_SUMMARY_WORD_LIMIT),
  max_participants (DIALOGMAP_MAX_PARTICIPANTS),
  provider.kind (DIALOGMAP_PROVIDER_KIND), provider.seed (DIALOGMAP_PROVIDER_SEED),
  provider.endpoint (DIALOGMAP_PROVIDER_ENDPOINT), provider.model (DIALOGMAP_PROVIDER_MODEL),
  provider.timeout_ms (DIALOGMAP_PROVIDER_TIMEOUT_MS),
  provider.max_retries (DIALOGMAP_PROVIDER_MAX_RETRIES)
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping, Optional

from .errors import BadConfig
from .types import MapMode, ProviderConfig, SessionConfig

ENV_PREFIX = "DIALOGMAP_"


@dataclass(frozen=True)
class ServerConfig:
    listen_host: str = "127.0.0.1"
    listen_port: int = 8765
    log_dir: str = "session-logs"
    session: SessionConfig = field(default_factory=SessionConfig)


def _get_int(value: Any, key: str) -> int:
    try:
        return int(value)
    except (TypeError, ValueError):
        raise BadConfig(f"{key} must be an integer, got {value!r}") from None


def load_server_config(
    path: Optional[str | Path] = None, env: Optional[Mapping[str, str]] = None
) -> ServerConfig:
    """Parse config file values, then apply environment overrides."""
    env = os.environ if env is None else env
    raw: dict[str, Any] = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text("utf-8"))
        except OSError as exc:
            raise BadConfig(f"cannot read config file: {exc}") from exc
        except ValueError as exc:
            raise BadConfig(f"config file is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise BadConfig("config file must hold a JSON object")

    provider_raw = dict(raw.get("provider", {}))

    def override(key: str, env_name: str, target: dict[str, Any]) -> None:
        if ENV_PREFIX + env_name in env:
            target[key] = env[ENV_PREFIX + env_name]

    override("listen_host", "LISTEN_HOST", raw)
    override("listen_port", "LISTEN_PORT", raw)
    override("log_dir", "LOG_DIR", raw)
    override("mode", "MODE", raw)
    override("checkpoint_words", "CHECKPOINT_WORDS", raw)
    override("summary_word_limit", "SUMMARY_WORD_LIMIT", raw)
    override("max_participants", "MAX_PARTICIPANTS", raw)
    override("kind", "PROVIDER_KIND", provider_raw)
    override("seed", "PROVIDER_SEED", provider_raw)
    override("endpoint", "PROVIDER_ENDPOINT", provider_raw)
    override("model", "PROVIDER_MODEL", provider_raw)
    override("timeout_ms", "PROVIDER_TIMEOUT_MS", provider_raw)
    override("max_retries", "PROVIDER_MAX_RETRIES", provider_raw)

    mode_raw = raw.get("mode", MapMode.HUMAN_MAP.value)
    try:
        mode = MapMode(mode_raw)
    except ValueError:
        raise BadConfig(
            f"mode must be one of {[m.value for m in MapMode]}, got {mode_raw!r}"
        ) from None

    provider = ProviderConfig(
        kind=provider_raw.get("kind", "mock"),
        seed=_get_int(provider_raw.get("seed", 0), "provider.seed"),
        endpoint=provider_raw.get("endpoint", ""),
        model=provider_raw.get("model", ""),
        timeout_ms=_get_int(provider_raw.get("timeout_ms", 30_000), "provider.timeout_ms"),
        max_retries=_get_int(provider_raw.get("max_retries", 1), "provider.max_retries"),
    )
    session = SessionConfig(
        mode=mode,
        checkpoint_words=_get_int(raw.get("checkpoint_words", 50), "checkpoint_words"),
        summary_word_limit=_get_int(raw.get("summary_word_limit", 6), "summary_word_limit"),
        provider=provider,
        max_participants=_get_int(raw.get("max_participants", 16), "max_participants"),
    )
    session.validate()
    return ServerConfig(
        listen_host=str(raw.get("listen_host", "127.0.0.1")),
        listen_port=_get_int(raw.get("listen_port", 8765), "listen_port"),
        log_dir=str(raw.get("log_dir", "session-logs")),
        session=session,
    )
