"""Run configuration: picking and building the model backend.

A config is a small JSON object. The ``backend`` entry selects either the
live HTTP backend ("live") or a scripted tape ("scripted:<path>", resolved
relative to the config's own directory). Live settings come from the config
with environment overrides: MODEL_ENDPOINT and MODEL_API_KEY win over the
file, so credentials stay out of committed configs.
"""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Mapping

from .gateway import Backend, LiveBackend, LiveConfig, ScriptedBackend

ENDPOINT_ENV = "MODEL_ENDPOINT"
API_KEY_ENV = "MODEL_API_KEY"


class ConfigError(ValueError):
    """The run config is missing or inconsistent."""


def load_config(path: str | Path) -> dict:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return doc


def resolve_backend(
    config: dict,
    base_dir: str | Path,
    backend_spec: str | None = None,
    env: Mapping[str, str] | None = None,
) -> Backend:
    """Build the backend named by ``backend_spec`` or the config's ``backend``."""
    env = os.environ if env is None else env
    spec = backend_spec or config.get("backend")
    if not spec:
        raise ConfigError("no backend selected; set 'backend' or pass --backend")
    if spec.startswith("scripted:"):
        tape_path = Path(spec[len("scripted:"):])
        if not tape_path.is_absolute():
            tape_path = Path(base_dir) / tape_path
        return ScriptedBackend.from_file(tape_path)
    if spec == "live":
        endpoint = env.get(ENDPOINT_ENV) or config.get("endpoint")
        if not endpoint:
            raise ConfigError(
                f"live backend needs an endpoint; set {ENDPOINT_ENV} or 'endpoint'"
            )
        live = LiveConfig(
            endpoint=endpoint,
            api_key=env.get(API_KEY_ENV) or config.get("api_key", ""),
            models=config.get("models", {}),
            default_model=config.get("default_model", "gpt-4o-mini"),
            timeout=float(config.get("timeout", 120.0)),
        )
        return LiveBackend(live)
    raise ConfigError(f"unknown backend spec: {spec!r}")
