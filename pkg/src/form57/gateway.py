"""Chat-completion backends behind one small interface.

Two implementations: `LiveBackend` speaks OpenAI-compatible chat completions
over HTTPS (endpoint and key from configuration), and `ScriptedBackend`
replays an ordered tape of canned responses/faults for deterministic tests.
Neither post-processes model text; callers get it verbatim.
"""

from __future__ import annotations

import base64
import hashlib
import json
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Protocol, Union

import requests


class GatewayError(Exception):
    pass


class TransportError(GatewayError):
    pass


class RateLimited(GatewayError):
    def __init__(self, retry_after: float = 0.0):
        super().__init__(f"rate limited, retry after {retry_after}s")
        self.retry_after = retry_after


class BackendRefused(GatewayError):
    def __init__(self, status: int, body_excerpt: str):
        super().__init__(f"backend refused with status {status}: {body_excerpt[:200]}")
        self.status = status
        self.body_excerpt = body_excerpt


class RetriesExhausted(GatewayError):
    def __init__(self, attempts: int, last_error: GatewayError):
        super().__init__(f"gave up after {attempts} attempts: {last_error}")
        self.attempts = attempts
        self.last_error = last_error


class TapeError(GatewayError):
    """Scripted tape exhausted or a request did not match the next entry."""


@dataclass(frozen=True)
class TextPart:
    text: str


@dataclass(frozen=True)
class ImagePart:
    data: bytes
    media_type: str = "image/png"

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.data).hexdigest()


UserPart = Union[TextPart, ImagePart]


@dataclass(frozen=True)
class ModelRequest:
    system_prompt: str
    user_parts: tuple[UserPart, ...]
    temperature: float = 0.0
    max_output_tokens: int = 4096
    response_format_hint: str = "json_object"  # "json_object" | "free_text"
    role: str = "default"  # selects the model name in role-aware backends

    def __post_init__(self) -> None:
        if not self.user_parts:
            raise ValueError("user_parts must be non-empty")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_output_tokens < 1:
            raise ValueError("max_output_tokens must be positive")

    def joined_text(self) -> str:
        parts = [self.system_prompt] + [p.text for p in self.user_parts if isinstance(p, TextPart)]
        return "\n".join(parts)

    def image_digests(self) -> tuple[str, ...]:
        return tuple(p.digest for p in self.user_parts if isinstance(p, ImagePart))


@dataclass(frozen=True)
class ModelResponse:
    text: str
    backend_id: str
    latency_ms: int = 0


class Backend(Protocol):
    def complete(self, req: ModelRequest) -> ModelResponse: ...


@dataclass(frozen=True)
class RetryPolicy:
    max_attempts: int = 3
    base_delay: float = 0.5
    max_delay: float = 8.0

    def __post_init__(self) -> None:
        if self.max_attempts < 1:
            raise ValueError("max_attempts must be >= 1")


def complete_with_retry(backend: Backend, req: ModelRequest, policy: RetryPolicy = RetryPolicy()) -> ModelResponse:
    """Call the backend, retrying transport-level failures with exponential backoff.

    At most ``policy.max_attempts`` physical calls are made.  Refusals
    (non-retryable HTTP statuses) propagate immediately.
    """
    last: GatewayError | None = None
    for attempt in range(1, policy.max_attempts + 1):
        try:
            return backend.complete(req)
        except (TransportError, RateLimited) as exc:
            last = exc
            if attempt == policy.max_attempts:
                break
            delay = min(policy.base_delay * 2 ** (attempt - 1), policy.max_delay)
            if isinstance(exc, RateLimited) and exc.retry_after > 0:
                delay = max(delay, exc.retry_after)
            if delay > 0:
                time.sleep(delay)
    assert last is not None
    raise RetriesExhausted(policy.max_attempts, last)


# ---------------------------------------------------------------------------
# Live backend

@dataclass(frozen=True)
class LiveConfig:
    endpoint: str  # e.g. https://host/v1/chat/completions
    api_key: str = ""
    models: dict[str, str] = field(default_factory=dict)  # role -> model name
    default_model: str = "gpt-4o-mini"
    timeout: float = 120.0

    def model_for(self, role: str) -> str:
        return self.models.get(role, self.default_model)


class LiveBackend:
    """OpenAI-compatible chat-completions client."""

    def __init__(self, config: LiveConfig, session: requests.Session | None = None):
        self.config = config
        self._session = session or requests.Session()

    def complete(self, req: ModelRequest) -> ModelResponse:
        model = self.config.model_for(req.role)
        content: list[dict[str, Any]] = []
        for part in req.user_parts:
            if isinstance(part, TextPart):
                content.append({"type": "text", "text": part.text})
            else:
                data_url = f"data:{part.media_type};base64,{base64.b64encode(part.data).decode('ascii')}"
                content.append({"type": "image_url", "image_url": {"url": data_url}})
        payload: dict[str, Any] = {
            "model": model,
            "messages": [
                {"role": "system", "content": req.system_prompt},
                {"role": "user", "content": content},
            ],
            "temperature": req.temperature,
            "max_tokens": req.max_output_tokens,
        }
        if req.response_format_hint == "json_object":
            payload["response_format"] = {"type": "json_object"}
        headers = {"Content-Type": "application/json"}
        if self.config.api_key:
            headers["Authorization"] = f"Bearer {self.config.api_key}"
        started = time.monotonic()
        try:
            resp = self._session.post(self.config.endpoint, json=payload, headers=headers,
                                      timeout=self.config.timeout)
        except requests.RequestException as exc:
            raise TransportError(str(exc)) from exc
        latency_ms = int((time.monotonic() - started) * 1000)
        if resp.status_code == 429:
            raise RateLimited(retry_after=float(resp.headers.get("Retry-After", 0) or 0))
        if not resp.ok:
            raise BackendRefused(resp.status_code, resp.text[:500])
        try:
            text = resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise BackendRefused(resp.status_code, f"malformed completion body: {resp.text[:300]}") from exc
        return ModelResponse(text=text or "", backend_id=f"live:{model}", latency_ms=latency_ms)


# ---------------------------------------------------------------------------
# Scripted backend

_FAULTS = {"transport", "rate_limited", "refused"}


class ScriptedBackend:
    """Replays an ordered tape of canned responses and faults.

    Each entry is a dict with an optional ``match`` plus either ``response``
    (text) or ``fault`` ({"kind": transport|rate_limited|refused, ...}).
    Matchers check a substring of the prompt text (``contains``), the request
    ``role``, or an ``image_sha256`` digest of an attached image.  Consuming
    past the end of the tape, or a failed match, raises TapeError: both are
    test failures, not conditions to handle.
    """

    def __init__(self, entries: list[dict]):
        for i, entry in enumerate(entries):
            if ("response" in entry) == ("fault" in entry):
                raise ValueError(f"tape entry {i} must have exactly one of 'response'/'fault'")
            fault = entry.get("fault")
            if fault is not None and fault.get("kind") not in _FAULTS:
                raise ValueError(f"tape entry {i}: unknown fault kind {fault.get('kind')!r}")
        self._entries = list(entries)
        self._cursor = 0
        self._calls = 0
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path: str | Path) -> "ScriptedBackend":
        with open(path, encoding="utf-8") as fh:
            return cls(json.load(fh))

    @property
    def calls(self) -> int:
        return self._calls

    @property
    def remaining(self) -> int:
        return len(self._entries) - self._cursor

    def complete(self, req: ModelRequest) -> ModelResponse:
        with self._lock:
            if self._cursor >= len(self._entries):
                raise TapeError(f"tape exhausted after {len(self._entries)} entries")
            entry = self._entries[self._cursor]
            self._cursor += 1
            self._calls += 1
        match = entry.get("match") or {}
        if "contains" in match and match["contains"] not in req.joined_text():
            raise TapeError(f"tape entry {self._cursor - 1}: prompt does not contain {match['contains']!r}")
        if "role" in match and match["role"] != req.role:
            raise TapeError(f"tape entry {self._cursor - 1}: expected role {match['role']!r}, got {req.role!r}")
        if "image_sha256" in match and match["image_sha256"] not in req.image_digests():
            raise TapeError(f"tape entry {self._cursor - 1}: no attached image with expected digest")
        fault = entry.get("fault")
        if fault is not None:
            kind = fault["kind"]
            if kind == "transport":
                raise TransportError(fault.get("message", "scripted transport fault"))
            if kind == "rate_limited":
                raise RateLimited(retry_after=float(fault.get("retry_after", 0)))
            raise BackendRefused(int(fault.get("status", 500)), fault.get("body", "scripted refusal"))
        return ModelResponse(text=entry["response"], backend_id="scripted", latency_ms=0)
