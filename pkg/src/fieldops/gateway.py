"""Pluggable completion backend: a local inference endpoint or a scripted table.

The remote backend speaks a chat-completions-style JSON POST so it works
against common local inference servers. The scripted backend replays canned
responses from a JSON file, which is what the test suite and the shipped
evaluation scripts use: no weights, fully reproducible. Exactly one request
per complete() call — retry policy belongs to the orchestrator, which
currently fails the mission instead of retrying.
"""

from __future__ import annotations

import json
import re
import threading
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import requests

from .errors import (
    FieldopsError,
    GatewayConnectError,
    GatewayResponseError,
    GatewayTimeoutError,
    ScriptLookupError,
)
from .util import perf_ms

DEFAULT_TIMEOUT_MS = 30_000
DEFAULT_CHAT_PATH = "/v1/chat/completions"
DEFAULT_ENDPOINT = "http://127.0.0.1:11434"
DEFAULT_MODEL = "gemma:2b"

KIND_REMOTE = "remote"
KIND_SCRIPTED = "scripted"


@dataclass(frozen=True)
class BackendConfig:
    kind: str = KIND_SCRIPTED
    endpoint: str = ""
    model_name: str = ""
    request_timeout_ms: int = DEFAULT_TIMEOUT_MS
    script_path: str = ""
    chat_path: str = DEFAULT_CHAT_PATH

    def __post_init__(self):
        if self.kind == KIND_REMOTE:
            if not self.endpoint or not self.model_name:
                raise FieldopsError("remote backend requires endpoint and model_name")
        elif self.kind == KIND_SCRIPTED:
            if not self.script_path:
                raise FieldopsError("scripted backend requires script_path")
        else:
            raise FieldopsError(f"unknown backend kind {self.kind!r}")

    @classmethod
    def from_env(cls, env: dict) -> "BackendConfig":
        """LLM_SCRIPT selects scripted mode; otherwise LLM_ENDPOINT/LLM_MODEL."""
        timeout = int(env.get("LLM_TIMEOUT_MS", DEFAULT_TIMEOUT_MS))
        script = env.get("LLM_SCRIPT", "")
        if script:
            return cls(kind=KIND_SCRIPTED, script_path=script, request_timeout_ms=timeout)
        return cls(
            kind=KIND_REMOTE,
            endpoint=env.get("LLM_ENDPOINT", DEFAULT_ENDPOINT),
            model_name=env.get("LLM_MODEL", DEFAULT_MODEL),
            request_timeout_ms=timeout,
        )


@dataclass(frozen=True)
class CompletionResult:
    raw_text: str
    inference_duration_ms: float
    backend_label: str


_MISSION_LINE_RE = re.compile(r'^Mission Command: "(.*)"\s*$', re.MULTILINE)


def extract_mission_line(prompt: str) -> str:
    """The quoted mission text every prompt kind carries; '' if absent."""
    m = _MISSION_LINE_RE.search(prompt)
    return m.group(1) if m else ""


@dataclass
class _ScriptEntry:
    match: str
    response: str

    def matches(self, mission_text: str) -> bool:
        return self.match == "*" or mission_text.startswith(self.match)


def resolve_script_path(name_or_path: str) -> Path:
    """Accept a filesystem path or the name of a script shipped in the package."""
    p = Path(name_or_path)
    if p.exists():
        return p
    shipped = resources.files("fieldops.data.scripts").joinpath(f"{name_or_path}.json")
    try:
        if shipped.is_file():
            with resources.as_file(shipped) as fp:
                return Path(fp)
    except (FileNotFoundError, ModuleNotFoundError):
        pass
    raise FieldopsError(f"script not found: {name_or_path}")


class ScriptedBackend:
    """Canned completions consumed in script order.

    Each call consumes the cursor entry when its match prefix fits the
    prompt's Mission Command line; otherwise the longest matching prefix
    anywhere in the script is replayed without advancing the cursor, so a
    repeated prompt stays answerable.
    """

    kind = KIND_SCRIPTED

    def __init__(self, script_path: str | Path):
        path = resolve_script_path(str(script_path))
        raw = json.loads(path.read_text(encoding="utf-8"))
        if not isinstance(raw, list):
            raise FieldopsError(f"{path}: script must be a JSON array")
        self.entries = []
        for i, entry in enumerate(raw):
            if not isinstance(entry, dict) or "match" not in entry or "response" not in entry:
                raise FieldopsError(f"{path}: entry #{i} needs 'match' and 'response'")
            self.entries.append(_ScriptEntry(match=entry["match"], response=entry["response"]))
        self.label = f"scripted:{path.name}"
        self._cursor = 0
        self._lock = threading.Lock()

    def reset(self) -> None:
        with self._lock:
            self._cursor = 0

    def complete(self, prompt: str, system: Optional[str] = None) -> CompletionResult:
        start = perf_ms()
        mission_text = extract_mission_line(prompt)
        with self._lock:
            if self._cursor < len(self.entries) and self.entries[self._cursor].matches(mission_text):
                entry = self.entries[self._cursor]
                self._cursor += 1
            else:
                candidates = [e for e in self.entries if e.match != "*" and e.matches(mission_text)]
                if not candidates:
                    raise ScriptLookupError(
                        f"no scripted response for mission line {mission_text!r}",
                        backend_label=self.label)
                entry = max(candidates, key=lambda e: len(e.match))
        return CompletionResult(raw_text=entry.response,
                                inference_duration_ms=perf_ms() - start,
                                backend_label=self.label)


class RemoteBackend:
    """One chat-style completion request per call against a local endpoint."""

    kind = KIND_REMOTE

    def __init__(self, config: BackendConfig, session: Optional[requests.Session] = None):
        self.config = config
        self.label = f"remote:{config.model_name}"
        self._session = session or requests.Session()

    def complete(self, prompt: str, system: Optional[str] = None) -> CompletionResult:
        url = self.config.endpoint.rstrip("/") + self.config.chat_path
        messages = []
        if system:
            messages.append({"role": "system", "content": system})
        messages.append({"role": "user", "content": prompt})
        body = {"model": self.config.model_name, "messages": messages, "stream": False}
        start = perf_ms()
        try:
            resp = self._session.post(url, json=body,
                                      timeout=self.config.request_timeout_ms / 1000.0)
        except requests.Timeout as exc:
            raise GatewayTimeoutError(
                f"completion timed out after {self.config.request_timeout_ms} ms",
                backend_label=self.label) from exc
        except requests.ConnectionError as exc:
            raise GatewayConnectError(f"cannot reach {url}: {exc}",
                                      backend_label=self.label) from exc
        duration = perf_ms() - start
        if resp.status_code // 100 != 2:
            raise GatewayResponseError(f"{url} answered {resp.status_code}: {resp.text[:200]}",
                                       backend_label=self.label)
        try:
            payload = resp.json()
            text = _extract_message_text(payload)
        except (ValueError, KeyError, TypeError) as exc:
            raise GatewayResponseError(f"unusable completion body: {exc}",
                                       backend_label=self.label) from exc
        return CompletionResult(raw_text=text, inference_duration_ms=duration,
                                backend_label=self.label)


def _extract_message_text(payload: dict) -> str:
    # OpenAI-style first, then the flatter shape some local runtimes return.
    if "choices" in payload:
        return payload["choices"][0]["message"]["content"]
    if "message" in payload:
        return payload["message"]["content"]
    if "response" in payload:
        return payload["response"]
    raise KeyError("no message content in completion payload")


def make_backend(config: BackendConfig):
    if config.kind == KIND_SCRIPTED:
        return ScriptedBackend(config.script_path)
    return RemoteBackend(config)


def complete(prompt: str, config: BackendConfig, system: Optional[str] = None) -> CompletionResult:
    """One-shot helper: build the backend for config and run a single completion."""
    return make_backend(config).complete(prompt, system=system)
