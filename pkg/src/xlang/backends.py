"""Generator backends: anything that turns a PromptBundle into text.

Interchangeable by contract: an HTTP chat-completion client for real
models, a replay backend keyed by prompt hash for fixtures, a recording
wrapper to capture sessions into replay files, and a deterministic
template stub that synthesizes minimal valid completions offline."""

from __future__ import annotations

import os
import re
from dataclasses import dataclass
from pathlib import Path

import httpx

from .diagnostics import BackendFailure, BackendUnavailable
from .prompts import Label, PromptBundle


@dataclass(frozen=True)
class CompletionLimits:
    max_tokens: int = 2048
    temperature: float = 0.0
    seed: int = 0


class HttpChatBackend:
    """JSON chat protocol: POST {messages, max_tokens, temperature, seed}
    -> {content}.  Endpoint and key come from configuration, never code."""

    def __init__(
        self,
        endpoint: str,
        api_key_env: str | None = None,
        model: str | None = None,
        client: httpx.Client | None = None,
        timeout: float = 120.0,
    ):
        self.endpoint = endpoint
        self.api_key_env = api_key_env
        self.model = model
        self.client = client or httpx.Client(timeout=timeout)

    @property
    def name(self) -> str:
        return f"http:{self.endpoint}" + (f"#{self.model}" if self.model else "")

    def complete(self, bundle: PromptBundle, limits: CompletionLimits) -> str:
        payload = {
            "messages": bundle.to_wire(),
            "max_tokens": limits.max_tokens,
            "temperature": limits.temperature,
            "seed": limits.seed,
        }
        if self.model:
            payload["model"] = self.model
        headers = {}
        if self.api_key_env:
            key = os.environ.get(self.api_key_env, "")
            if key:
                headers["Authorization"] = f"Bearer {key}"
        try:
            response = self.client.post(self.endpoint, json=payload, headers=headers)
            response.raise_for_status()
        except httpx.HTTPError as exc:
            raise BackendUnavailable(f"generator backend: {exc}") from exc
        body = response.json()
        if "content" not in body:
            raise BackendFailure("generator backend reply has no `content` field")
        return body["content"]


class ReplayBackend:
    """Deterministic stub: responses keyed by prompt digest.

    Directory layout is one `<digest>.txt` per recorded prompt; an
    in-memory mapping works too.
    """

    def __init__(self, responses: dict[str, str] | None = None, directory: str | Path | None = None):
        self.responses = dict(responses or {})
        self.directory = Path(directory) if directory else None
        if self.directory is not None and self.directory.is_dir():
            for path in sorted(self.directory.glob("*.txt")):
                self.responses.setdefault(path.stem, path.read_text(encoding="utf-8"))

    @property
    def name(self) -> str:
        return f"replay:{self.directory}" if self.directory else "replay:inline"

    def complete(self, bundle: PromptBundle, limits: CompletionLimits) -> str:
        digest = bundle.digest()
        try:
            return self.responses[digest]
        except KeyError:
            labels = [m.label.value for m in bundle.messages]
            raise BackendFailure(
                f"no replay entry for prompt {digest[:12]}… (labels: {labels})"
            ) from None


class RecordingBackend:
    """Wraps another backend and captures prompt->response pairs so real
    sessions become replay fixtures."""

    def __init__(self, inner):
        self.inner = inner
        self.records: dict[str, str] = {}

    @property
    def name(self) -> str:
        return f"recording({self.inner.name})"

    def complete(self, bundle: PromptBundle, limits: CompletionLimits) -> str:
        text = self.inner.complete(bundle, limits)
        self.records[bundle.digest()] = text
        return text

    def save(self, directory: str | Path) -> Path:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for digest in sorted(self.records):
            (directory / f"{digest}.txt").write_text(self.records[digest], encoding="utf-8")
        return directory


_FUNCTION_NAME_RE = re.compile(r"named `([A-Za-z_][A-Za-z0-9_]*)`")


class TemplateStubBackend:
    """Offline synthesizer: inspects the bundle and emits the smallest
    valid completion, so the whole pipeline can run with no fixtures and
    no network."""

    name = "template-stub"

    def complete(self, bundle: PromptBundle, limits: CompletionLimits) -> str:
        task = bundle.message(Label.TASK)
        intro = bundle.message(Label.INTRODUCTION)
        if task is not None and "connection relationships" in task.content:
            return ""  # no connections inferred
        if task is not None and "function class model" in task.content:
            match = _FUNCTION_NAME_RE.search(task.content)
            name = match.group(1) if match else "helper"
            return (
                f"function {name}\n"
                "parameter:\n"
                "  Real x;\n"
                "body:\n"
                "  return x;\n"
                "end;\n"
            )
        if intro is not None and "keyword Equation" in intro.content:
            return "value:\n  Real v = 0;\nequation:\n  v = 0;\n"
        if intro is not None and "keyword State" in intro.content:
            return (
                "value:\n"
                "  Real v = 0;\n"
                "state:\n"
                "  initial state Idle\n"
                "    when entry() then\n"
                "      statehold(inf);\n"
                "    end;\n"
                "  end;\n"
            )
        if task is not None and "simulation model" in task.content:
            return "continuous Generated\nvalue:\n  Real v = 0;\nequation:\n  v = 0;\nend;\n"
        return ""


class ScriptedBackend:
    """Test helper: answers by inspecting the bundle against a script of
    (predicate, response) pairs; deterministic and order-insensitive."""

    name = "scripted"

    def __init__(self, rules):
        self.rules = list(rules)

    def complete(self, bundle: PromptBundle, limits: CompletionLimits) -> str:
        for predicate, response in self.rules:
            if predicate(bundle):
                return response
        raise BackendFailure("scripted backend: no rule matched the prompt")


def make_backend(kind: str, *, replay: dict[str, str] | None = None, replay_dir=None,
                 endpoint: str | None = None, api_key_env: str | None = None,
                 model: str | None = None):
    """Backend factory used by the service and CLI configuration."""
    if kind == "replay":
        return ReplayBackend(replay, replay_dir)
    if kind == "template-stub":
        return TemplateStubBackend()
    if kind == "http":
        if not endpoint:
            raise BackendFailure("http backend needs an endpoint")
        return HttpChatBackend(endpoint, api_key_env=api_key_env, model=model)
    raise BackendFailure(f"unknown backend kind {kind!r}")
