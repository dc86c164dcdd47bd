"""Chat-completion gateway, prompt templates and the transcript replay backend."""

from __future__ import annotations

import hashlib
import json
import logging
import re
import threading
import time
from collections import defaultdict, deque
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Mapping, NamedTuple, Optional

import httpx

from .errors import MissingPlaceholder, ProviderRejected, ReplayMiss, TranscriptError, TransportExhausted, UnknownTemplate

log = logging.getLogger(__name__)

TEMPLATE_IDS = (
    "input_filter", "test_update", "error_analyze", "coverage_analyze",
    "mutation_analyze", "retrieval_query", "retrieval_filter", "module_select",
)

_PLACEHOLDER = re.compile(r"\{\{\s*([A-Za-z_][A-Za-z0-9_]*)\s*\}\}")


@dataclass(frozen=True)
class PromptTemplate:
    id: str
    body: str
    required_placeholders: frozenset

    @classmethod
    def from_body(cls, template_id: str, body: str) -> "PromptTemplate":
        return cls(template_id, body, frozenset(_PLACEHOLDER.findall(body)))

    def render(self, bindings: Mapping[str, str]) -> str:
        for name in sorted(self.required_placeholders):
            if name not in bindings:
                raise MissingPlaceholder(self.id, name)
        # single pass, so bound values are never rescanned for markers
        return _PLACEHOLDER.sub(lambda m: str(bindings[m.group(1)]), self.body)


class TemplateCatalog:
    """Prompt templates loaded from ``<id>.txt`` files (bundled by default)."""

    def __init__(self, directory: Optional[Path] = None):
        self.templates: dict[str, PromptTemplate] = {}
        if directory is None:
            root = resources.files("testmend") / "prompts"
            for tid in TEMPLATE_IDS:
                self.templates[tid] = PromptTemplate.from_body(tid, (root / f"{tid}.txt").read_text(encoding="utf-8"))
        else:
            for path in sorted(Path(directory).glob("*.txt")):
                self.templates[path.stem] = PromptTemplate.from_body(path.stem, path.read_text(encoding="utf-8"))

    def __getitem__(self, template_id: str) -> PromptTemplate:
        try:
            return self.templates[template_id]
        except KeyError:
            raise UnknownTemplate(template_id) from None


_DEFAULT_CATALOG: Optional[TemplateCatalog] = None


def default_catalog() -> TemplateCatalog:
    global _DEFAULT_CATALOG
    if _DEFAULT_CATALOG is None:
        _DEFAULT_CATALOG = TemplateCatalog()
    return _DEFAULT_CATALOG


def render(template_id: str, bindings: Mapping[str, str], catalog: Optional[TemplateCatalog] = None) -> str:
    return (catalog or default_catalog())[template_id].render(bindings)


def binding_digest(template: PromptTemplate, bindings: Mapping[str, str]) -> str:
    used = {k: str(bindings[k]) for k in sorted(template.required_placeholders)}
    payload = json.dumps(used, sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def text_digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


class RenderedPrompt(NamedTuple):
    template_id: str
    binding_digest: str
    text: str


@dataclass(frozen=True)
class ChatConfig:
    model_id: str = "gpt-4.1"
    temperature: float = 0.0
    max_output_tokens: int = 4096
    endpoint: str = "https://api.openai.com/v1/chat/completions"
    credential: str = ""  # resolved secret, never serialized into traces
    max_attempts: int = 3
    backoff_base_s: float = 1.0
    timeout_s: float = 120.0


class ChatBackend:
    def complete(self, prompt: RenderedPrompt, config: ChatConfig) -> str:
        raise NotImplementedError


class HttpChatBackend(ChatBackend):
    """OpenAI-compatible chat-completions client.

    Transport errors and 5xx responses are retried with exponential backoff
    (``backoff_base_s * 2**attempt``); any 4xx is terminal.
    """

    def __init__(self, client: Optional[httpx.Client] = None, sleep: Callable[[float], None] = time.sleep):
        self.client = client or httpx.Client()
        self.sleep = sleep
        self.attempts = 0

    def complete(self, prompt, config):
        payload = {
            "model": config.model_id,
            "messages": [{"role": "user", "content": prompt.text}],
            "temperature": config.temperature,
            "max_tokens": config.max_output_tokens,
        }
        headers = {"Authorization": f"Bearer {config.credential}"} if config.credential else {}
        last = None
        for attempt in range(config.max_attempts):
            self.attempts += 1
            try:
                resp = self.client.post(config.endpoint, json=payload, headers=headers, timeout=config.timeout_s)
            except httpx.TransportError as exc:
                last = exc
            else:
                if resp.status_code < 400:
                    data = resp.json()
                    usage = data.get("usage")
                    if usage:
                        log.info("%s token usage: %s", prompt.template_id, usage)
                    return data["choices"][0]["message"]["content"]
                if resp.status_code < 500:
                    raise ProviderRejected(resp.status_code, resp.text)
                last = ProviderRejected(resp.status_code, resp.text)
            if attempt + 1 < config.max_attempts:
                self.sleep(config.backoff_base_s * 2 ** attempt)
        raise TransportExhausted(f"gave up after {config.max_attempts} attempts: {last}")


class ReplayBackend(ChatBackend):
    """Answers prompts from a transcript.

    Records are matched on ``(template_id, binding_digest)``; a digest of
    ``"*"`` matches any prompt of that template. Duplicate keys are served in
    order. With ``strict=True`` the digest is taken over the rendered prompt
    bytes instead of the bindings.
    """

    WILDCARD = "*"

    def __init__(self, records=(), strict: bool = False):
        self.strict = strict
        self._queues: dict[tuple[str, str], deque] = defaultdict(deque)
        self._lock = threading.Lock()
        for rec in records:
            self.add(rec["template_id"], rec["binding_digest"], rec["response_text"])

    def add(self, template_id: str, digest: str, response: str) -> None:
        self._queues[(template_id, digest)].append(response)

    def complete(self, prompt, config):
        digest = text_digest(prompt.text) if self.strict else prompt.binding_digest
        with self._lock:
            for key in ((prompt.template_id, digest), (prompt.template_id, self.WILDCARD)):
                queue = self._queues.get(key)
                if queue:
                    return queue.popleft()
        raise ReplayMiss(f"no transcript entry for {prompt.template_id} / {digest[:12]}")

    def remaining(self) -> int:
        return sum(len(q) for q in self._queues.values())


def load_transcript(path, strict: bool = False) -> ReplayBackend:
    """Read a newline-delimited JSON transcript into a replay backend."""
    records = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise TranscriptError(path, lineno, f"invalid JSON: {exc.msg}") from None
            if not isinstance(rec, dict):
                raise TranscriptError(path, lineno, "record is not an object")
            missing = [k for k in ("template_id", "binding_digest", "response_text") if not isinstance(rec.get(k), str)]
            if missing:
                raise TranscriptError(path, lineno, f"missing or non-string field(s): {', '.join(missing)}")
            records.append(rec)
    return ReplayBackend(records, strict=strict)


class RecordingBackend(ChatBackend):
    """Forwards to another backend and keeps transcript records of each exchange."""

    def __init__(self, inner: ChatBackend, strict: bool = False):
        self.inner = inner
        self.strict = strict
        self.records: list[dict] = []

    def complete(self, prompt, config):
        response = self.inner.complete(prompt, config)
        digest = text_digest(prompt.text) if self.strict else prompt.binding_digest
        self.records.append({"template_id": prompt.template_id, "binding_digest": digest,
                             "response_text": response})
        return response

    def dump(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for rec in self.records:
                fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


@dataclass
class LLMGateway:
    """Renders a template and sends it to the configured backend."""

    backend: ChatBackend
    config: ChatConfig = field(default_factory=ChatConfig)
    catalog: TemplateCatalog = field(default_factory=default_catalog)
    calls: list = field(default_factory=list)

    def prompt(self, template_id: str, bindings: Mapping[str, str]) -> RenderedPrompt:
        template = self.catalog[template_id]
        return RenderedPrompt(template_id, binding_digest(template, bindings), template.render(bindings))

    def ask(self, template_id: str, **bindings) -> str:
        prompt = self.prompt(template_id, bindings)
        self.calls.append(template_id)
        log.debug("llm call %s (%s)", template_id, prompt.binding_digest[:12])
        return self.backend.complete(prompt, self.config)
