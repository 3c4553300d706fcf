"""Chat-model gateway: live HTTP, transcript replay, or scripted mock.

Every response is booked in a ``UsageLedger`` under (phase, purpose), where
phase separates one-off offline simulation cost from per-query runtime cost.
"""

from __future__ import annotations

import base64
import hashlib
import json
import logging
import math
import os
import re
import threading
import time
from collections import deque
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import httpx

log = logging.getLogger(__name__)

PURPOSES = ("taskgen", "codegen", "validator", "rag", "judge")
PHASES = ("offline", "runtime")
MODES = ("live", "replay", "mock")
PAYLOAD_KEYS = frozenset({"init_code", "code", "code_name"})


class GatewayError(RuntimeError):
    pass


class TranscriptMiss(GatewayError):
    pass


class MockExhausted(GatewayError):
    pass


class PayloadError(ValueError):
    """Model output that cannot be used; a failed trial, not a crash."""


@dataclass(frozen=True)
class Message:
    role: str
    content: str
    images: tuple[str, ...] = ()


@dataclass(frozen=True)
class ChatRequest:
    messages: tuple[Message, ...]
    purpose: str
    model_id: str = "mock"
    temperature: float = 0.0
    max_output_tokens: int = 2048

    def __post_init__(self) -> None:
        if self.purpose not in PURPOSES:
            raise ValueError(f"unknown purpose {self.purpose!r}")
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if not any(m.role == "user" for m in self.messages):
            raise ValueError("a request needs at least one user message")

    @property
    def system(self) -> str:
        return "\n".join(m.content for m in self.messages if m.role == "system")

    @property
    def user(self) -> str:
        return "\n".join(m.content for m in self.messages if m.role == "user")

    def digest(self) -> str:
        """Replay key over (model_id, messages, temperature)."""
        body = {
            "model_id": self.model_id,
            "messages": [asdict(m) for m in self.messages],
            "temperature": self.temperature,
        }
        blob = json.dumps(body, sort_keys=True, ensure_ascii=False).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()

    def echo(self) -> dict:
        return {
            "model_id": self.model_id,
            "purpose": self.purpose,
            "temperature": self.temperature,
            "messages": [asdict(m) for m in self.messages],
        }


def make_request(system: str, user: str, purpose: str, model_id: str = "mock", temperature: float = 0.0,
                 images: Sequence[str] = (), max_output_tokens: int = 2048) -> ChatRequest:
    msgs = []
    if system:
        msgs.append(Message("system", system))
    msgs.append(Message("user", user, tuple(images)))
    return ChatRequest(tuple(msgs), purpose, model_id, temperature, max_output_tokens)


@dataclass(frozen=True)
class ChatResponse:
    text: str
    prompt_tokens: int = 0
    completion_tokens: int = 0
    latency: float = 0.0

    @property
    def total_tokens(self) -> int:
        return self.prompt_tokens + self.completion_tokens


def count_tokens(text: str) -> int:
    """Rough token estimate (4 characters per token) for mock responses."""
    return math.ceil(len(text) / 4) if text else 0


@dataclass
class UsageTotals:
    requests: int = 0
    prompt_tokens: int = 0
    completion_tokens: int = 0
    latency: float = 0.0

    @property
    def tokens(self) -> int:
        return self.prompt_tokens + self.completion_tokens

    def add(self, other: "UsageTotals | ChatResponse") -> None:
        if isinstance(other, ChatResponse):
            self.requests += 1
            self.prompt_tokens += other.prompt_tokens
            self.completion_tokens += other.completion_tokens
            self.latency += other.latency
        else:
            self.requests += other.requests
            self.prompt_tokens += other.prompt_tokens
            self.completion_tokens += other.completion_tokens
            self.latency += other.latency


class UsageLedger:
    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._cells: dict[tuple[str, str], UsageTotals] = {}
        self.responses: list[tuple[str, str, ChatResponse]] = []

    def record(self, phase: str, purpose: str, response: ChatResponse) -> None:
        if phase not in PHASES:
            raise ValueError(f"unknown phase {phase!r}")
        with self._lock:
            self._cells.setdefault((phase, purpose), UsageTotals()).add(response)
            self.responses.append((phase, purpose, response))

    def totals(self, phase: str | None = None, purpose: str | None = None) -> UsageTotals:
        out = UsageTotals()
        with self._lock:
            for (ph, pu), cell in self._cells.items():
                if (phase is None or ph == phase) and (purpose is None or pu == purpose):
                    out.add(cell)
        return out

    def by_purpose(self, phase: str) -> dict[str, UsageTotals]:
        with self._lock:
            return {pu: UsageTotals(**asdict(c)) for (ph, pu), c in self._cells.items() if ph == phase}

    def snapshot(self) -> dict:
        with self._lock:
            return {f"{ph}/{pu}": asdict(c) for (ph, pu), c in sorted(self._cells.items())}


class TranscriptStore:
    """JSONL store of (digest, request echo, response), one file per run."""

    def __init__(self, path: Path | str | None = None):
        self.path = Path(path) if path else None
        self._entries: dict[str, dict] = {}
        self._lock = threading.Lock()
        if self.path and self.path.exists():
            with self.path.open(encoding="utf-8") as fh:
                for line in fh:
                    if line.strip():
                        rec = json.loads(line)
                        self._entries[rec["digest"]] = rec

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, digest: str) -> bool:
        return digest in self._entries

    def get(self, digest: str) -> ChatResponse:
        rec = self._entries.get(digest)
        if rec is None:
            raise TranscriptMiss(f"transcript miss for request {digest[:12]}")
        return ChatResponse(**rec["response"])

    def put(self, request: ChatRequest, response: ChatResponse) -> None:
        digest = request.digest()
        with self._lock:
            if digest in self._entries:
                return
            rec = {"digest": digest, "request": request.echo(), "response": asdict(response)}
            self._entries[digest] = rec
            if self.path:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with self.path.open("a", encoding="utf-8") as fh:
                    fh.write(json.dumps(rec, ensure_ascii=False) + "\n")


Responder = Callable[[ChatRequest], "str | ChatResponse"]


class ScriptedResponder:
    """Hands out canned replies in order, optionally per purpose.

    Every request seen is kept in ``captured`` for prompt inspection.
    """

    def __init__(self, replies: Iterable[str] | dict[str, Iterable[str]] = ()):
        if isinstance(replies, dict):
            self._queues = {k: deque(v) for k, v in replies.items()}
        else:
            self._queues = {None: deque(replies)}
        self.captured: list[ChatRequest] = []

    def push(self, text: str, purpose: str | None = None) -> None:
        self._queues.setdefault(purpose, deque()).append(text)

    def __call__(self, request: ChatRequest) -> str:
        self.captured.append(request)
        q = self._queues.get(request.purpose)
        if q is None:
            q = self._queues.get(None)
        if not q:
            raise MockExhausted(f"no scripted reply left for purpose {request.purpose}")
        return q.popleft()


def _content_parts(msg: Message) -> str | list[dict]:
    if not msg.images:
        return msg.content
    parts: list[dict] = [{"type": "text", "text": msg.content}]
    for art in msg.images:
        p = Path(art)
        if len(art) < 4096 and p.suffix.lower() in (".png", ".jpg", ".jpeg") and p.exists():
            data = base64.b64encode(p.read_bytes()).decode("ascii")
            mime = "png" if p.suffix.lower() == ".png" else "jpeg"
            parts.append({"type": "image_url", "image_url": {"url": f"data:image/{mime};base64,{data}"}})
        else:
            parts.append({"type": "text", "text": art})
    return parts


class Gateway:
    """Uniform chat access with accounting.

    ``mode`` is one of live, replay, mock. In live and mock modes responses
    can be recorded to a transcript for later replay.
    """

    def __init__(self, mode: str = "mock", *, responder: Responder | None = None,
                 transcript: TranscriptStore | None = None, record: bool = True,
                 endpoint: str | None = None, model_id: str = "mock", api_key_env: str = "LLM_API_KEY",
                 client: httpx.Client | None = None, max_parallel: int = 4, retries: int = 3,
                 backoff: float = 0.5, timeout: float = 120.0, sleep: Callable[[float], None] = time.sleep,
                 ledger: UsageLedger | None = None):
        if mode not in MODES:
            raise ValueError(f"unknown gateway mode {mode!r}")
        if mode == "live" and not endpoint:
            raise GatewayError("live mode needs llm.endpoint")
        if mode == "replay" and transcript is None:
            raise GatewayError("replay mode needs a transcript store")
        if mode == "mock" and responder is None:
            raise GatewayError("mock mode needs a responder")
        self.mode = mode
        self.responder = responder
        self.transcript = transcript
        self.record = record
        self.endpoint = endpoint.rstrip("/") if endpoint else None
        self.model_id = model_id
        self.api_key_env = api_key_env
        self._client = client
        self._timeout = timeout
        self.retries = retries
        self.backoff = backoff
        self._sleep = sleep
        self._slots = threading.BoundedSemaphore(max(1, max_parallel))
        self.ledger = ledger or UsageLedger()
        self.network_calls = 0

    def complete(self, request: ChatRequest, phase: str = "offline") -> ChatResponse:
        with self._slots:
            if self.mode == "replay":
                resp = self.transcript.get(request.digest())
            elif self.mode == "mock":
                resp = self._mock(request)
            else:
                resp = self._live(request)
        if self.transcript is not None and self.record and self.mode != "replay":
            self.transcript.put(request, resp)
        self.ledger.record(phase, request.purpose, resp)
        return resp

    def chat(self, system: str, user: str, purpose: str, phase: str = "offline",
             images: Sequence[str] = (), temperature: float = 0.0) -> ChatResponse:
        req = make_request(system, user, purpose, self.model_id, temperature, images)
        return self.complete(req, phase)

    def _mock(self, request: ChatRequest) -> ChatResponse:
        t0 = time.perf_counter()
        out = self.responder(request)
        if isinstance(out, ChatResponse):
            return out
        prompt = sum(count_tokens(m.content) + sum(count_tokens(i) for i in m.images) for m in request.messages)
        return ChatResponse(out, prompt, count_tokens(out), time.perf_counter() - t0)

    def _live(self, request: ChatRequest) -> ChatResponse:
        if self._client is None:
            self._client = httpx.Client(timeout=self._timeout)
        key = os.environ.get(self.api_key_env)
        headers = {"Authorization": f"Bearer {key}"} if key else {}
        body = {
            "model": request.model_id,
            "messages": [{"role": m.role, "content": _content_parts(m)} for m in request.messages],
            "temperature": request.temperature,
            "max_tokens": request.max_output_tokens,
        }
        last: Exception | None = None
        for attempt in range(self.retries):
            t0 = time.perf_counter()
            try:
                self.network_calls += 1
                r = self._client.post(f"{self.endpoint}/chat/completions", json=body, headers=headers)
                r.raise_for_status()
                data = r.json()
                text = data["choices"][0]["message"]["content"] or ""
                usage = data.get("usage") or {}
                return ChatResponse(text, int(usage.get("prompt_tokens", 0)),
                                    int(usage.get("completion_tokens", 0)), time.perf_counter() - t0)
            except (httpx.HTTPError, KeyError, IndexError, ValueError) as exc:
                last = exc
                log.warning("chat request failed (attempt %d/%d): %s", attempt + 1, self.retries, exc)
                if attempt + 1 < self.retries:
                    self._sleep(self.backoff * 2**attempt)
        raise GatewayError(f"endpoint failure after {self.retries} attempts: {last}")


_FENCE = re.compile(r"^\s*```[A-Za-z0-9_+-]*[ \t]*\n(.*?)\n?```\s*$", re.S)


def strip_fence(text: str) -> str:
    m = _FENCE.match(text)
    return m.group(1) if m else text.strip()


def parse_json_object(text: str) -> dict:
    body = strip_fence(text)
    try:
        obj = json.loads(body)
    except json.JSONDecodeError as exc:
        raise PayloadError(f"unparsable model output: {exc.msg}") from exc
    if not isinstance(obj, dict):
        raise PayloadError("model output is not an object")
    return obj


@dataclass(frozen=True)
class GenerationPayload:
    init_code: str
    code: str
    code_name: str

    @property
    def infeasible(self) -> bool:
        return not self.code.strip()

    def combined(self) -> str:
        return f"{self.init_code}\n{self.code}" if self.init_code else self.code


def parse_generation_payload(text: str) -> GenerationPayload:
    obj = parse_json_object(text)
    keys = set(obj)
    if not PAYLOAD_KEYS <= keys:
        raise PayloadError(f"missing keys: {', '.join(sorted(PAYLOAD_KEYS - keys))}")
    if keys - PAYLOAD_KEYS:
        raise PayloadError(f"unexpected keys: {', '.join(sorted(keys - PAYLOAD_KEYS))}")
    if not all(isinstance(obj[k], str) for k in PAYLOAD_KEYS):
        raise PayloadError("payload fields must be strings")
    return GenerationPayload(obj["init_code"], obj["code"], obj["code_name"])
