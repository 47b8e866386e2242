"""Chat-completion gateway with live, record, and replay modes plus usage accounting."""

from __future__ import annotations

import datetime as _dt
import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Optional, Protocol, Sequence

STAGES = ("categorize", "decompose", "instantiate", "generate", "correct", "summarize", "paraphrase", "judge")
MODES = ("live", "record", "replay")
ROLES = ("system", "user", "assistant")
DEFAULT_MODEL = "gpt-4o-mini"


class LLMError(RuntimeError):
    pass


class TransportError(LLMError):
    pass


class ReplayMiss(LLMError):
    def __init__(self, fingerprint: str):
        self.fingerprint = fingerprint
        super().__init__(f"no cassette entry for request fingerprint {fingerprint}")


class NetworkDenied(LLMError):
    pass


@dataclass(frozen=True)
class Message:
    role: str
    content: str

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}")


@dataclass(frozen=True)
class ChatRequest:
    messages: tuple[Message, ...]
    model: str = DEFAULT_MODEL
    temperature: float = 0.0
    max_tokens: int = 1024

    def __post_init__(self):
        if not self.messages:
            raise ValueError("a chat request needs at least one message")
        first = next((m for m in self.messages if m.role != "system"), None)
        if first is not None and first.role != "user":
            raise ValueError("the first non-system message must come from the user")

    @classmethod
    def of(cls, user: str, system: Optional[str] = None, **kw) -> "ChatRequest":
        msgs = ([Message("system", system)] if system else []) + [Message("user", user)]
        return cls(tuple(msgs), **kw)

    @property
    def user_text(self) -> str:
        return "\n".join(m.content for m in self.messages if m.role == "user")


@dataclass(frozen=True)
class TokenUsage:
    prompt_tokens: int = 0
    completion_tokens: int = 0
    total_tokens: int = 0

    def __post_init__(self):
        if min(self.prompt_tokens, self.completion_tokens, self.total_tokens) < 0:
            raise ValueError("token counts must be non-negative")
        if self.total_tokens != self.prompt_tokens + self.completion_tokens:
            raise ValueError("total_tokens must equal prompt_tokens + completion_tokens")

    @classmethod
    def of(cls, prompt: int, completion: int) -> "TokenUsage":
        return cls(prompt, completion, prompt + completion)

    def __add__(self, other: "TokenUsage") -> "TokenUsage":
        return TokenUsage.of(self.prompt_tokens + other.prompt_tokens,
                             self.completion_tokens + other.completion_tokens)

    def to_json(self) -> dict:
        return {"prompt_tokens": self.prompt_tokens, "completion_tokens": self.completion_tokens,
                "total_tokens": self.total_tokens}

    @classmethod
    def from_json(cls, d: Mapping) -> "TokenUsage":
        return cls.of(int(d.get("prompt_tokens", 0)), int(d.get("completion_tokens", 0)))


@dataclass(frozen=True)
class ChatResponse:
    content: str
    usage: TokenUsage
    latency: float = 0.0


def _canon(text: str) -> str:
    return " ".join(text.split())


def fingerprint(request: ChatRequest) -> str:
    """Stable hash of the model plus whitespace-normalized messages."""
    payload = {"model": request.model,
               "messages": [[m.role, _canon(m.content)] for m in request.messages]}
    blob = json.dumps(payload, sort_keys=True, ensure_ascii=False, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


# -- cassettes -------------------------------------------------------------------


@dataclass(frozen=True)
class CassetteEntry:
    fingerprint: str
    model: str
    messages: tuple[Message, ...]
    content: str
    usage: TokenUsage
    latency: float = 0.0
    recorded_at: str = ""

    def to_json(self) -> dict:
        return {
            "fingerprint": self.fingerprint,
            "model": self.model,
            "messages": [{"role": m.role, "content": m.content} for m in self.messages],
            "content": self.content,
            "usage": self.usage.to_json(),
            "latency": self.latency,
            "recorded_at": self.recorded_at,
        }

    @classmethod
    def from_json(cls, d: Mapping) -> "CassetteEntry":
        return cls(d["fingerprint"], d["model"], tuple(Message(m["role"], m["content"]) for m in d["messages"]),
                   d["content"], TokenUsage.from_json(d["usage"]), float(d.get("latency", 0.0)),
                   d.get("recorded_at", ""))


class Cassette:
    """Fingerprint-keyed store of recorded exchanges, one JSON record per line."""

    def __init__(self, entries: Iterable[CassetteEntry] = (), path: Optional[str] = None):
        self._lock = threading.Lock()
        self._entries: dict[str, CassetteEntry] = {}
        self.path = path
        for e in entries:
            self._entries.setdefault(e.fingerprint, e)

    @classmethod
    def load(cls, path: str) -> "Cassette":
        entries = []
        if os.path.exists(path):
            with open(path, encoding="utf-8") as fh:
                for lineno, line in enumerate(fh, 1):
                    if not line.strip():
                        continue
                    try:
                        entries.append(CassetteEntry.from_json(json.loads(line)))
                    except (ValueError, KeyError) as exc:
                        raise LLMError(f"{path}:{lineno}: malformed cassette record ({exc})") from None
        return cls(entries, path)

    def __len__(self) -> int:
        return len(self._entries)

    def __contains__(self, fp: str) -> bool:
        return fp in self._entries

    def get(self, fp: str) -> Optional[CassetteEntry]:
        with self._lock:
            return self._entries.get(fp)

    def add(self, entry: CassetteEntry) -> None:
        with self._lock:
            self._entries.setdefault(entry.fingerprint, entry)

    def entries(self) -> list[CassetteEntry]:
        with self._lock:
            return list(self._entries.values())

    def dumps(self) -> str:
        return "".join(json.dumps(e.to_json(), ensure_ascii=False, sort_keys=True) + "\n" for e in self.entries())

    def save(self, path: Optional[str] = None) -> None:
        target = path or self.path
        if target is None:
            raise ValueError("cassette has no path")
        os.makedirs(os.path.dirname(os.path.abspath(target)), exist_ok=True)
        with open(target, "w", encoding="utf-8") as fh:
            fh.write(self.dumps())


# -- backends --------------------------------------------------------------------


class Backend(Protocol):
    def send(self, request: ChatRequest) -> ChatResponse: ...


def count_tokens(text: str) -> int:
    """Whitespace token count used by offline backends."""
    return len(text.split())


class ScriptedBackend:
    """Offline backend that answers from a Python callable.

    Usage is whitespace-token counts; latency is a deterministic function of
    the completion length so recorded runs are stable.
    """

    def __init__(self, responder: Callable[[ChatRequest], str], seconds_per_token: float = 0.002):
        self.responder = responder
        self.seconds_per_token = seconds_per_token
        self.calls = 0
        self._lock = threading.Lock()

    def send(self, request: ChatRequest) -> ChatResponse:
        with self._lock:
            self.calls += 1
        content = self.responder(request)
        prompt = sum(count_tokens(m.content) for m in request.messages)
        completion = count_tokens(content)
        return ChatResponse(content, TokenUsage.of(prompt, completion),
                            round(0.05 + completion * self.seconds_per_token, 6))


class DenyNetworkBackend:
    """Backend that fails on any use; pairs with replay mode to prove no network access."""

    def __init__(self):
        self.attempts = 0

    def send(self, request: ChatRequest) -> ChatResponse:
        self.attempts += 1
        raise NetworkDenied("network access is disabled for this gateway")


class HttpBackend:
    """OpenAI-compatible ``/chat/completions`` client."""

    def __init__(self, base_url: Optional[str] = None, api_key: Optional[str] = None,
                 timeout: float = 60.0, transport_retries: int = 2, backoff: float = 0.5, transport=None):
        import httpx

        self.base_url = (base_url or os.environ.get("LLM_BASE_URL") or "").rstrip("/")
        if not self.base_url:
            raise LLMError("no LLM endpoint configured (set LLM_BASE_URL)")
        self.api_key = api_key if api_key is not None else os.environ.get("LLM_API_KEY", "")
        self.transport_retries = transport_retries
        self.backoff = backoff
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        self._client = httpx.Client(timeout=timeout, headers=headers, transport=transport)
        self._httpx = httpx

    def send(self, request: ChatRequest) -> ChatResponse:
        body = {
            "model": request.model,
            "messages": [{"role": m.role, "content": m.content} for m in request.messages],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        }
        url = self.base_url + "/chat/completions"
        last: Optional[Exception] = None
        for attempt in range(self.transport_retries + 1):
            if attempt:
                time.sleep(self.backoff * 2 ** (attempt - 1))
            start = time.monotonic()
            try:
                resp = self._client.post(url, json=body)
            except self._httpx.TransportError as exc:
                last = exc
                continue
            latency = time.monotonic() - start
            if resp.status_code != 200:
                raise LLMError(f"LLM endpoint returned HTTP {resp.status_code}: {resp.text[:500]}")
            data = resp.json()
            try:
                content = data["choices"][0]["message"]["content"] or ""
            except (KeyError, IndexError, TypeError):
                raise LLMError(f"unexpected response shape: {str(data)[:500]}") from None
            usage = data.get("usage") or {}
            return ChatResponse(content, TokenUsage.of(int(usage.get("prompt_tokens", 0)),
                                                       int(usage.get("completion_tokens", 0))), latency)
        raise TransportError(f"transport failed after {self.transport_retries + 1} attempts: {last}")


# -- accounting ------------------------------------------------------------------


@dataclass(frozen=True)
class CallRecord:
    stage: str
    fingerprint: str
    usage: TokenUsage
    latency: float


class UsageLedger:
    """Thread-safe log of calls. ``session()`` gives a child whose calls also reach the parent."""

    def __init__(self, parent: Optional["UsageLedger"] = None):
        self._lock = threading.Lock()
        self._records: list[CallRecord] = []
        self.parent = parent

    def add(self, record: CallRecord) -> None:
        with self._lock:
            self._records.append(record)
        if self.parent is not None:
            self.parent.add(record)

    def session(self) -> "UsageLedger":
        return UsageLedger(self)

    @property
    def records(self) -> list[CallRecord]:
        with self._lock:
            return list(self._records)

    def calls(self, stage: Optional[str] = None) -> int:
        return sum(1 for r in self.records if stage is None or r.stage == stage)


@dataclass(frozen=True)
class StageTotals:
    calls: int = 0
    usage: TokenUsage = TokenUsage()
    latency: float = 0.0

    def to_json(self) -> dict:
        return {"calls": self.calls, **self.usage.to_json(), "latency": round(self.latency, 6)}


@dataclass(frozen=True)
class UsageReport:
    total: StageTotals
    per_stage: Mapping[str, StageTotals]

    def to_json(self) -> dict:
        return {"total": self.total.to_json(), "per_stage": {k: v.to_json() for k, v in self.per_stage.items()}}


def usage_report(run) -> UsageReport:
    """Totals and per-stage breakdown of a ledger (or any iterable of call records)."""
    records: Sequence[CallRecord] = run.records if isinstance(run, UsageLedger) else list(run)
    per = {s: [0, TokenUsage(), 0.0] for s in STAGES}
    for r in records:
        slot = per.setdefault(r.stage, [0, TokenUsage(), 0.0])
        slot[0] += 1
        slot[1] = slot[1] + r.usage
        slot[2] += r.latency
    per_stage = {k: StageTotals(c, u, lat) for k, (c, u, lat) in per.items()}
    # the total is summed straight from the records, not from per_stage, so the two can be cross-checked
    usage = TokenUsage()
    for r in records:
        usage = usage + r.usage
    latency = sum(r.latency for r in records)
    return UsageReport(StageTotals(len(records), usage, latency), per_stage)


# -- gateway -----------------------------------------------------------------------


class LLMGateway:
    """Routes requests to a backend or cassette according to ``mode`` and records usage."""

    def __init__(self, backend: Optional[Backend], mode: str = "live", cassette: Optional[Cassette] = None,
                 model: str = DEFAULT_MODEL, ledger: Optional[UsageLedger] = None,
                 temperature: float = 0.0, max_tokens: int = 1024,
                 clock: Callable[[], str] = lambda: _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")):
        if mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if mode in ("record", "replay") and cassette is None:
            raise ValueError(f"{mode} mode needs a cassette")
        if mode in ("live", "record") and backend is None:
            raise ValueError(f"{mode} mode needs a backend")
        self.backend = backend
        self.mode = mode
        self.cassette = cassette
        self.model = model
        self.ledger = ledger if ledger is not None else UsageLedger()
        self.temperature = temperature
        self.max_tokens = max_tokens
        self.clock = clock

    def with_ledger(self, ledger: UsageLedger) -> "LLMGateway":
        return LLMGateway(self.backend, self.mode, self.cassette, self.model, ledger,
                          self.temperature, self.max_tokens, self.clock)

    def request(self, user: str, system: Optional[str] = None) -> ChatRequest:
        return ChatRequest.of(user, system, model=self.model, temperature=self.temperature,
                              max_tokens=self.max_tokens)

    def complete(self, request: ChatRequest, stage: str) -> ChatResponse:
        if stage not in STAGES:
            raise ValueError(f"unknown stage {stage!r}")
        fp = fingerprint(request)
        if self.mode == "replay":
            entry = self.cassette.get(fp)
            if entry is None:
                raise ReplayMiss(fp)
            resp = ChatResponse(entry.content, entry.usage, entry.latency)
        else:
            resp = self.backend.send(request)
            if self.mode == "record":
                self.cassette.add(CassetteEntry(fp, request.model, request.messages, resp.content,
                                                resp.usage, resp.latency, self.clock()))
        self.ledger.add(CallRecord(stage, fp, resp.usage, resp.latency))
        return resp

    def ask(self, user: str, stage: str, system: Optional[str] = None) -> ChatResponse:
        return self.complete(self.request(user, system), stage)
