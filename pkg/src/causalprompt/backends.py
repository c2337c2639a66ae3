"""Chat-completion and web-search clients, scripted mocks, clocks and the
generation rate limiter."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import threading
import time
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Protocol, Sequence

import httpx

from .errors import BackendTimeout, ProtocolError, RateLimited, ScriptMiss, ValidationError

log = logging.getLogger(__name__)

DEFAULT_TEMPERATURE = 0.1
DEFAULT_MAX_TOKENS = 4096
DEFAULT_RATE_LIMIT = 20


class Clock(Protocol):
    def now(self) -> float: ...

    def sleep(self, seconds: float) -> None: ...


class RealClock:
    def now(self) -> float:
        return time.monotonic()

    def sleep(self, seconds: float) -> None:
        if seconds > 0:
            time.sleep(seconds)


class VirtualClock:
    """Time only moves when someone sleeps or advances it."""

    def __init__(self, start: float = 0.0):
        self._t = float(start)
        self._lock = threading.Lock()

    def now(self) -> float:
        return self._t

    def sleep(self, seconds: float) -> None:
        if seconds > 0:
            with self._lock:
                self._t += seconds

    def advance_to(self, t: float) -> None:
        with self._lock:
            self._t = max(self._t, t)


# chat ---------------------------------------------------------------------


@dataclass(frozen=True)
class ChatRequest:
    model_id: str
    messages: tuple[tuple[str, str], ...]
    temperature: float = DEFAULT_TEMPERATURE
    max_tokens: int = DEFAULT_MAX_TOKENS
    seed: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "messages", tuple((r, c) for r, c in self.messages))
        if self.temperature < 0:
            raise ValidationError("temperature must be >= 0")
        if self.max_tokens < 1:
            raise ValidationError("max_tokens must be >= 1")

    @classmethod
    def user(cls, model_id: str, prompt: str, **kw) -> "ChatRequest":
        return cls(model_id, (("user", prompt),), **kw)

    def payload(self) -> dict:
        body = {
            "model": self.model_id,
            "messages": [{"role": r, "content": c} for r, c in self.messages],
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
        }
        if self.seed is not None:
            body["seed"] = self.seed
        return body


@dataclass(frozen=True)
class ChatResponse:
    text: str
    prompt_tokens: int = 0
    completion_tokens: int = 0


class ChatBackend(Protocol):
    def chat(self, req: ChatRequest) -> ChatResponse: ...


def message_key(model_id: str, messages: Iterable[tuple[str, str]]) -> str:
    blob = json.dumps([[r, c] for r, c in messages], ensure_ascii=False, separators=(",", ":"))
    return f"{model_id}:{hashlib.sha256(blob.encode('utf-8')).hexdigest()}"


def prompt_key(model_id: str, prompt: str) -> str:
    return message_key(model_id, [("user", prompt)])


class MockChatBackend:
    """Returns scripted responses keyed by ``(model_id, hash(messages))``.

    With ``strict=False`` an unscripted request yields ``default``.
    """

    def __init__(self, script: Mapping[str, str] | None = None, strict: bool = True, default: str = ""):
        self.script = dict(script or {})
        self.strict = strict
        self.default = default
        self.requests: list[ChatRequest] = []
        self._lock = threading.Lock()

    def add(self, model_id: str, prompt: str, response: str) -> None:
        self.script[prompt_key(model_id, prompt)] = response

    @classmethod
    def from_file(cls, path: str | Path, **kw) -> "MockChatBackend":
        """Line-delimited JSON; each line holds ``key`` (or ``model_id`` plus
        ``prompt``) and ``response``."""
        script = {}
        for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                key = rec["key"] if "key" in rec else prompt_key(rec["model_id"], rec["prompt"])
                script[key] = rec["response"]
            except (json.JSONDecodeError, KeyError, TypeError) as exc:
                raise ValidationError(f"{path}:{lineno}: bad mock script record ({exc})") from exc
        return cls(script, **kw)

    def dump(self, path: str | Path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for key, resp in self.script.items():
                fh.write(json.dumps({"key": key, "response": resp}, ensure_ascii=False) + "\n")

    def chat(self, req: ChatRequest) -> ChatResponse:
        with self._lock:
            self.requests.append(req)
        key = message_key(req.model_id, req.messages)
        if key in self.script:
            text = self.script[key]
        elif self.strict:
            raise ScriptMiss(f"no scripted response for {key}")
        else:
            text = self.default
        prompt_toks = sum(len(c.split()) for _, c in req.messages)
        return ChatResponse(text, prompt_toks, len(text.split()))


@dataclass
class BackendConfig:
    model_id: str
    endpoint: str = ""
    credential_env: str = "OPENAI_API_KEY"
    temperature: float = DEFAULT_TEMPERATURE
    max_tokens: int = DEFAULT_MAX_TOKENS
    rate_limit: int = DEFAULT_RATE_LIMIT
    timeout: float = 120.0
    max_retries: int = 3

    @classmethod
    def from_file(cls, path: str | Path) -> "BackendConfig":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ValidationError(f"unknown config keys: {sorted(unknown)}")
        if "model_id" not in data:
            raise ValidationError("config needs model_id")
        return cls(**data)


class HttpChatBackend:
    """Chat-completion adapter over HTTP (``model``/``messages`` request,
    ``choices[0].message.content`` response). The credential is read from the
    environment variable named in the config, never from the config itself."""

    def __init__(self, config: BackendConfig, client: httpx.Client | None = None, clock: Clock | None = None):
        self.config = config
        self.client = client or httpx.Client(timeout=config.timeout)
        self.clock = clock or RealClock()

    def _headers(self) -> dict[str, str]:
        token = os.environ.get(self.config.credential_env, "")
        return {"Authorization": f"Bearer {token}"} if token else {}

    def chat(self, req: ChatRequest) -> ChatResponse:
        last: Exception | None = None
        for attempt in range(self.config.max_retries + 1):
            try:
                return self._once(req)
            except RateLimited as exc:
                last = exc
                wait = exc.retry_after if exc.retry_after is not None else 2.0 ** attempt
            except BackendTimeout as exc:
                last = exc
                wait = 2.0 ** attempt
            if attempt < self.config.max_retries:
                log.warning("chat attempt %d failed (%s); retrying in %.1fs", attempt + 1, last, wait)
                self.clock.sleep(wait)
        assert last is not None
        raise last

    def _once(self, req: ChatRequest) -> ChatResponse:
        try:
            resp = self.client.post(self.config.endpoint, json=req.payload(), headers=self._headers())
        except httpx.TimeoutException as exc:
            raise BackendTimeout(str(exc)) from exc
        except httpx.HTTPError as exc:
            raise ProtocolError(str(exc)) from exc
        if resp.status_code == 429:
            ra = resp.headers.get("retry-after")
            try:
                retry_after = float(ra) if ra is not None else None
            except ValueError:
                retry_after = None
            raise RateLimited("rate limited by endpoint", retry_after)
        if resp.status_code >= 400:
            raise ProtocolError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        try:
            body = resp.json()
            text = body["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise ProtocolError(f"unexpected response shape: {exc}") from exc
        usage = body.get("usage") or {}
        return ChatResponse(text or "", usage.get("prompt_tokens", 0), usage.get("completion_tokens", 0))


# search -------------------------------------------------------------------


@dataclass(frozen=True)
class SearchResult:
    query: str
    snippets: tuple[str, ...] = ()
    latency: float = 0.0
    ok: bool = True
    error: str | None = None

    def __post_init__(self):
        if self.latency < 0:
            raise ValidationError("latency must be >= 0")
        object.__setattr__(self, "snippets", tuple(self.snippets))


class SearchBackend(Protocol):
    def search(self, query: str) -> SearchResult: ...


@dataclass
class MockSearchClient:
    """Latency comes from ``latencies`` if the query is listed, else from a
    seeded uniform distribution when ``seed`` is set, else ``default_latency``.

    The client never sleeps; the scheduler places results on a clock.
    """

    latencies: Mapping[str, float] = field(default_factory=dict)
    snippets: Mapping[str, Sequence[str]] = field(default_factory=dict)
    default_latency: float = 1.0
    seed: int | None = None
    latency_range: tuple[float, float] = (0.5, 2.5)
    failing: frozenset[str] = frozenset()
    virtual: bool = True

    def __post_init__(self):
        self._rng = random.Random(self.seed) if self.seed is not None else None
        self._lock = threading.Lock()

    def _latency(self, query: str) -> float:
        if query in self.latencies:
            return float(self.latencies[query])
        if self._rng is not None:
            with self._lock:
                return self._rng.uniform(*self.latency_range)
        return float(self.default_latency)

    def search(self, query: str) -> SearchResult:
        lat = self._latency(query)
        if not self.virtual:
            time.sleep(lat)
        if query in self.failing:
            return SearchResult(query, (), lat, ok=False, error="scripted failure")
        snips = self.snippets.get(query, (f"result for: {query}",))
        return SearchResult(query, tuple(snips), lat)


class HttpSearchClient:
    """GET ``endpoint?q=<query>``; accepts ``{"snippets": [...]}`` or
    ``{"results": [{"snippet": ...}, ...]}``."""

    virtual = False

    def __init__(self, endpoint: str, client: httpx.Client | None = None, param: str = "q", timeout: float = 30.0):
        self.endpoint = endpoint
        self.param = param
        self.client = client or httpx.Client(timeout=timeout)

    def search(self, query: str) -> SearchResult:
        t0 = time.monotonic()
        try:
            resp = self.client.get(self.endpoint, params={self.param: query})
        except httpx.TimeoutException as exc:
            raise BackendTimeout(str(exc)) from exc
        except httpx.HTTPError as exc:
            raise ProtocolError(str(exc)) from exc
        lat = time.monotonic() - t0
        if resp.status_code >= 400:
            return SearchResult(query, (), lat, ok=False, error=f"HTTP {resp.status_code}")
        try:
            body = resp.json()
            if "snippets" in body:
                snips = [str(s) for s in body["snippets"]]
            else:
                snips = [str(r["snippet"]) for r in body["results"]]
        except (ValueError, KeyError, TypeError) as exc:
            raise ProtocolError(f"unexpected search response: {exc}") from exc
        return SearchResult(query, tuple(snips), lat)


# rate limiting ------------------------------------------------------------


class RateLimiter:
    """At most ``limit`` acquisitions inside any sliding ``window`` seconds.

    ``acquire`` blocks (on the supplied clock) until a slot is free and
    returns the dispatch timestamp.
    """

    def __init__(self, limit: int = DEFAULT_RATE_LIMIT, window: float = 60.0, clock: Clock | None = None):
        if limit < 1:
            raise ValidationError("limit must be >= 1")
        self.limit = limit
        self.window = window
        self.clock = clock or RealClock()
        self._recent: deque[float] = deque()
        self.dispatches: list[float] = []
        self._lock = threading.Lock()

    def acquire(self) -> float:
        with self._lock:
            target = float("-inf")
            while True:
                # rounding in clock.sleep can land a hair short of the target
                now = max(self.clock.now(), target)
                while self._recent and self._recent[0] + self.window <= now:
                    self._recent.popleft()
                if len(self._recent) < self.limit:
                    self._recent.append(now)
                    self.dispatches.append(now)
                    return now
                target = self._recent[0] + self.window
                self.clock.sleep(target - now)

    def __enter__(self):
        self.acquire()
        return self

    def __exit__(self, *exc):
        return False


def max_in_window(timestamps: Sequence[float], window: float = 60.0) -> int:
    """Largest number of timestamps falling in any half-open window of length ``window``."""
    ts = sorted(timestamps)
    best = 0
    lo = 0
    for hi, t in enumerate(ts):
        while ts[lo] + window <= t:
            lo += 1
        best = max(best, hi - lo + 1)
    return best
