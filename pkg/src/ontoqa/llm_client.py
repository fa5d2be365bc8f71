"""Text-completion client with an append-only cache, retries and replay.

Three providers are available: :class:`HTTPProvider` for a generic JSON
completion endpoint, :class:`ReplayProvider` serving previously recorded
completions, and :class:`ScriptedProvider` wrapping a Python callable.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from concurrent.futures import Future, ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Optional, Sequence

import httpx

from .dataset import estimate_tokens

logger = logging.getLogger(__name__)

DEFAULT_MAX_TOKENS = 256
DEFAULT_STOP = ("\n\n", "Q:")
DEFAULT_API_KEY_ENV = "ONTOQA_API_KEY"


class ProviderError(RuntimeError):
    pass


class TransientProviderError(ProviderError):
    """Retryable failure (rate limit, server error, transport)."""


class ContextLengthExceeded(ProviderError):
    pass


class ReplayMiss(ProviderError):
    pass


@dataclass(frozen=True)
class CompletionRequest:
    prompt: str
    model: str = "default"
    max_tokens: int = DEFAULT_MAX_TOKENS
    temperature: float = 0.0
    stop: tuple = DEFAULT_STOP

    def __post_init__(self):
        object.__setattr__(self, "stop", tuple(self.stop))

    def canonical(self) -> dict:
        return {
            "prompt": self.prompt,
            "model": self.model,
            "max_tokens": self.max_tokens,
            "temperature": self.temperature,
            "stop": list(self.stop),
        }

    @property
    def request_hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, ensure_ascii=False, separators=(",", ":"))
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class CompletionRecord:
    request_hash: str
    text: str
    provider: str
    metadata: dict = field(default_factory=dict)
    timestamp: float = 0.0
    prompt_tokens: int = 0
    completion_tokens: int = 0
    skipped: bool = False
    skip_reason: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "request_hash": self.request_hash,
            "text": self.text,
            "provider": self.provider,
            "metadata": self.metadata,
            "timestamp": self.timestamp,
            "prompt_tokens": self.prompt_tokens,
            "completion_tokens": self.completion_tokens,
            "skipped": self.skipped,
            "skip_reason": self.skip_reason,
        }

    @classmethod
    def from_dict(cls, data: dict) -> CompletionRecord:
        return cls(
            request_hash=data["request_hash"],
            text=data.get("text", ""),
            provider=data.get("provider", ""),
            metadata=dict(data.get("metadata") or {}),
            timestamp=float(data.get("timestamp", 0.0)),
            prompt_tokens=int(data.get("prompt_tokens", 0)),
            completion_tokens=int(data.get("completion_tokens", 0)),
            skipped=bool(data.get("skipped", False)),
            skip_reason=data.get("skip_reason"),
        )


def load_records(path) -> dict[str, CompletionRecord]:
    """Records keyed by request hash; a torn trailing line is ignored."""
    records: dict[str, CompletionRecord] = {}
    path = Path(path)
    if not path.exists():
        return records
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = CompletionRecord.from_dict(json.loads(line))
            except (ValueError, KeyError) as exc:
                logger.warning("skipping unreadable cache line %d in %s: %s", lineno, path, exc)
                continue
            records.setdefault(rec.request_hash, rec)
    return records


# -- providers --------------------------------------------------------------

@dataclass
class ProviderResponse:
    text: str
    metadata: dict = field(default_factory=dict)
    completion_tokens: Optional[int] = None


class HTTPProvider:
    """POSTs ``{model, prompt, max_tokens, temperature, stop}`` as JSON.

    The response may carry the completion as ``text``, ``completion`` or
    ``choices[0].text``. The bearer credential is read from ``api_key_env``.
    """

    name = "http"

    def __init__(
        self,
        url: str,
        api_key_env: str = DEFAULT_API_KEY_ENV,
        timeout: float = 60.0,
        client: Optional[httpx.Client] = None,
    ):
        self.url = url
        self.api_key_env = api_key_env
        self.client = client or httpx.Client(timeout=timeout)

    def complete(self, request: CompletionRequest) -> ProviderResponse:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        try:
            resp = self.client.post(self.url, json=request.canonical(), headers=headers)
        except httpx.TransportError as exc:
            raise TransientProviderError(f"transport error: {exc}") from exc
        if resp.status_code == 429 or resp.status_code >= 500:
            raise TransientProviderError(f"HTTP {resp.status_code}")
        if resp.status_code >= 400:
            body = resp.text.lower()
            if "context length" in body or "token limit" in body or "maximum context" in body:
                raise ContextLengthExceeded(resp.text)
            raise ProviderError(f"HTTP {resp.status_code}: {resp.text[:200]}")
        data = resp.json()
        if "text" in data:
            text = data["text"]
        elif "completion" in data:
            text = data["completion"]
        else:
            try:
                text = data["choices"][0]["text"]
            except (KeyError, IndexError, TypeError) as exc:
                raise ProviderError(f"unrecognised response body: {str(data)[:200]}") from exc
        usage = data.get("usage") or {}
        return ProviderResponse(text, {"model": data.get("model", request.model)}, usage.get("completion_tokens"))


class ReplayProvider:
    """Serves recorded completions by request hash; never touches the network."""

    name = "replay"

    def __init__(self, records):
        if isinstance(records, (str, Path)):
            records = load_records(records)
        self.records = dict(records)

    def complete(self, request: CompletionRequest) -> ProviderResponse:
        rec = self.records.get(request.request_hash)
        if rec is None:
            raise ReplayMiss(f"no recorded completion for request {request.request_hash[:12]}")
        if rec.skipped:
            raise ContextLengthExceeded(rec.skip_reason or "recorded as skipped")
        return ProviderResponse(rec.text, dict(rec.metadata), rec.completion_tokens)


class ScriptedProvider:
    """Answers with ``responder(request)``; counts calls for tests."""

    name = "scripted"

    def __init__(self, responder: Callable[[CompletionRequest], str]):
        self.responder = responder
        self.calls = 0
        self._lock = threading.Lock()

    def complete(self, request: CompletionRequest) -> ProviderResponse:
        with self._lock:
            self.calls += 1
        return ProviderResponse(self.responder(request))


# -- client -----------------------------------------------------------------

class CompletionClient:
    """Cached, rate-limited completions.

    Repeated requests with the same hash reach the provider at most once.
    Prompts whose estimated size plus ``max_tokens`` exceeds ``token_limit``
    produce a skipped record without a provider call.
    """

    def __init__(
        self,
        provider,
        cache_path=None,
        token_limit: Optional[int] = None,
        max_retries: int = 4,
        backoff: float = 1.0,
        max_backoff: float = 30.0,
        max_in_flight: int = 4,
        requests_per_minute: Optional[float] = None,
        sleep: Callable[[float], None] = time.sleep,
        clock: Callable[[], float] = time.time,
    ):
        self.provider = provider
        self.cache_path = Path(cache_path) if cache_path else None
        self.token_limit = token_limit
        self.max_retries = max_retries
        self.backoff = backoff
        self.max_backoff = max_backoff
        self.max_in_flight = max(1, max_in_flight)
        self.min_interval = 60.0 / requests_per_minute if requests_per_minute else 0.0
        self.sleep = sleep
        self.clock = clock
        self.provider_calls = 0
        self._cache = load_records(self.cache_path) if self.cache_path else {}
        self._lock = threading.Lock()
        self._write_lock = threading.Lock()
        self._rate_lock = threading.Lock()
        self._pending: dict[str, Future] = {}
        self._last_call = float("-inf")

    def cached(self, request: CompletionRequest) -> Optional[CompletionRecord]:
        return self._cache.get(request.request_hash)

    def complete(self, request: CompletionRequest) -> CompletionRecord:
        key = request.request_hash
        with self._lock:
            if key in self._cache:
                return self._cache[key]
            pending = self._pending.get(key)
            owner = pending is None
            if owner:
                pending = self._pending[key] = Future()
        if not owner:
            return pending.result()
        try:
            record = self._fetch(request)
        except BaseException as exc:
            with self._lock:
                del self._pending[key]
            pending.set_exception(exc)
            raise
        self._persist(record)
        with self._lock:
            self._cache[key] = record
            del self._pending[key]
        pending.set_result(record)
        return record

    def complete_many(self, requests: Sequence[CompletionRequest]) -> list[CompletionRecord]:
        if self.max_in_flight == 1 or len(requests) <= 1:
            return [self.complete(r) for r in requests]
        with ThreadPoolExecutor(max_workers=self.max_in_flight) as pool:
            return list(pool.map(self.complete, requests))

    def _skipped(self, request: CompletionRequest, prompt_tokens: int, reason: str) -> CompletionRecord:
        logger.info("skipping request %s: %s", request.request_hash[:12], reason)
        return CompletionRecord(
            request.request_hash,
            "",
            getattr(self.provider, "name", "unknown"),
            {"model": request.model},
            self.clock(),
            prompt_tokens,
            0,
            skipped=True,
            skip_reason=reason,
        )

    def _fetch(self, request: CompletionRequest) -> CompletionRecord:
        prompt_tokens = estimate_tokens(request.prompt)
        if self.token_limit is not None and prompt_tokens + request.max_tokens > self.token_limit:
            return self._skipped(
                request, prompt_tokens, f"prompt of ~{prompt_tokens} tokens exceeds the {self.token_limit} token limit"
            )
        attempt = 0
        while True:
            self._throttle()
            try:
                self.provider_calls += 1
                response = self.provider.complete(request)
                break
            except ContextLengthExceeded as exc:
                return self._skipped(request, prompt_tokens, f"provider rejected prompt length: {exc}")
            except TransientProviderError as exc:
                attempt += 1
                if attempt > self.max_retries:
                    raise ProviderError(f"giving up after {self.max_retries} retries: {exc}") from exc
                delay = min(self.max_backoff, self.backoff * 2 ** (attempt - 1))
                logger.warning("transient provider error (%s); retry %d in %.1fs", exc, attempt, delay)
                self.sleep(delay)
        completion_tokens = response.completion_tokens
        if completion_tokens is None:
            completion_tokens = estimate_tokens(response.text)
        return CompletionRecord(
            request.request_hash,
            response.text,
            getattr(self.provider, "name", "unknown"),
            {"model": request.model, **response.metadata},
            self.clock(),
            prompt_tokens,
            completion_tokens,
        )

    def _throttle(self) -> None:
        if not self.min_interval:
            return
        with self._rate_lock:
            wait = self._last_call + self.min_interval - self.clock()
            if wait > 0:
                self.sleep(wait)
            self._last_call = self.clock()

    def _persist(self, record: CompletionRecord) -> None:
        if self.cache_path is None:
            return
        line = json.dumps(record.to_dict(), ensure_ascii=False) + "\n"
        with self._write_lock:
            self.cache_path.parent.mkdir(parents=True, exist_ok=True)
            with self.cache_path.open("a", encoding="utf-8") as fh:
                fh.write(line)
                fh.flush()


def write_records(path, records: Iterable[CompletionRecord], extra: Optional[Sequence[dict]] = None) -> None:
    """Write records as JSON Lines, optionally merging per-record fields."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for i, rec in enumerate(records):
            data = rec.to_dict()
            if extra is not None:
                data.update(extra[i])
            fh.write(json.dumps(data, ensure_ascii=False) + "\n")
