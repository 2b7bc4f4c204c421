"""Generation endpoint client: retries, rate limiting, persistent cache.

One wire contract serves base and fine-tuned models alike:
``POST {model, prompt, max_new_tokens, temperature, stop} -> {text}``.
Request keys are SHA-256 over the compact JSON serialization
``{"max_new_tokens":..,"model_id":..,"prompt":..,"stop_sequences":[..],
"temperature":..}`` with sorted keys and ``ensure_ascii=False``.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable

from relex.errors import CacheError, ConfigError, ProtocolError, TransportError

logger = logging.getLogger(__name__)

DEFAULT_MAX_NEW_TOKENS = 32
DEFAULT_TEMPERATURE = 0.0
DEFAULT_STOP: tuple[str, ...] = ("\n",)

AUTH_TOKEN_ENV = "RELEX_AUTH_TOKEN"


def request_key(
    model_id: str,
    prompt: str,
    max_new_tokens: int,
    temperature: float,
    stop_sequences: tuple[str, ...],
) -> str:
    payload = json.dumps(
        {
            "model_id": model_id,
            "prompt": prompt,
            "max_new_tokens": max_new_tokens,
            "temperature": float(temperature),
            "stop_sequences": list(stop_sequences),
        },
        sort_keys=True,
        ensure_ascii=False,
        separators=(",", ":"),
    )
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class GenerationRequest:
    model_id: str
    prompt: str
    max_new_tokens: int = DEFAULT_MAX_NEW_TOKENS
    temperature: float = DEFAULT_TEMPERATURE
    stop_sequences: tuple[str, ...] = DEFAULT_STOP
    request_key: str = ""

    def __post_init__(self):
        if self.max_new_tokens < 1:
            raise ValueError("max_new_tokens must be positive")
        if self.temperature < 0:
            raise ValueError("temperature must be non-negative")
        object.__setattr__(self, "stop_sequences", tuple(self.stop_sequences))
        object.__setattr__(
            self,
            "request_key",
            request_key(
                self.model_id, self.prompt, self.max_new_tokens, self.temperature, self.stop_sequences
            ),
        )


@dataclass
class GenerationResponse:
    request_key: str
    raw_text: str
    latency_ms: int
    from_cache: bool


@dataclass
class RetryPolicy:
    """Exponential backoff on transport failures."""

    attempts: int = 3
    backoff_base: float = 0.5
    backoff_multiplier: float = 2.0
    max_backoff: float = 8.0

    def sleep_seconds(self, attempt: int) -> float:
        return min(self.backoff_base * self.backoff_multiplier**attempt, self.max_backoff)

    def run(self, call: Callable):
        last: TransportError | None = None
        for attempt in range(self.attempts):
            try:
                return call()
            except TransportError as exc:
                last = exc
                if attempt + 1 < self.attempts:
                    time.sleep(self.sleep_seconds(attempt))
        raise TransportError(f"exhausted {self.attempts} attempts; last error: {last}") from last


class RateLimiter:
    """Thread-safe minimum-interval limiter; rate <= 0 disables it."""

    def __init__(self, requests_per_second: float):
        self._interval = 1.0 / requests_per_second if requests_per_second > 0 else 0.0
        self._lock = threading.Lock()
        self._next_at = 0.0

    def acquire(self) -> None:
        if self._interval == 0.0:
            return
        with self._lock:
            now = time.monotonic()
            wait = self._next_at - now
            self._next_at = max(self._next_at, now) + self._interval
        if wait > 0:
            time.sleep(wait)


class GenerationEndpoint:
    def complete(self, request: GenerationRequest) -> str:
        raise NotImplementedError


class MockEndpoint(GenerationEndpoint):
    """Offline endpoint mapping prompt substrings to canned completions.

    The longest matching key wins, ties broken lexicographically; ``"*"``
    is the fallback.  A reserved ``"__model__"`` entry, when present, pins
    the model id requests must carry.
    """

    def __init__(self, fixture: dict[str, str]):
        self.expected_model = fixture.get("__model__")
        self.fixture = {k: v for k, v in fixture.items() if k not in ("__model__",)}
        self.calls = 0
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path: str | Path) -> "MockEndpoint":
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        if not isinstance(payload, dict):
            raise ConfigError(f"{path}: mock fixture must be a JSON object")
        return cls({str(k): str(v) for k, v in payload.items()})

    def complete(self, request: GenerationRequest) -> str:
        with self._lock:
            self.calls += 1
        if self.expected_model is not None and request.model_id != self.expected_model:
            raise ProtocolError(
                f"mock endpoint serves model {self.expected_model!r}, got {request.model_id!r}"
            )
        matches = [key for key in self.fixture if key != "*" and key in request.prompt]
        if matches:
            best = min(matches, key=lambda key: (-len(key), key))
            return self.fixture[best]
        if "*" in self.fixture:
            return self.fixture["*"]
        raise ProtocolError("mock endpoint has no completion for this prompt")


class HttpEndpoint(GenerationEndpoint):
    def __init__(self, url: str, session=None, timeout: float = 120.0):
        import requests

        self.url = url
        self.timeout = timeout
        self._session = session or requests.Session()

    def _headers(self) -> dict[str, str]:
        token = os.environ.get(AUTH_TOKEN_ENV)
        return {"Authorization": f"Bearer {token}"} if token else {}

    def complete(self, request: GenerationRequest) -> str:
        import requests

        body = {
            "model": request.model_id,
            "prompt": request.prompt,
            "max_new_tokens": request.max_new_tokens,
            "temperature": request.temperature,
            "stop": list(request.stop_sequences),
        }
        try:
            response = self._session.post(self.url, json=body, headers=self._headers(), timeout=self.timeout)
        except requests.RequestException as exc:
            raise TransportError(f"generation endpoint {self.url}: {exc}") from exc
        if not 200 <= response.status_code < 300:
            raise TransportError(f"generation endpoint {self.url}: HTTP {response.status_code}")
        if not response.content:
            raise ProtocolError(f"generation endpoint {self.url}: empty body")
        try:
            payload = response.json()
        except ValueError as exc:
            raise ProtocolError(f"generation endpoint {self.url}: non-JSON body") from exc
        if "text" not in payload:
            raise ProtocolError(f"generation endpoint {self.url}: missing 'text' field")
        return str(payload["text"])


def make_generation_endpoint(spec: str) -> GenerationEndpoint:
    if spec.startswith("mock:"):
        return MockEndpoint.from_file(spec.split(":", 1)[1])
    if spec.startswith(("http://", "https://")):
        return HttpEndpoint(spec)
    raise ConfigError(f"unknown generation endpoint {spec!r}; use 'mock:<fixture>' or an http(s) URL")


def _truncate_at_stop(text: str, stop_sequences: tuple[str, ...]) -> str:
    cut = len(text)
    for stop in stop_sequences:
        if stop:
            found = text.find(stop)
            if found != -1:
                cut = min(cut, found)
    return text[:cut]


def generate(
    endpoint: GenerationEndpoint,
    request: GenerationRequest,
    retry_policy: RetryPolicy | None = None,
    rate_limiter: RateLimiter | None = None,
) -> GenerationResponse:
    """Dispatch one request; raw text is returned verbatim past stop truncation."""
    retry_policy = retry_policy or RetryPolicy()

    def attempt() -> str:
        if rate_limiter is not None:
            rate_limiter.acquire()
        return endpoint.complete(request)

    started = time.perf_counter()
    raw = retry_policy.run(attempt)
    latency_ms = int((time.perf_counter() - started) * 1000)
    return GenerationResponse(
        request_key=request.request_key,
        raw_text=_truncate_at_stop(raw, request.stop_sequences),
        latency_ms=latency_ms,
        from_cache=False,
    )


def _checksum(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()[:16]


class ResponseCache:
    """Append-only JSONL cache with an in-memory index built at open.

    Each line is ``{request_key, raw_text, latency_ms, created_at, checksum}``;
    a line whose checksum does not match its raw_text is discarded as corrupt.
    Writes are write-once per key.
    """

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.RLock()
        self._index: dict[str, tuple[str, int]] = {}
        self._load()

    def _load(self) -> None:
        if not self.path.exists():
            return
        with open(self.path, encoding="utf-8") as handle:
            for lineno, line in enumerate(handle, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    row = json.loads(line)
                    key, raw = row["request_key"], row["raw_text"]
                    latency = int(row.get("latency_ms", 0))
                    checksum = row.get("checksum")
                except (json.JSONDecodeError, KeyError, TypeError, ValueError):
                    logger.warning("cache %s:%d: malformed entry skipped", self.path, lineno)
                    continue
                if checksum is not None and checksum != _checksum(raw):
                    logger.warning("cache %s:%d: checksum mismatch, entry discarded", self.path, lineno)
                    continue
                self._index.setdefault(key, (raw, latency))

    def __len__(self) -> int:
        return len(self._index)

    def get(self, key: str) -> tuple[str, int] | None:
        with self._lock:
            return self._index.get(key)

    def put(self, key: str, raw_text: str, latency_ms: int) -> None:
        with self._lock:
            existing = self._index.get(key)
            if existing is not None:
                if existing[0] != raw_text:
                    raise CacheError(f"conflicting second write for cache key {key}")
                return
            self._index[key] = (raw_text, latency_ms)
            self.path.parent.mkdir(parents=True, exist_ok=True)
            row = {
                "request_key": key,
                "raw_text": raw_text,
                "latency_ms": latency_ms,
                "created_at": datetime.now(timezone.utc).isoformat(),
                "checksum": _checksum(raw_text),
            }
            with open(self.path, "a", encoding="utf-8") as handle:
                handle.write(json.dumps(row, ensure_ascii=False) + "\n")
                handle.flush()


def cached_generate(
    cache: ResponseCache,
    endpoint: GenerationEndpoint,
    request: GenerationRequest,
    retry_policy: RetryPolicy | None = None,
    rate_limiter: RateLimiter | None = None,
) -> GenerationResponse:
    hit = cache.get(request.request_key)
    if hit is not None:
        raw, latency = hit
        return GenerationResponse(
            request_key=request.request_key, raw_text=raw, latency_ms=latency, from_cache=True
        )
    response = generate(endpoint, request, retry_policy, rate_limiter)
    cache.put(request.request_key, response.raw_text, response.latency_ms)
    return response
