"""Provider-agnostic chat-completion gateway.

All model calls (type classification, augmentation, reasoning decomposition,
answer generation) go through :class:`Gateway`. It adds bounded concurrency,
retries with exponential backoff, and a content-addressed on-disk cache in
front of a provider:

* :class:`HttpChatProvider` speaks a single chat-completion wire format::

      POST $PROSWITCH_API_URL
      Authorization: Bearer $PROSWITCH_API_KEY
      {"model": ..., "messages": [{"role": "user", "content": <prompt>}],
       "temperature": ..., "top_p": ..., "max_tokens": ...}

  and reads ``choices[0].message.content`` from the reply. Only a user
  message is ever sent; no system prompt.

* :class:`MockProvider` answers from a JSON script mapping prompt substrings
  to responses. The longest key contained in the prompt wins (ties go to
  the key listed first), so ``""`` works as a catch-all.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
import threading
import time
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, Protocol

import httpx

from .errors import InputError, TransportError

logger = logging.getLogger(__name__)

API_KEY_ENV = "PROSWITCH_API_KEY"
API_URL_ENV = "PROSWITCH_API_URL"


@dataclass(frozen=True)
class GatewayRequest:
    prompt: str
    model_name: str = "gpt-4"
    temperature: float = 0.0
    top_p: float = 1.0
    max_tokens: int = 1024

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise InputError("temperature must be >= 0")
        if not 0 < self.top_p <= 1:
            raise InputError("top_p must be in (0, 1]")
        if self.max_tokens < 1:
            raise InputError("max_tokens must be >= 1")

    @property
    def cache_key(self) -> str:
        payload = json.dumps(asdict(self), sort_keys=True, ensure_ascii=False)
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class GatewayResponse:
    text: str
    from_cache: bool
    latency_ms: int
    attempt: int


class ProviderError(Exception):
    def __init__(self, message: str, status: int | None = None, retryable: bool = True,
                 retry_after: float | None = None) -> None:
        super().__init__(message)
        self.status = status
        self.retryable = retryable
        self.retry_after = retry_after


class Provider(Protocol):
    def send(self, request: GatewayRequest) -> str: ...


class MockProvider:
    def __init__(self, script: dict[str, str]) -> None:
        for key, value in script.items():
            if not isinstance(value, str):
                raise InputError(f"mock script value for {key!r} must be a string")
        self._items = list(script.items())

    @classmethod
    def from_file(cls, path: str | Path) -> "MockProvider":
        try:
            script = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise InputError(f"cannot load mock script {path}: {exc}") from exc
        if not isinstance(script, dict):
            raise InputError(f"mock script {path} must be a JSON object")
        return cls(script)

    def send(self, request: GatewayRequest) -> str:
        best: tuple[str, str] | None = None
        for key, value in self._items:
            if key in request.prompt and (best is None or len(key) > len(best[0])):
                best = (key, value)
        if best is None:
            raise ProviderError("mock script has no entry matching the prompt", retryable=False)
        return best[1]


class HttpChatProvider:
    def __init__(self, url: str, api_key: str | None = None, timeout: float = 60.0,
                 client: httpx.Client | None = None) -> None:
        self.url = url
        self.api_key = api_key
        self._client = client or httpx.Client(timeout=timeout)

    def send(self, request: GatewayRequest) -> str:
        body = {
            "model": request.model_name,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
            "top_p": request.top_p,
            "max_tokens": request.max_tokens,
        }
        headers = {"Authorization": f"Bearer {self.api_key}"} if self.api_key else {}
        try:
            resp = self._client.post(self.url, json=body, headers=headers)
        except httpx.HTTPError as exc:
            raise ProviderError(f"request failed: {exc}") from exc
        if resp.status_code == 429 or resp.status_code >= 500:
            retry_after = resp.headers.get("retry-after")
            try:
                delay = float(retry_after) if retry_after else None
            except ValueError:
                delay = None
            raise ProviderError(f"HTTP {resp.status_code}", status=resp.status_code, retry_after=delay)
        if resp.status_code >= 400:
            raise ProviderError(f"HTTP {resp.status_code}: {resp.text[:200]}",
                                status=resp.status_code, retryable=False)
        try:
            return resp.json()["choices"][0]["message"]["content"]
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise ProviderError(f"malformed completion payload: {exc}", status=resp.status_code,
                                retryable=False) from exc


class Gateway:
    """Thread-safe completion client with caching, retries and an in-flight cap."""

    def __init__(
        self,
        provider: Provider,
        cache_dir: str | Path | None = None,
        max_in_flight: int = 4,
        max_attempts: int = 3,
        backoff_base: float = 1.0,
        backoff_factor: float = 2.0,
        sleep: Callable[[float], None] = time.sleep,
    ) -> None:
        if max_in_flight < 1:
            raise InputError("max_in_flight must be >= 1")
        self.provider = provider
        self.cache_dir = Path(cache_dir) if cache_dir else None
        self.max_in_flight = max_in_flight
        self.max_attempts = max_attempts
        self.backoff_base = backoff_base
        self.backoff_factor = backoff_factor
        self._sleep = sleep
        self._slots = threading.BoundedSemaphore(max_in_flight)
        self._lock = threading.Lock()
        self._in_flight = 0
        self.peak_in_flight = 0

    @classmethod
    def from_settings(cls, mock: str | Path | None = None, cache_dir: str | Path | None = None,
                      concurrency: int = 4, url: str | None = None,
                      api_key: str | None = None) -> "Gateway":
        if mock:
            provider: Provider = MockProvider.from_file(mock)
        else:
            url = url or os.environ.get(API_URL_ENV)
            if not url:
                raise InputError(f"no provider configured: pass --mock or set {API_URL_ENV}")
            provider = HttpChatProvider(url, api_key or os.environ.get(API_KEY_ENV))
        return cls(provider, cache_dir=cache_dir, max_in_flight=concurrency)

    def _cache_path(self, key: str) -> Path:
        assert self.cache_dir is not None
        return self.cache_dir / key[:2] / f"{key}.json"

    def _cache_read(self, key: str) -> str | None:
        if self.cache_dir is None:
            return None
        path = self._cache_path(key)
        try:
            return json.loads(path.read_text(encoding="utf-8"))["text"]
        except FileNotFoundError:
            return None
        except (OSError, ValueError, KeyError) as exc:
            logger.warning("ignoring unreadable cache entry %s: %s", path, exc)
            return None

    def _cache_write(self, key: str, request: GatewayRequest, text: str) -> None:
        if self.cache_dir is None:
            return
        path = self._cache_path(key)
        path.parent.mkdir(parents=True, exist_ok=True)
        payload = json.dumps({"request": asdict(request), "text": text}, ensure_ascii=False)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-", suffix=".json")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                fh.write(payload)
            os.replace(tmp, path)
        except BaseException:
            Path(tmp).unlink(missing_ok=True)
            raise

    def _send(self, request: GatewayRequest) -> str:
        with self._slots:
            with self._lock:
                self._in_flight += 1
                self.peak_in_flight = max(self.peak_in_flight, self._in_flight)
            try:
                return self.provider.send(request)
            finally:
                with self._lock:
                    self._in_flight -= 1

    def complete(self, request: GatewayRequest, *, refresh: bool = False,
                 use_cache: bool = True) -> GatewayResponse:
        """Return a completion, from cache unless ``refresh`` is set.

        ``use_cache=False`` bypasses the cache entirely (no read, no write);
        evaluation generation uses it to draw a fresh sample per run.

        Retryable provider failures back off ``base * factor**(attempt-1)``
        seconds between attempts.
        """
        key = request.cache_key
        start = time.monotonic()
        if use_cache and not refresh:
            cached = self._cache_read(key)
            if cached is not None:
                return GatewayResponse(cached, True, 0, 0)

        last: ProviderError | None = None
        for attempt in range(1, self.max_attempts + 1):
            try:
                text = self._send(request)
            except ProviderError as exc:
                last = exc
                logger.warning("attempt %d/%d failed: %s", attempt, self.max_attempts, exc)
                if not exc.retryable or attempt == self.max_attempts:
                    break
                delay = self.backoff_base * self.backoff_factor ** (attempt - 1)
                if exc.retry_after is not None:
                    delay = max(delay, exc.retry_after)
                self._sleep(delay)
                continue
            if use_cache:
                self._cache_write(key, request, text)
            latency = int((time.monotonic() - start) * 1000)
            return GatewayResponse(text, False, latency, attempt)

        assert last is not None
        raise TransportError(f"completion failed after {attempt} attempt(s): {last}", status=last.status)
