"""Suggestion backends: live autocomplete endpoint, replay fixture, recorder.

Every backend exposes ``fetch(query) -> SuggestionList``. The synthetic
generator used for validation lives in :mod:`suggestaudit.synthetic`.
"""

from __future__ import annotations

import json
import logging
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Mapping, Protocol, Sequence
from urllib.parse import quote

from ._text import normalize_ws
from .exceptions import ConfigError, FixtureMissError, ProtocolError, TransportError

logger = logging.getLogger(__name__)

MAX_SUGGESTIONS = 10

DEFAULT_ENDPOINT = (
    "https://suggestqueries.google.com/complete/search?client=firefox&hl={hl}&q={q}"
)


@dataclass(frozen=True)
class Query:
    text: str
    locale: str = "de"

    def __post_init__(self):
        text = normalize_ws(self.text)
        if not text:
            raise ValueError("query text is empty")
        object.__setattr__(self, "text", text)


@dataclass(frozen=True)
class SuggestionList:
    query: Query
    suggestions: tuple[str, ...]
    fetched_at: float = field(default=0.0, compare=False)

    def __post_init__(self):
        suggestions = tuple(self.suggestions)
        if len(suggestions) > MAX_SUGGESTIONS:
            raise ValueError(f"{len(suggestions)} suggestions exceed the limit of {MAX_SUGGESTIONS}")
        if len(set(suggestions)) != len(suggestions):
            raise ValueError("suggestions must be pairwise distinct")
        object.__setattr__(self, "suggestions", suggestions)

    def __len__(self):
        return len(self.suggestions)

    def __iter__(self):
        return iter(self.suggestions)


def clean_suggestions(raw: Iterable) -> tuple[str, ...]:
    """Normalize whitespace, drop empties and duplicates, cap at ten."""
    seen: dict[str, None] = {}
    for item in raw:
        if not isinstance(item, str):
            continue
        text = normalize_ws(item)
        if text and text not in seen:
            seen[text] = None
        if len(seen) == MAX_SUGGESTIONS:
            break
    return tuple(seen)


class SuggestionSource(Protocol):
    def fetch(self, query: Query) -> SuggestionList: ...


def fetch_suggestions(source: SuggestionSource, query: Query | str, locale: str = "de") -> SuggestionList:
    if isinstance(query, str):
        query = Query(query, locale)
    return source.fetch(query)


@dataclass
class SourceConfig:
    endpoint_template: str = DEFAULT_ENDPOINT
    locale: str = "de"
    min_interval_ms: int = 1000
    max_retries: int = 3
    backoff_base_ms: int = 500
    timeout_ms: int = 10000
    # keys/indices leading to the suggestion array inside the JSON payload
    response_path: Sequence[str | int] = (1,)

    def __post_init__(self):
        if self.endpoint_template.count("{q}") != 1:
            raise ConfigError("endpoint_template must contain exactly one {q} placeholder")
        if self.timeout_ms <= 0:
            raise ConfigError("timeout_ms must be positive")
        if self.min_interval_ms < 0 or self.max_retries < 0 or self.backoff_base_ms < 0:
            raise ConfigError("min_interval_ms, max_retries and backoff_base_ms must be >= 0")
        self.response_path = tuple(self.response_path)

    def url_for(self, query: Query) -> str:
        url = self.endpoint_template.replace("{q}", quote(query.text, safe=""))
        return url.replace("{hl}", quote(query.locale or self.locale, safe=""))


class RateLimiter:
    """Single shared gate spacing request dispatch times.

    Slots are reserved under a lock, so concurrent workers are serialized
    even though the waiting happens outside it. ``issued`` records every
    dispatch time (seconds, from ``clock``).
    """

    def __init__(self, min_interval_ms: int, clock: Callable[[], float] = time.monotonic,
                 sleep: Callable[[float], None] = time.sleep):
        self.interval = min_interval_ms / 1000.0
        self.clock = clock
        self.sleep = sleep
        self.issued: list[float] = []
        self._next = None
        self._lock = threading.Lock()

    def acquire(self) -> float:
        with self._lock:
            now = self.clock()
            slot = now if self._next is None else max(now, self._next)
            self._next = slot + self.interval
            self.issued.append(slot)
        delay = slot - now
        if delay > 0:
            self.sleep(delay)
        return slot


_TRANSIENT_STATUS = {429, 500, 502, 503, 504}


class LiveSource:
    """HTTP GET against a templated suggest endpoint.

    ``session`` needs a requests-compatible ``get(url, timeout=...)``;
    it defaults to a fresh :class:`requests.Session`.
    """

    def __init__(self, config: SourceConfig | None = None, session=None,
                 clock: Callable[[], float] = time.monotonic,
                 sleep: Callable[[float], None] = time.sleep):
        self.config = config or SourceConfig()
        if session is None:
            import requests

            session = requests.Session()
            session.headers["User-Agent"] = "suggestaudit/0.1"
        self.session = session
        self.sleep = sleep
        self.limiter = RateLimiter(self.config.min_interval_ms, clock=clock, sleep=sleep)
        self.requests_made = 0

    def _extract(self, payload):
        node = payload
        for step in self.config.response_path:
            try:
                node = node[step]
            except (KeyError, IndexError, TypeError) as exc:
                raise ProtocolError(f"response path {self.config.response_path!r} not found") from exc
        if not isinstance(node, list):
            raise ProtocolError("suggestion payload is not an array")
        return node

    def fetch(self, query: Query) -> SuggestionList:
        import requests

        url = self.config.url_for(query)
        cfg = self.config
        last_exc: Exception | None = None
        for attempt in range(cfg.max_retries + 1):
            if attempt:
                self.sleep(cfg.backoff_base_ms * 2 ** (attempt - 1) / 1000.0)
            self.limiter.acquire()
            self.requests_made += 1
            try:
                resp = self.session.get(url, timeout=cfg.timeout_ms / 1000.0)
            except (requests.ConnectionError, requests.Timeout, OSError) as exc:
                logger.warning("transient failure for %r (attempt %d): %s", query.text, attempt + 1, exc)
                last_exc = exc
                continue
            status = resp.status_code
            if status in _TRANSIENT_STATUS:
                logger.warning("HTTP %d for %r (attempt %d)", status, query.text, attempt + 1)
                last_exc = ProtocolError(f"HTTP {status} for {url}")
                continue
            if not 200 <= status < 300:
                raise ProtocolError(f"HTTP {status} for {url}")
            try:
                payload = json.loads(resp.content.decode(resp.encoding or "utf-8"))
            except (ValueError, LookupError) as exc:
                raise ProtocolError(f"response for {url} is not JSON") from exc
            return SuggestionList(query, clean_suggestions(self._extract(payload)), time.time())
        if isinstance(last_exc, ProtocolError):
            raise last_exc
        raise TransportError(f"giving up on {url} after {cfg.max_retries + 1} attempts") from last_exc


class ReplaySource:
    """Pure lookup in a recorded query -> suggestions mapping."""

    def __init__(self, mapping: Mapping[str, Sequence[str]], miss_policy: str = "empty"):
        if miss_policy not in ("empty", "error"):
            raise ConfigError(f"unknown miss_policy {miss_policy!r}")
        self.mapping = {normalize_ws(k): clean_suggestions(v) for k, v in mapping.items()}
        self.miss_policy = miss_policy

    @classmethod
    def from_file(cls, path, miss_policy: str = "empty") -> "ReplaySource":
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: fixture must be a JSON object")
        return cls(data, miss_policy)

    def fetch(self, query: Query) -> SuggestionList:
        try:
            suggestions = self.mapping[query.text]
        except KeyError:
            if self.miss_policy == "error":
                raise FixtureMissError(query.text) from None
            suggestions = ()
        return SuggestionList(query, suggestions)


class RecordingSource:
    """Wraps another source and remembers every response for replay."""

    def __init__(self, inner: SuggestionSource):
        self.inner = inner
        self.recorded: dict[str, list[str]] = {}
        self._lock = threading.Lock()

    def fetch(self, query: Query) -> SuggestionList:
        result = self.inner.fetch(query)
        with self._lock:
            self.recorded[query.text] = list(result.suggestions)
        return result

    def save(self, path) -> Path:
        return write_fixture(self.recorded, path)


def write_fixture(mapping: Mapping[str, Sequence[str]], path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = {k: list(mapping[k]) for k in sorted(mapping)}
    path.write_text(json.dumps(data, ensure_ascii=False, indent=1) + "\n", encoding="utf-8")
    return path


def record_fixture(source: SuggestionSource, queries: Sequence[Query | str], path, locale: str = "de") -> Path:
    """Fetch every query once and write a replayable fixture file."""
    if not queries:
        raise ValueError("queries must be non-empty")
    recorder = RecordingSource(source)
    for q in queries:
        fetch_suggestions(recorder, q, locale)
    return recorder.save(path)
