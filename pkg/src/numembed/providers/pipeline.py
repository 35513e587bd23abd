"""Batching, bounded parallelism, retry and rate limiting around a backend."""
from __future__ import annotations

import logging
import random
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence

import numpy as np

from ..errors import DimensionMismatch, EmptyInput, RateLimitExhausted
from .base import Backend, EmbeddingMatrix
from .remote import TransientHTTPError

log = logging.getLogger(__name__)

DEFAULT_BATCH_SIZE = 64
DEFAULT_MAX_ATTEMPTS = 5
DEFAULT_BACKOFF_BASE = 1.0
DEFAULT_BACKOFF_CAP = 60.0
DEFAULT_MAX_IN_FLIGHT = 4


class TokenBucket:
    """Thread-safe token bucket: ``rate_per_minute`` refill, ``burst`` capacity."""

    def __init__(self, rate_per_minute: float, burst: float | None = None, clock: Callable[[], float] = time.monotonic, sleep: Callable[[float], None] = time.sleep):
        if rate_per_minute <= 0:
            raise ValueError("rate must be positive")
        self.rate = rate_per_minute / 60.0
        self.capacity = float(burst) if burst is not None else max(1.0, self.rate)
        self._tokens = self.capacity
        self._clock = clock
        self._sleep = sleep
        self._last = clock()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = self._clock()
                self._tokens = min(self.capacity, self._tokens + (now - self._last) * self.rate)
                self._last = now
                if self._tokens >= 1.0:
                    self._tokens -= 1.0
                    return
                wait = (1.0 - self._tokens) / self.rate
            self._sleep(wait)


class Embedder:
    """Embed texts through ``backend`` with batching and retries.

    Output rows are always in input order, independent of ``batch_size`` and
    of the order in which parallel requests complete.
    """

    def __init__(
        self,
        backend: Backend,
        batch_size: int = DEFAULT_BATCH_SIZE,
        max_attempts: int = DEFAULT_MAX_ATTEMPTS,
        backoff_base: float = DEFAULT_BACKOFF_BASE,
        backoff_cap: float = DEFAULT_BACKOFF_CAP,
        max_in_flight: int = DEFAULT_MAX_IN_FLIGHT,
        rate_limiter: TokenBucket | None = None,
        sleep: Callable[[float], None] = time.sleep,
        jitter_seed: int | None = None,
    ):
        if batch_size < 1 or max_attempts < 1 or max_in_flight < 1:
            raise ValueError("batch_size, max_attempts and max_in_flight must be >= 1")
        self.backend = backend
        self.batch_size = batch_size
        self.max_attempts = max_attempts
        self.backoff_base = backoff_base
        self.backoff_cap = backoff_cap
        self.max_in_flight = max_in_flight
        self.rate_limiter = rate_limiter
        self._sleep = sleep
        self._jitter = random.Random(jitter_seed)
        self._lock = threading.Lock()
        self.request_count = 0

    @property
    def model(self):
        return self.backend.model

    @property
    def cache_namespace(self) -> str:
        return self.backend.cache_namespace

    def _backoff(self, attempt: int, err: TransientHTTPError) -> float:
        ceiling = min(self.backoff_cap, self.backoff_base * 2.0**attempt)
        with self._lock:
            delay = ceiling * (0.5 + 0.5 * self._jitter.random())
        if err.retry_after is not None:
            delay = max(delay, min(err.retry_after, self.backoff_cap))
        return delay

    def _call(self, batch: Sequence[str]) -> list[list[float]]:
        last: TransientHTTPError | None = None
        for attempt in range(self.max_attempts):
            if self.rate_limiter is not None:
                self.rate_limiter.acquire()
            with self._lock:
                self.request_count += 1
            try:
                return self.backend.embed_batch(batch)
            except TransientHTTPError as err:
                last = err
                if attempt + 1 < self.max_attempts:
                    delay = self._backoff(attempt, err)
                    log.warning("%s: transient %s, retry %d in %.1fs", self.model.model_name, err.status, attempt + 1, delay)
                    self._sleep(delay)
        raise RateLimitExhausted(f"{self.model.model_name}: gave up after {self.max_attempts} attempts ({last})")

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        texts = list(texts)
        if not texts:
            raise EmptyInput("no texts to embed")
        batches = [texts[i : i + self.batch_size] for i in range(0, len(texts), self.batch_size)]
        if len(batches) == 1 or self.max_in_flight == 1:
            results = [self._call(b) for b in batches]
        else:
            with ThreadPoolExecutor(max_workers=min(self.max_in_flight, len(batches))) as pool:
                results = list(pool.map(self._call, batches))
        rows = [vec for batch in results for vec in batch]
        dims = {len(v) for v in rows}
        if len(dims) != 1:
            raise DimensionMismatch(f"{self.model.model_name} returned mixed dimensions {sorted(dims)}")
        out = np.asarray(rows, dtype=np.float64)
        if not np.isfinite(out).all():
            raise DimensionMismatch(f"{self.model.model_name} returned non-finite values")
        return out


def embed_remote(embedder: Embedder, texts: Sequence[str], dataset_fingerprint: str = "") -> EmbeddingMatrix:
    return EmbeddingMatrix(embedder.model, dataset_fingerprint, embedder.embed(texts))
