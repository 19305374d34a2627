"""
Prime counting by an odd-only segmented sieve.

The primes up to the current bound are kept as one sorted int64 array; pi(x)
is a searchsorted lookup. The table grows on demand (doubling) up to
SIEVE_LIMIT and is immutable between growth steps.
"""

import logging
import math
import threading

import numpy as np

from app.config import settings
from app.models.errors import DomainError, SieveLimitError

logger = logging.getLogger(__name__)


def simple_sieve(limit: int) -> np.ndarray:
    if limit < 2:
        return np.array([], dtype=np.int64)
    is_prime = np.ones(limit + 1, dtype=bool)
    is_prime[:2] = False
    for p in range(2, math.isqrt(limit) + 1):
        if is_prime[p]:
            is_prime[p * p: limit + 1: p] = False
    return np.flatnonzero(is_prime).astype(np.int64)


def segmented_primes(limit: int, segment_odd_count: int) -> np.ndarray:
    """All primes <= limit, sieving odd numbers one segment at a time."""
    if limit < 2:
        return np.array([], dtype=np.int64)
    base = simple_sieve(math.isqrt(limit) + 1)
    chunks = [np.array([2], dtype=np.int64)]

    span = 2 * segment_odd_count
    low = 3
    while low <= limit:
        high = min(low + span, limit + 1)  # exclusive
        odd_count = (high - low + 1) // 2
        mask = np.ones(odd_count, dtype=bool)

        for p in base[1:]:
            p2 = int(p) * int(p)
            if p2 >= high:
                break
            start = max(p2, ((low + p - 1) // p) * p)
            if start % 2 == 0:
                start += p
            if start >= high:
                continue
            mask[(start - low) // 2::p] = False

        idx = np.flatnonzero(mask)
        chunks.append(low + 2 * idx.astype(np.int64))
        low = high if high % 2 == 1 else high + 1

    primes = np.concatenate(chunks)
    return primes[primes <= limit]


class PrimeService:
    """Exact pi(x) for x up to the configured sieve limit."""

    def __init__(self, limit: int = None, segment: int = None):
        self.limit = limit if limit is not None else settings.SIEVE_LIMIT
        self.segment = segment if segment is not None else settings.SIEVE_SEGMENT
        self._bound = 0
        self._primes = np.array([], dtype=np.int64)
        self._lock = threading.Lock()

    def _ensure(self, x: int):
        if x <= self._bound:
            return
        with self._lock:
            if x <= self._bound:
                return
            bound = min(self.limit, max(x, 2 * self._bound, 1 << 16))
            primes = segmented_primes(bound, self.segment)
            logger.info(f"Sieved primes up to {bound}: {len(primes)} primes")
            self._primes = primes
            self._bound = bound

    def prime_pi(self, x: float) -> int:
        if x < 0 or not math.isfinite(x):
            raise DomainError(f"prime_pi needs x >= 0, got {x}")
        if x > self.limit:
            logger.error(f"prime_pi({x}) beyond sieve limit {self.limit}")
            raise SieveLimitError(f"x = {x} exceeds the sieve limit {self.limit}")
        n = int(math.floor(x))
        if n < 2:
            return 0
        self._ensure(n)
        return int(np.searchsorted(self._primes, n, side="right"))

    def prime_pi_array(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.size == 0:
            return np.zeros(0, dtype=np.int64)
        top = float(np.max(x))
        if np.min(x) < 0:
            raise DomainError("prime_pi needs x >= 0")
        if top > self.limit:
            logger.error(f"prime_pi({top}) beyond sieve limit {self.limit}")
            raise SieveLimitError(f"x = {top} exceeds the sieve limit {self.limit}")
        self._ensure(int(top))
        return np.searchsorted(self._primes, np.floor(x), side="right").astype(np.int64)

    def primes_between(self, a: float, b: float) -> np.ndarray:
        """Primes p with a < p <= b; jump points of pi on (a, b]."""
        if b > self.limit:
            raise SieveLimitError(f"x = {b} exceeds the sieve limit {self.limit}")
        self._ensure(int(b))
        lo = np.searchsorted(self._primes, math.floor(a), side="right")
        hi = np.searchsorted(self._primes, math.floor(b), side="right")
        return self._primes[lo:hi]
