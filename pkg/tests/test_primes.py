import numpy as np
import pytest

from app.models.errors import DomainError, SieveLimitError
from app.services.prime_service import PrimeService, segmented_primes, simple_sieve


def test_known_counts(primes):
    assert primes.prime_pi(0) == 0
    assert primes.prime_pi(1.9) == 0
    assert primes.prime_pi(2) == 1
    assert primes.prime_pi(100) == 25
    assert primes.prime_pi(1000) == 168
    assert primes.prime_pi(1e6) == 78498
    assert primes.prime_pi(1e7) == 664579


def test_segmented_matches_simple_sieve():
    # small segments force many segment boundaries
    assert np.array_equal(segmented_primes(100_000, 97), simple_sieve(100_000))
    assert np.array_equal(segmented_primes(2, 4), np.array([2]))
    assert segmented_primes(1, 4).size == 0


def test_array_form(primes):
    x = np.array([10.0, 10.5, 11.0, 29.99, 30.0])
    assert primes.prime_pi_array(x).tolist() == [4, 4, 5, 10, 10]


def test_primes_between(primes):
    assert primes.primes_between(10, 30).tolist() == [11, 13, 17, 19, 23, 29]
    assert primes.primes_between(11, 13).tolist() == [13]


def test_domain_errors(primes):
    with pytest.raises(DomainError):
        primes.prime_pi(-1)
    with pytest.raises(DomainError):
        primes.prime_pi_array(np.array([5.0, -2.0]))


def test_sieve_limit():
    small = PrimeService(limit=1000, segment=64)
    assert small.prime_pi(1000) == 168
    with pytest.raises(SieveLimitError):
        small.prime_pi(1001)
    with pytest.raises(SieveLimitError):
        small.primes_between(500, 2000)
