"""
Critical Line Service

Hardy's Z function and its companions on the critical line:

- theta(t): asymptotic series of the Riemann-Siegel theta function
- z(t): Riemann-Siegel main sum plus correction terms C0..C4
  (mpmath.siegelz below RS_MIN_T)
- find_zeros(lo, hi): sign changes on a sub-Gram grid, refined by bisection
- s_of_t(t): S(t) = N(t) - 1 - theta(t)/pi with a Turing-style count check
- prime_pi(x): delegated to the prime sieve

Everything has a vectorised *_array twin; the scalar forms wrap results in
pydantic records.
"""

import logging
import math
import threading
from functools import lru_cache
from typing import List, Optional, Tuple

import mpmath
import numpy as np
from scipy.special import bernoulli

from app.config import settings
from app.models.errors import DomainError, IncompleteZeroEnumerationError
from app.models.schemas import SValue, ThetaValue, ZeroPair, ZValue
from app.services.prime_service import PrimeService

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi

# rows * terms of one vectorised main-sum block
MAIN_SUM_BLOCK = 1 << 21

# |mean S| over the gaps below t; a missed zero pair shifts it by 2
TURING_MEAN_BOUND = 1.0
TURING_GAPS = 32

# ----------------------------------------
# theta
# ----------------------------------------

@lru_cache(maxsize=8)
def theta_coefficients(terms: int) -> np.ndarray:
    """c_k of theta(t) ~ ... + sum_k c_k t^(1-2k); c_1 = 1/48, c_2 = 7/5760."""
    b = bernoulli(2 * terms)
    k = np.arange(1, terms + 1)
    return (1.0 - 2.0 ** (1 - 2 * k)) * np.abs(b[2 * k]) / (4.0 * k * (2 * k - 1))


def theta_array(t: np.ndarray, terms: int = None) -> np.ndarray:
    terms = terms if terms is not None else settings.THETA_TERMS
    t = np.asarray(t, dtype=float)
    coeffs = theta_coefficients(terms)
    inv2 = 1.0 / (t * t)
    series = np.zeros_like(t)
    # Horner in 1/t^2, innermost term last
    for c in coeffs[::-1]:
        series = series * inv2 + c
    return 0.5 * t * np.log(t / TWO_PI) - 0.5 * t - math.pi / 8.0 + series / t


def theta_prime_array(t: np.ndarray, terms: int = None) -> np.ndarray:
    terms = terms if terms is not None else settings.THETA_TERMS
    t = np.asarray(t, dtype=float)
    coeffs = theta_coefficients(terms)
    k = np.arange(1, terms + 1)
    series = np.zeros_like(t)
    for c, kk in zip(coeffs, k):
        series = series + c * (1 - 2 * kk) * t ** (-2.0 * kk)
    return 0.5 * np.log(t / TWO_PI) + series


# ----------------------------------------
# Riemann-Siegel remainder
# ----------------------------------------

def _psi(y):
    p = y + mpmath.mpf(1) / 2
    return mpmath.cos(2 * mpmath.pi * (p * p - p - mpmath.mpf(1) / 16)) / mpmath.cos(2 * mpmath.pi * p)


def _mp_polyder(coeffs: list, order: int) -> list:
    """Derivative of a highest-first coefficient list, kept in mpmath."""
    out = list(coeffs)
    for _ in range(order):
        deg = len(out) - 1
        if deg == 0:
            return [mpmath.mpf(0)]
        out = [c * (deg - i) for i, c in enumerate(out[:-1])]
    return out


def _mp_polyadd(*terms) -> list:
    size = max(len(c) for _, c in terms)
    total = [mpmath.mpf(0)] * size
    for scale, coeffs in terms:
        pad = size - len(coeffs)
        for i, c in enumerate(coeffs):
            total[pad + i] += scale * c
    return total


@lru_cache(maxsize=1)
def correction_polynomials(fit_terms: int = 60, dps: int = 50) -> Tuple[np.ndarray, ...]:
    """
    Polynomials in y = p - 1/2 for the correction coefficients C0..C4.

    Psi(p) = cos(2 pi (p^2 - p - 1/16)) / cos(2 pi p) is entire, so a
    Chebyshev fit on y in [-1/2, 1/2] has small monomial coefficients and its
    derivatives stay accurate. Combination happens in mpmath; only the final
    coefficients are rounded to float.
    """
    with mpmath.workdps(dps):
        half = mpmath.mpf(1) / 2
        poly = mpmath.chebyfit(_psi, [-half, half], fit_terms)
        d = {j: _mp_polyder(poly, j) for j in (0, 1, 2, 3, 4, 5, 6, 8, 9, 12)}
        pi2 = mpmath.pi ** 2
        pi4, pi6, pi8 = pi2 ** 2, pi2 ** 3, pi2 ** 4
        c0 = d[0]
        c1 = _mp_polyadd((-1 / (96 * pi2), d[3]))
        c2 = _mp_polyadd((1 / (64 * pi2), d[2]), (1 / (18432 * pi4), d[6]))
        c3 = _mp_polyadd(
            (-1 / (64 * pi2), d[1]),
            (-1 / (3840 * pi4), d[5]),
            (-1 / (5308416 * pi6), d[9]),
        )
        c4 = _mp_polyadd(
            (1 / (128 * pi2), d[0]),
            (mpmath.mpf(19) / (24576 * pi4), d[4]),
            (mpmath.mpf(11) / (5898240 * pi6), d[8]),
            (1 / (2038431744 * pi8), d[12]),
        )
        polys = tuple(np.array([float(c) for c in poly_k]) for poly_k in (c0, c1, c2, c3, c4))
    logger.debug(f"Fitted Riemann-Siegel correction polynomials ({fit_terms} terms)")
    return polys


class CriticalLineService:
    """Evaluates theta, Z and S on the critical line; enumerates zeros."""

    def __init__(
        self,
        correction_depth: int = None,
        rs_min_t: float = None,
        theta_terms: int = None,
        zero_scan_oversample: int = None,
        zero_width: float = None,
        s_bound: float = None,
        primes: Optional[PrimeService] = None,
    ):
        self.correction_depth = settings.CORRECTION_DEPTH if correction_depth is None else correction_depth
        if not 0 <= self.correction_depth <= 4:
            raise DomainError(f"correction depth must be in 0..4, got {self.correction_depth}")
        self.rs_min_t = rs_min_t if rs_min_t is not None else settings.RS_MIN_T
        self.theta_terms = theta_terms if theta_terms is not None else settings.THETA_TERMS
        self.zero_scan_oversample = zero_scan_oversample or settings.ZERO_SCAN_OVERSAMPLE
        self.zero_width = zero_width if zero_width is not None else settings.ZERO_WIDTH
        self.s_bound = s_bound if s_bound is not None else settings.S_BOUND
        self.primes = primes or PrimeService()

        self._zeros = np.array([], dtype=float)
        self._zeros_upto = 10.0
        self._zeros_lock = threading.Lock()

    # ---------- theta ----------

    def theta(self, t: float) -> ThetaValue:
        if not t >= 2.0:
            raise DomainError(f"theta needs t >= 2, got {t}")
        return ThetaValue(t=t, theta=float(theta_array(np.array([t]), self.theta_terms)[0]))

    def theta_array(self, t: np.ndarray) -> np.ndarray:
        return theta_array(t, self.theta_terms)

    def theta_prime(self, t) -> np.ndarray:
        return theta_prime_array(t, self.theta_terms)

    # ---------- Z ----------

    def z(self, t: float) -> ZValue:
        if not t >= 2.0:
            raise DomainError(f"z needs t >= 2, got {t}")
        return ZValue(t=t, z=float(self.z_array(np.array([t]))[0]))

    def z_array(self, t: np.ndarray) -> np.ndarray:
        """Z at every t >= 0; no domain check, the grid starts at t = 0."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        out = np.empty_like(t)
        low = t < self.rs_min_t
        if low.any():
            out[low] = [float(mpmath.siegelz(float(x))) for x in t[low]]
        high = ~low
        if high.any():
            out[high] = self._riemann_siegel(t[high])
        return out

    def z2_array(self, t: np.ndarray) -> np.ndarray:
        z = self.z_array(t)
        return z * z

    def z_derivative(self, t: float, h: float = 1e-4) -> float:
        zs = self.z_array(np.array([t - h, t + h]))
        return float((zs[1] - zs[0]) / (2.0 * h))

    def _riemann_siegel(self, t: np.ndarray) -> np.ndarray:
        tau = t / TWO_PI
        a = np.sqrt(tau)
        n_terms = np.floor(a).astype(np.int64)
        theta = self.theta_array(t)

        main = np.empty_like(t)
        order = np.argsort(t)
        n_max = int(n_terms.max())
        rows = max(1, MAIN_SUM_BLOCK // max(n_max, 1))
        for start in range(0, len(t), rows):
            idx = order[start:start + rows]
            width = int(n_terms[idx].max())
            n = np.arange(1, width + 1, dtype=float)
            phase = theta[idx, None] - t[idx, None] * np.log(n)[None, :]
            terms = np.cos(phase) / np.sqrt(n)[None, :]
            terms[n[None, :] > n_terms[idx, None]] = 0.0
            main[idx] = 2.0 * terms.sum(axis=1)

        y = (a - n_terms) - 0.5
        polys = correction_polynomials()
        inv_a = 1.0 / a
        remainder = np.zeros_like(t)
        scale = np.ones_like(t)
        for k in range(self.correction_depth + 1):
            remainder += np.polyval(polys[k], y) * scale
            scale = scale * inv_a
        sign = np.where(n_terms % 2 == 1, 1.0, -1.0)
        return main + sign * tau ** (-0.25) * remainder

    # ---------- zeros ----------

    def _scan_step(self, t_hi: float) -> float:
        return math.pi / (float(self.theta_prime(np.array([t_hi]))[0]) * self.zero_scan_oversample)

    def _bisect(self, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
        z_lo = self.z_array(lo)
        while np.max(hi - lo) > self.zero_width:
            mid = 0.5 * (lo + hi)
            z_mid = self.z_array(mid)
            same = np.sign(z_mid) == np.sign(z_lo)
            lo = np.where(same, mid, lo)
            z_lo = np.where(same, z_mid, z_lo)
            hi = np.where(same, hi, mid)
        return 0.5 * (lo + hi)

    def _sign_changes(self, a: float, b: float, step: float) -> np.ndarray:
        n = max(2, int(math.ceil((b - a) / step)) + 1)
        grid = np.linspace(a, b, n)
        zs = self.z_array(grid)
        flips = np.flatnonzero(np.sign(zs[:-1]) * np.sign(zs[1:]) < 0)
        if flips.size == 0:
            return np.array([], dtype=float)
        return self._bisect(grid[flips], grid[flips + 1])

    def zero_ordinates(self, t_lo: float, t_hi: float) -> np.ndarray:
        """Refined zero ordinates in [t_lo, t_hi], ascending."""
        if not (10.0 <= t_lo < t_hi):
            raise DomainError(f"zero scan needs 10 <= t_lo < t_hi, got [{t_lo}, {t_hi}]")
        zeros = self._sign_changes(t_lo, t_hi, self._scan_step(t_hi))
        logger.debug(f"{len(zeros)} sign changes of Z on [{t_lo}, {t_hi}]")
        return zeros

    def find_zeros(self, t_lo: float, t_hi: float) -> List[ZeroPair]:
        """Every zero gamma in [t_lo, t_hi] paired with the zero that follows it."""
        zeros = self.zero_ordinates(t_lo, t_hi)
        if zeros.size == 0:
            return []
        step = self._scan_step(t_hi)
        following = np.array([], dtype=float)
        reach = t_hi
        while following.size == 0:
            span = 4.0 * math.pi / float(self.theta_prime(np.array([reach]))[0])
            following = self._sign_changes(reach, reach + span, step)
            following = following[following > zeros[-1]]
            reach += span
        chain = np.concatenate([zeros, following[:1]])
        return [
            ZeroPair(gamma=float(g), gamma_prime=float(gp), refinement_width=self.zero_width)
            for g, gp in zip(chain[:-1], chain[1:])
        ]

    def _ensure_zeros(self, t: float):
        if t <= self._zeros_upto:
            return
        with self._zeros_lock:
            if t <= self._zeros_upto:
                return
            upto = max(t, 1.5 * self._zeros_upto, 200.0)
            fresh = self.zero_ordinates(self._zeros_upto, upto)
            last = self._zeros[-1] if self._zeros.size else 0.0
            fresh = fresh[fresh > last + 2.0 * self.zero_width]
            self._zeros = np.concatenate([self._zeros, fresh])
            self._zeros_upto = upto
            logger.info(f"Zero enumeration extended to t = {upto:.6g}: {len(self._zeros)} zeros")

    def zero_count_array(self, t: np.ndarray) -> np.ndarray:
        """N(t): zeros with ordinate in (0, t)."""
        t = np.asarray(t, dtype=float)
        self._ensure_zeros(float(np.max(t)) + 1.0)
        return np.searchsorted(self._zeros, t, side="left")

    def zeros_between(self, a: float, b: float) -> np.ndarray:
        """Cached zero ordinates in (a, b); used as breakpoints of S-integrands."""
        self._ensure_zeros(b + 1.0)
        lo = np.searchsorted(self._zeros, a, side="right")
        hi = np.searchsorted(self._zeros, b, side="left")
        return self._zeros[lo:hi]

    # ---------- S(t) ----------

    def s_array(self, t: np.ndarray) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        return self.zero_count_array(t) - 1.0 - self.theta_array(t) / math.pi

    def _check_enumeration(self, t: float, s: float):
        if abs(s) > self.s_bound:
            logger.error(f"|S({t})| = {abs(s):.3f} exceeds {self.s_bound}")
            raise IncompleteZeroEnumerationError(
                f"|S({t})| = {abs(s):.3f} exceeds {self.s_bound}; zero enumeration below t is incomplete"
            )
        below = self._zeros[self._zeros < t][-(TURING_GAPS + 1):]
        if below.size < 2:
            return
        mids = 0.5 * (below[:-1] + below[1:])
        mean_s = float(np.mean(self.s_array(mids)))
        if abs(mean_s) > TURING_MEAN_BOUND:
            logger.error(f"Mean of S over the last gaps below {t} is {mean_s:.3f}")
            raise IncompleteZeroEnumerationError(
                f"mean of S over {below.size - 1} gaps below t = {t} is {mean_s:.3f}; "
                f"zeros were missed or duplicated"
            )

    def s_of_t(self, t: float) -> SValue:
        if not t >= 10.0:
            raise DomainError(f"s_of_t needs t >= 10, got {t}")
        count = int(self.zero_count_array(np.array([t]))[0])
        s = count - 1.0 - float(self.theta_array(np.array([t]))[0]) / math.pi
        self._check_enumeration(t, s)
        return SValue(t=t, s=s, zero_count=count)

    # ---------- primes ----------

    def prime_pi(self, x: float) -> int:
        return self.primes.prime_pi(x)
