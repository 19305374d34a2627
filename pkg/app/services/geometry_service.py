"""
Geometry of the ladder curve y = phi1(t): chords, almost-parallel chords,
inflection points between consecutive zeros and zero-anchored chord scans.
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from app.config import settings
from app.models.errors import CrossingNotFoundError, DeviationExceededError, DomainError, NoSignChangeError
from app.models.schemas import (
    Chord,
    ChordScanRow,
    InflectionPoint,
    LadderConfig,
    SecondClassWindow,
    ZeroPair,
)
from app.services.ladder_service import MIN_T, LadderProfile, LadderService

logger = logging.getLogger(__name__)

INFLECTION_STEPS = 256
BISECTION_STEPS = 60
MICRO_U = 1e-3
ANGLE_SLACK = 1e-9
EQUIVALENCE_MIN_FRACTION = 0.125


@dataclass
class GapFraction:
    T: float
    U: float
    gaps: int
    short: int
    threshold: float

    @property
    def fraction(self) -> float:
        return self.short / self.gaps if self.gaps else 0.0


@dataclass
class MeanValueSample:
    """A subinterval [N, M] with its mean of Z^2 over ln T and its chord slope."""
    N: float
    M: float
    mean_ratio: float
    tan_alpha: float

    @property
    def agreement(self) -> float:
        return self.mean_ratio / self.tan_alpha


def default_eta(T: float) -> float:
    return 2.0 * math.log(math.log(T)) / math.log(T)


class GeometryService:
    def __init__(self, ladder: LadderService, alpha_band_units: str = None):
        self.ladder = ladder
        self.line = ladder.line
        self.quadrature = ladder.quadrature
        self.alpha_band_units = alpha_band_units or settings.ALPHA_BAND_UNITS

    def chord(self, T: float, U: float, cfg: Optional[LadderConfig] = None) -> Chord:
        """Chord of the ladder over [T, T+U] from two independent solves."""
        if U <= 0.0:
            raise DomainError(f"chord needs U > 0, got {U}")
        left = self.ladder.solve_ladder(T, cfg).phi
        right = self.ladder.solve_ladder(T + U, cfg).phi
        return Chord.from_endpoints(T, U, left, right)

    @staticmethod
    def profile_chord(profile: LadderProfile, T: float, U: float) -> Chord:
        ends = profile.phi1_array(np.array([T, T + U]))
        return Chord.from_endpoints(T, U, 2.0 * ends[0], 2.0 * ends[1])

    @staticmethod
    def is_almost_parallel(chord: Chord, eta: Optional[float] = None) -> bool:
        eta = default_eta(chord.T) if eta is None else eta
        if not eta > 0.0:
            raise DomainError(f"eta must be positive, got {eta}")
        return abs(chord.tan_alpha - 1.0) <= eta

    def _local_profile(self, lo: float, hi: float, cfg: Optional[LadderConfig]) -> LadderProfile:
        pad = 1e-3 * (hi - lo)
        return self.ladder.phi1_profile(lo - pad, (hi - lo) + 2.0 * pad, cfg)

    # ---------- inflection ----------

    def second_difference(self, profile: LadderProfile, t: np.ndarray, h: float) -> np.ndarray:
        return profile.phi1_array(t + h) - 2.0 * profile.phi1_array(t) + profile.phi1_array(t - h)

    def find_inflection(
        self, pair: ZeroPair, cfg: Optional[LadderConfig] = None, profile: Optional[LadderProfile] = None
    ) -> InflectionPoint:
        gamma, gamma_prime = pair.gamma, pair.gamma_prime
        if gamma < MIN_T:
            raise DomainError(f"find_inflection needs gamma >= {MIN_T:g}, got {gamma}")
        profile = profile or self._local_profile(gamma, gamma_prime, cfg)
        h = pair.gap / INFLECTION_STEPS
        t = gamma + h * np.arange(1, INFLECTION_STEPS)
        d2 = self.second_difference(profile, t, h)
        flips = np.flatnonzero((d2[:-1] > 0.0) & (d2[1:] <= 0.0))
        if flips.size == 0:
            logger.error(f"No convex-to-concave switch of phi1 in ({gamma}, {gamma_prime})")
            raise NoSignChangeError(
                f"second difference of phi1 keeps its sign in ({gamma:.12g}, {gamma_prime:.12g}) at step {h:.3g}"
            )
        lo, hi = float(t[flips[0]]), float(t[flips[0] + 1])
        for _ in range(BISECTION_STEPS):
            mid = 0.5 * (lo + hi)
            if self.second_difference(profile, np.array([mid]), h)[0] > 0.0:
                lo = mid
            else:
                hi = mid
        rho = 0.5 * (lo + hi)
        ends = profile.phi1_array(np.array([gamma, rho]))
        beta = math.atan((ends[1] - ends[0]) / (rho - gamma))
        logger.debug(f"Inflection of phi1 at rho = {rho:.12g} in ({gamma:.12g}, {gamma_prime:.12g}), beta = {beta:.6g}")
        return InflectionPoint(rho=rho, gamma=gamma, gamma_prime=gamma_prime, beta=beta)

    # ---------- chord scans ----------

    def _scan_row(self, profile: LadderProfile, gamma: float, U: float) -> ChordScanRow:
        chord = self.profile_chord(profile, gamma, U)
        lhs = self.quadrature.integrate_z2(gamma, gamma + U, tol=1e-12).value
        rhs = U * math.log(gamma) * chord.tan_alpha
        return ChordScanRow(
            gamma=gamma,
            U=U,
            tan_alpha=chord.tan_alpha,
            alpha=chord.alpha,
            lhs=lhs,
            rhs=rhs,
            ratio=lhs / rhs if rhs > 0.0 else float("nan"),
        )

    def rotating_chord_scan(
        self,
        gamma: float,
        rho: float,
        n_angles: int,
        cfg: Optional[LadderConfig] = None,
        profile: Optional[LadderProfile] = None,
        beta: Optional[float] = None,
    ) -> List[ChordScanRow]:
        """
        Chords from (gamma, phi1(gamma)) with U on a log grid up to rho - gamma.
        Given beta, the angle of the (gamma, rho) chord, every alpha must stay at or below it.
        """
        if not rho > gamma:
            raise DomainError(f"rho must lie right of gamma, got rho = {rho}, gamma = {gamma}")
        profile = profile or self._local_profile(gamma, rho, cfg)
        span = rho - gamma
        Us = np.geomspace(min(MICRO_U, 0.5 * span), span, n_angles)
        rows = [self._scan_row(profile, gamma, float(U)) for U in Us]
        if beta is not None:
            steep = [r for r in rows if r.alpha > beta + ANGLE_SLACK]
            if steep:
                logger.error(f"Chord from gamma = {gamma:.12g} steeper than beta = {beta:.6g} at U = {steep[0].U:.6g}")
                raise DeviationExceededError(
                    f"alpha = {steep[0].alpha:.9g} exceeds beta = {beta:.9g} at U = {steep[0].U:.6g}"
                )
        return rows

    def _admissible(self, chord_alpha: float, tan_alpha: float, eta: float) -> bool:
        if self.alpha_band_units == "slope":
            return eta <= tan_alpha <= 1.0 - eta
        return eta <= chord_alpha <= 0.5 * math.pi - eta

    def second_class_window(
        self, gamma: float, cfg: Optional[LadderConfig] = None, profile: Optional[LadderProfile] = None
    ) -> SecondClassWindow:
        cfg = cfg or self.ladder.cfg
        if gamma < MIN_T:
            raise DomainError(f"second_class_window needs gamma >= {MIN_T:g}, got {gamma}")
        reach = gamma + cfg.u0(gamma)
        following = np.array([])
        step = math.pi / float(self.line.theta_prime(np.array([reach]))[0])
        while following.size == 0:
            following = self.line.zero_ordinates(reach, reach + 4.0 * step)
            reach += 4.0 * step
        gamma_bar = float(following[0])

        profile = profile or self._local_profile(gamma, gamma_bar, cfg)
        ends = profile.phi1_array(np.array([gamma, gamma_bar]))
        slope = (ends[1] - ends[0]) / (gamma_bar - gamma)

        def gap(t):
            return profile.phi1_array(t) - (ends[0] + slope * (t - gamma))

        n = max(64, int(math.ceil(8.0 * (gamma_bar - gamma) / step)))
        t = np.linspace(gamma, gamma_bar, n + 1)[1:-1]
        d = gap(t)
        ups = np.flatnonzero((d[:-1] < 0.0) & (d[1:] >= 0.0))
        if d[0] >= 0.0 or ups.size == 0:
            logger.error(f"No crossing of the ladder with the chord over ({gamma}, {gamma_bar})")
            raise CrossingNotFoundError(
                f"ladder does not cross the chord over ({gamma:.12g}, {gamma_bar:.12g}) at {n} samples"
            )
        lo, hi = float(t[ups[0]]), float(t[ups[0] + 1])
        for _ in range(BISECTION_STEPS):
            mid = 0.5 * (lo + hi)
            if gap(np.array([mid]))[0] < 0.0:
                lo = mid
            else:
                hi = mid
        return SecondClassWindow(gamma=gamma, gamma_bar=gamma_bar, rho_bar=0.5 * (lo + hi), tan_alpha=slope)

    def second_class_scan(
        self,
        gamma: float,
        n_angles: int,
        eta: Optional[float] = None,
        cfg: Optional[LadderConfig] = None,
    ) -> List[ChordScanRow]:
        """Rotating chord from gamma over (0, rho_bar - gamma], admissible angles only."""
        window = self.second_class_window(gamma, cfg)
        eta = default_eta(gamma) if eta is None else eta
        profile = self._local_profile(gamma, window.gamma_bar, cfg)
        Us = np.geomspace(MICRO_U, window.rho_bar - gamma, n_angles)
        rows = [self._scan_row(profile, gamma, float(U)) for U in Us]
        kept = [r for r in rows if self._admissible(r.alpha, r.tan_alpha, eta)]
        logger.info(f"Second-class scan at gamma = {gamma:.12g}: {len(kept)} of {len(rows)} angles admissible")
        return kept

    def parallel_gap_chords(
        self,
        inflection: InflectionPoint,
        n: int,
        cfg: Optional[LadderConfig] = None,
        profile: Optional[LadderProfile] = None,
    ) -> List[ChordScanRow]:
        """Chords [N, M] in (gamma, gamma') with the slope tan(beta) of the (gamma, rho) chord."""
        gamma, gamma_prime, rho = inflection.gamma, inflection.gamma_prime, inflection.rho
        profile = profile or self._local_profile(gamma, gamma_prime, cfg)
        tan_beta = math.tan(inflection.beta)
        rows = []
        for N in np.linspace(gamma, rho, n + 2)[1:-1]:
            y_n = profile.phi1(float(N))
            M_grid = np.linspace(N, gamma_prime, 130)[1:]
            s = (profile.phi1_array(M_grid) - y_n) / (M_grid - N) - tan_beta
            flips = np.flatnonzero(np.sign(s[:-1]) * np.sign(s[1:]) < 0)
            if flips.size == 0:
                continue
            lo, hi = float(M_grid[flips[0]]), float(M_grid[flips[0] + 1])
            s_lo = s[flips[0]]
            for _ in range(BISECTION_STEPS):
                mid = 0.5 * (lo + hi)
                s_mid = (profile.phi1(mid) - y_n) / (mid - N) - tan_beta
                if np.sign(s_mid) == np.sign(s_lo):
                    lo = mid
                else:
                    hi = mid
            M = 0.5 * (lo + hi)
            lhs = self.quadrature.integrate_z2(float(N), M, tol=1e-12).value
            rhs = (M - N) * math.log(N) * tan_beta
            rows.append(ChordScanRow(
                gamma=float(N), U=M - float(N), tan_alpha=tan_beta, alpha=inflection.beta,
                lhs=lhs, rhs=rhs, ratio=lhs / rhs,
            ))
        return rows

    def zero_gap_fraction(self, T: float, A: float = 3.0, cfg: Optional[LadderConfig] = None) -> GapFraction:
        """Share of zero gaps in [T, T+U0] shorter than A ln ln T / ln T; descriptive only."""
        cfg = cfg or self.ladder.cfg
        U = cfg.u0(T)
        zeros = self.line.zero_ordinates(T, T + U)
        gaps = np.diff(zeros)
        threshold = A * math.log(math.log(T)) / math.log(T)
        result = GapFraction(T=T, U=U, gaps=len(gaps), short=int(np.sum(gaps < threshold)), threshold=threshold)
        logger.info(f"Zero gaps in [{T:.6g}, {T + U:.6g}]: {result.short}/{result.gaps} below {threshold:.4g}")
        return result

    def mean_value_family(
        self, T: float, n: int, cfg: Optional[LadderConfig] = None, seed: int = 0
    ) -> List[MeanValueSample]:
        """
        n subintervals [N, M] of [T, T+U0] with mean(Z^2)/ln T and tan alpha(N, M-N).
        The two ratios are equal up to the error factor of the window formula, so
        an almost-parallel chord and a near-unit mean go together.
        """
        cfg = cfg or self.ladder.cfg
        if T < MIN_T:
            raise DomainError(f"mean_value_family needs T >= {MIN_T:g}, got {T}")
        if n < 1:
            raise DomainError(f"need at least one subinterval, got n = {n}")
        U0 = cfg.u0(T)
        lnT = math.log(T)
        rng = np.random.default_rng(seed)
        lengths = U0 * np.exp(rng.uniform(math.log(EQUIVALENCE_MIN_FRACTION), 0.0, n))
        starts = T + (U0 - lengths) * rng.uniform(0.0, 1.0, n)
        samples = []
        for N, L in zip(starts, lengths):
            N, M = float(N), float(N + L)
            mean = self.quadrature.integrate_z2(N, M, tol=1e-10 * L * lnT).value / (L * lnT)
            chord = self.chord(N, M - N, cfg)
            samples.append(MeanValueSample(N=N, M=M, mean_ratio=mean, tan_alpha=chord.tan_alpha))
        worst = max(abs(math.log(s.agreement)) for s in samples)
        logger.info(f"Mean-value family at T = {T:.6g}: {n} windows, worst log agreement {worst:.3g}")
        return samples
