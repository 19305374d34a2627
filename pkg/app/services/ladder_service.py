"""
Ladder Service

Solves  int_0^{mu[x]} Z^2(t) e^(-2t/x) dt = F(T),  mu[x] = a x ln x,
for x = phi(T), and derives phi1 = phi/2, its inverse, Phi', Phi'' and
Z~^2 = Z^2 / (2 Phi'[phi]).

Windows that need phi1 at many points use a LadderProfile: exact solves at
anchors, dphi1/dt = Z~^2 integrated in between.
"""

import logging
import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial import legendre as L
from scipy.optimize import brentq, minimize_scalar

from app.config import settings
from app.models.errors import (
    BracketError,
    DeviationExceededError,
    DomainError,
    NonMonotoneResidualError,
    ResidualError,
    WindowError,
)
from app.models.schemas import LadderConfig, LadderPoint, PhiDerivatives
from app.services.cache_service import panel_width
from app.services.quadrature_service import EULER_GAMMA, QuadratureService

logger = logging.getLogger(__name__)

MIN_T = 1e3
BRACKET_FACTOR = 2.2
WIDEN_FACTOR = 1.5
MAX_WIDENINGS = 8
MONOTONE_PROBES = 16
PROFILE_DEVIATION = 1e-5
Z_STEP = 1e-4


def g_weight(t, phi: float):
    """Kernel of the second derivative: g(t) = t (t/phi - 1) e^(-2t/phi)."""
    t = np.asarray(t, dtype=float)
    return t * (t / phi - 1.0) * np.exp(-2.0 * t / phi)


@dataclass
class KernelExtrema:
    phi: float
    t_min: float
    g_min: float
    t_max: float
    g_max: float
    t_min_closed: float
    g_min_closed: float
    t_max_closed: float
    g_max_closed: float


def g_extrema(phi: float) -> KernelExtrema:
    """Extrema of g located numerically, next to (1 -+ 1/sqrt 2) phi and their values."""
    r = 1.0 / math.sqrt(2.0)
    lo = minimize_scalar(lambda t: float(g_weight(t, phi)), bounds=(0.0, phi), method="bounded",
                         options={"xatol": 1e-12 * phi})
    hi = minimize_scalar(lambda t: -float(g_weight(t, phi)), bounds=(phi, 5.0 * phi), method="bounded",
                         options={"xatol": 1e-12 * phi})
    return KernelExtrema(
        phi=phi,
        t_min=float(lo.x),
        g_min=float(lo.fun),
        t_max=float(hi.x),
        g_max=float(-hi.fun),
        t_min_closed=(1.0 - r) * phi,
        g_min_closed=-r * (1.0 - r) * math.exp(-2.0 + math.sqrt(2.0)) * phi,
        t_max_closed=(1.0 + r) * phi,
        g_max_closed=r * (1.0 + r) * math.exp(-2.0 - math.sqrt(2.0)) * phi,
    )


def expected_phi1(T: float) -> float:
    """First-order phi1 from the mean density ln(t/2 pi) + 2c of Z^2."""
    return T - (1.0 - EULER_GAMMA) * T / (math.log(T / (2.0 * math.pi)) + 1.0 + EULER_GAMMA)


class LadderProfile:
    """
    Monotone interpolant of phi1 on [T, T+U].

    Between consecutive anchors phi1 is the anchor value plus s_i times the
    integral of Z^2 / (2 Phi'), Phi' linear between the anchors; s_i is the
    rescale that lands exactly on the next anchor. Per panel Z~^2 is held as a
    Legendre series and phi1 as its antiderivative.
    """

    def __init__(
        self,
        T: float,
        U: float,
        anchors: np.ndarray,
        anchor_phi1: np.ndarray,
        anchor_phi_prime: np.ndarray,
        edges: np.ndarray,
        anchor_of_panel: np.ndarray,
        coeffs: np.ndarray,
        scales: np.ndarray,
        base: np.ndarray,
        window_lifted: bool = False,
    ):
        self.T = T
        self.U = U
        self.anchors = anchors
        self.anchor_phi1 = anchor_phi1
        self.anchor_phi_prime = anchor_phi_prime
        self.edges = edges
        self.anchor_of_panel = anchor_of_panel
        self.coeffs = coeffs
        self.scales = scales
        self.base = base
        self.window_lifted = window_lifted

    @property
    def t_lo(self) -> float:
        return float(self.edges[0])

    @property
    def t_hi(self) -> float:
        return float(self.edges[-1])

    def _locate(self, t: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        t = np.asarray(t, dtype=float)
        span = 1e-9 * max(1.0, self.t_hi)
        if np.any(t < self.t_lo - span) or np.any(t > self.t_hi + span):
            raise DomainError(f"profile covers [{self.t_lo}, {self.t_hi}] only")
        p = np.clip(np.searchsorted(self.edges, t, side="right") - 1, 0, len(self.edges) - 2)
        left, right = self.edges[p], self.edges[p + 1]
        x = np.clip((2.0 * t - left - right) / (right - left), -1.0, 1.0)
        return p, x

    def phi1_array(self, t: np.ndarray) -> np.ndarray:
        shape = np.shape(t)
        p, x = self._locate(np.ravel(t))
        half = 0.5 * (self.edges[p + 1] - self.edges[p])
        v = L.legvander(x, self.coeffs.shape[1] - 1)
        integral = np.einsum("ij,ij->i", v, self.coeffs[p])
        return (self.base[p] + self.scales[self.anchor_of_panel[p]] * half * integral).reshape(shape)

    def phi1(self, t: float) -> float:
        return float(self.phi1_array(np.array([t]))[0])

    def phi_prime_interp(self, t: np.ndarray) -> np.ndarray:
        return np.interp(t, self.anchors, self.anchor_phi_prime)

    def _scale_at(self, t: np.ndarray) -> np.ndarray:
        i = np.clip(np.searchsorted(self.anchors, t, side="right") - 1, 0, len(self.anchors) - 2)
        return self.scales[i]

    def ztilde2_from_z2(self, t: np.ndarray, z2: np.ndarray) -> np.ndarray:
        """dphi1/dt of the profile given Z^2 at t."""
        return z2 * self._scale_at(t) / (2.0 * self.phi_prime_interp(t))

    def density_ratio(self, t: np.ndarray) -> np.ndarray:
        """Z^2 / Z~^2 at t."""
        return 2.0 * self.phi_prime_interp(t) / self._scale_at(t)

    def image_breakpoints(self, x_lo: float, x_hi: float) -> List[float]:
        return [float(v) for v in self.anchor_phi1 if x_lo < v < x_hi]

    def inverse_array(self, x: np.ndarray, iterations: int = 60) -> np.ndarray:
        """t with phi1(t) = x by bisection inside the panel holding x."""
        shape = np.shape(x)
        x = np.ravel(np.asarray(x, dtype=float))
        panel_phi = self.phi1_array(self.edges)
        tol = 1e-9 * max(1.0, abs(panel_phi[-1]))
        if np.any(x < panel_phi[0] - tol) or np.any(x > panel_phi[-1] + tol):
            raise DomainError(f"profile image is [{panel_phi[0]}, {panel_phi[-1]}]")
        p = np.clip(np.searchsorted(panel_phi, x, side="right") - 1, 0, len(self.edges) - 2)
        lo, hi = self.edges[p].copy(), self.edges[p + 1].copy()
        for _ in range(iterations):
            mid = 0.5 * (lo + hi)
            below = self.phi1_array(mid) < x
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
        return (0.5 * (lo + hi)).reshape(shape)


class LadderService:
    def __init__(self, quadrature: QuadratureService, cfg: Optional[LadderConfig] = None, threads: int = None):
        self.quadrature = quadrature
        self.line = quadrature.line
        self.primes = quadrature.line.primes
        self.cfg = cfg or LadderConfig(
            a_param=settings.A_PARAM,
            epsilon=settings.EPSILON,
            tol_residual=settings.TOL_RESIDUAL,
            anchor_spacing=settings.ANCHOR_SPACING,
        )
        self.threads = threads or settings.THREADS
        self._solved: Dict[Tuple[float, float, float], LadderPoint] = {}
        self._lock = threading.Lock()

    # ---------- the integral equation ----------

    def weighted(self, x: float, a_param: float, tol: float) -> float:
        return self.quadrature.integrate_weighted(x, a_param, tol).value

    def solve_ladder(self, T: float, cfg: Optional[LadderConfig] = None) -> LadderPoint:
        cfg = cfg or self.cfg
        if T < MIN_T:
            raise DomainError(f"solve_ladder needs T >= {MIN_T:g}, got {T}")
        key = (float(T), cfg.a_param, cfg.tol_residual)
        if key in self._solved:
            return self._solved[key]

        F = self.quadrature.hl_cumulative(T)
        tol = 1e-2 * cfg.tol_residual * F

        def residual(x):
            return self.weighted(x, cfg.a_param, tol) - F

        lo, hi = T, BRACKET_FACTOR * T
        r_lo, r_hi = residual(lo), residual(hi)
        widenings = 0
        while not (r_lo < 0.0 < r_hi):
            if widenings == MAX_WIDENINGS:
                logger.error(f"No sign change for T = {T}: residual {r_lo:.4g} at {lo:.6g}, {r_hi:.4g} at {hi:.6g}")
                raise BracketError(
                    f"no sign change of the residual on [{lo:.6g}, {hi:.6g}] for T = {T}",
                    lo_residual=r_lo,
                    hi_residual=r_hi,
                )
            if r_lo >= 0.0:
                lo = max(10.0, lo / WIDEN_FACTOR)
                r_lo = residual(lo)
            if r_hi <= 0.0:
                hi *= WIDEN_FACTOR
                r_hi = residual(hi)
            widenings += 1
            logger.debug(f"Widened bracket for T = {T} to [{lo:.6g}, {hi:.6g}]")

        probes = np.linspace(lo, hi, MONOTONE_PROBES)
        values = np.array([r_lo] + [residual(x) for x in probes[1:-1]] + [r_hi])
        if np.any(np.diff(values) <= 0.0):
            k = int(np.argmax(np.diff(values) <= 0.0))
            logger.error(f"Residual map not increasing between x = {probes[k]:.6g} and {probes[k + 1]:.6g}")
            raise NonMonotoneResidualError(
                f"J(x) - F(T) is not increasing on [{probes[k]:.6g}, {probes[k + 1]:.6g}] for T = {T}"
            )

        k = int(np.searchsorted(values, 0.0))
        x = brentq(residual, probes[k - 1], probes[k], xtol=1e-12 * T, maxiter=200)
        rel = abs(residual(x)) / F
        if rel > cfg.tol_residual:
            logger.error(f"Residual {rel:.3g} above {cfg.tol_residual:g} at T = {T}")
            raise ResidualError(f"relative residual {rel:.3g} exceeds {cfg.tol_residual:g} at T = {T}")

        point = LadderPoint(T=T, phi=x, residual=rel, a_param=cfg.a_param)
        with self._lock:
            self._solved[key] = point
        logger.info(f"Solved ladder at T = {T:.6g}, a = {cfg.a_param}: phi = {x:.12g} (residual {rel:.2e})")
        return point

    def ladder_table(self, T_values: Sequence[float], cfg: Optional[LadderConfig] = None) -> List[LadderPoint]:
        """Solves for every T (threads share the grid) and checks phi1 grows with T."""
        cfg = cfg or self.cfg
        ordered = sorted(set(float(T) for T in T_values))
        if ordered:
            self.quadrature.grid.ensure(40.0 * ordered[-1])
        with ThreadPoolExecutor(max_workers=self.threads) as pool:
            points = list(pool.map(lambda T: self.solve_ladder(T, cfg), ordered))
        phis = np.array([p.phi for p in points])
        if np.any(np.diff(phis) <= 0.0):
            raise NonMonotoneResidualError("phi1 is not strictly increasing across the ladder table")
        return points

    def phi1(self, T: float, cfg: Optional[LadderConfig] = None) -> float:
        return self.solve_ladder(T, cfg).phi1

    def phi1_inverse(self, y: float, cfg: Optional[LadderConfig] = None, tol: float = 1e-7) -> float:
        cfg = cfg or self.cfg
        if y < MIN_T:
            raise DomainError(f"phi1_inverse needs y >= {MIN_T:g}, got {y}")
        lo = y
        hi = y + 2.0 * (1.0 - EULER_GAMMA) * self.primes.prime_pi(2.0 * y)
        widenings = 0
        while self.phi1(hi, cfg) <= y:
            if widenings == MAX_WIDENINGS:
                raise BracketError(f"phi1 stays below {y} on [{lo:.6g}, {hi:.6g}]")
            hi = y + WIDEN_FACTOR * (hi - y)
            widenings += 1
        if self.phi1(lo, cfg) >= y:
            raise BracketError(f"phi1({lo:.6g}) is not below {y}; ladder above the diagonal")
        t = brentq(lambda s: self.phi1(s, cfg) - y, lo, hi, xtol=tol, maxiter=200)
        logger.debug(f"phi1^-1({y:.6g}) = {t:.12g}")
        return t

    def dphi_dt(self, t: float, cfg: Optional[LadderConfig] = None, h: float = 1e-3) -> float:
        """Central difference of phi from two direct solves."""
        return (self.solve_ladder(t + h, cfg).phi - self.solve_ladder(t - h, cfg).phi) / (2.0 * h)

    # ---------- Phi', Phi'' ----------

    def _mu(self, phi: float, a: float) -> Tuple[float, float, float]:
        lnphi = math.log(phi)
        return a * phi * lnphi, a * (lnphi + 1.0), a / phi

    def _boundary_weight(self, phi: float, a: float) -> float:
        # e^(-2 mu/phi) = phi^(-2a)
        return math.exp(-2.0 * a * math.log(phi))

    def phi_prime(self, phi: float, cfg: Optional[LadderConfig] = None) -> float:
        cfg = cfg or self.cfg
        if phi < MIN_T:
            raise DomainError(f"phi_prime needs phi >= {MIN_T:g}, got {phi}")
        a = cfg.a_param
        tol = 1e-11 * phi * phi * math.log(phi)
        first = self.quadrature.integrate_kernel(
            lambda t: t * np.exp(-2.0 * t / phi), phi, a, tol, power=1
        ).value
        mu, dmu, _ = self._mu(phi, a)
        z2_mu = float(self.line.z2_array(np.array([mu]))[0])
        return 2.0 / phi ** 2 * first + z2_mu * self._boundary_weight(phi, a) * dmu

    def q_term(self, phi: float, cfg: Optional[LadderConfig] = None) -> float:
        """Boundary part Q[phi] of Phi''."""
        cfg = cfg or self.cfg
        a = cfg.a_param
        mu, dmu, d2mu = self._mu(phi, a)
        z = float(self.line.z_array(np.array([mu]))[0])
        dz = self.line.z_derivative(mu, Z_STEP)
        z2 = z * z
        bracket = (
            2.0 * mu / phi ** 2 * z2 * dmu
            + 2.0 * z * dz * dmu ** 2
            + z2 * dmu * (2.0 * mu / phi ** 2 - 2.0 * dmu / phi)
            + z2 * d2mu
        )
        return self._boundary_weight(phi, a) * bracket

    def phi_second(self, phi: float, cfg: Optional[LadderConfig] = None) -> float:
        cfg = cfg or self.cfg
        if phi < MIN_T:
            raise DomainError(f"phi_second needs phi >= {MIN_T:g}, got {phi}")
        tol = 1e-12 * phi * phi * math.log(phi)
        main = self.quadrature.integrate_kernel(
            lambda t: g_weight(t, phi), phi, cfg.a_param, tol, power=2
        ).value
        return 4.0 / phi ** 3 * main + self.q_term(phi, cfg)

    def derivatives(self, T: float, cfg: Optional[LadderConfig] = None) -> PhiDerivatives:
        phi = self.solve_ladder(T, cfg).phi
        return PhiDerivatives(
            phi_at=phi, phi_prime=self.phi_prime(phi, cfg), phi_second=self.phi_second(phi, cfg)
        )

    def ztilde2(self, t: float, cfg: Optional[LadderConfig] = None) -> float:
        if t < MIN_T:
            raise DomainError(f"ztilde2 needs t >= {MIN_T:g}, got {t}")
        phi = self.solve_ladder(t, cfg).phi
        z2 = float(self.line.z2_array(np.array([t]))[0])
        return z2 / (2.0 * self.phi_prime(phi, cfg))

    # ---------- profile ----------

    def phi1_profile(
        self,
        T: float,
        U: float,
        cfg: Optional[LadderConfig] = None,
        enforce_window: bool = True,
        verify: bool = False,
    ) -> LadderProfile:
        cfg = cfg or self.cfg
        if U <= 0.0:
            raise DomainError(f"profile window must be positive, got U = {U}")
        window = T / math.log(T)
        if U > window:
            if enforce_window:
                logger.error(f"Profile window U = {U:.6g} exceeds T/ln T = {window:.6g}")
                raise WindowError(f"U = {U:.6g} exceeds T/ln T = {window:.6g}")
            logger.warning(f"Profile window U = {U:.6g} exceeds T/ln T = {window:.6g}; constraint lifted")

        m = max(1, int(math.ceil(U / cfg.anchor_spacing)))
        anchors = np.linspace(T, T + U, m + 1)
        phis = np.array([self.solve_ladder(float(t), cfg).phi for t in anchors])
        anchor_phi1 = 0.5 * phis
        anchor_dphi = np.array([self.phi_prime(float(p), cfg) for p in phis])

        n = self.quadrature.rule.order
        nodes, weights = self.quadrature.rule.nodes, self.quadrature.rule.weights
        vander = L.legvander(nodes, n - 1)
        k = np.arange(n)
        to_coeffs = ((2 * k + 1) / 2.0)[:, None] * (vander.T * weights[None, :])

        edges_all, owner_all, coeff_all, raw_all = [], [], [], []
        for i in range(m):
            lo, hi = anchors[i], anchors[i + 1]
            pieces = max(1, int(math.ceil((hi - lo) / float(panel_width(hi, self.quadrature.grid.spec.oversample)))))
            edges = np.linspace(lo, hi, pieces + 1)
            mid, half = 0.5 * (edges[:-1] + edges[1:]), 0.5 * (edges[1:] - edges[:-1])
            t = mid[:, None] + half[:, None] * nodes[None, :]
            z2 = self.line.z2_array(t.ravel()).reshape(t.shape)
            dphi = np.interp(t, anchors, anchor_dphi)
            values = z2 / (2.0 * dphi)
            c = values @ to_coeffs.T
            anti = L.legint(c, lbnd=-1, axis=1)
            edges_all.append(edges[:-1])
            owner_all.append(np.full(pieces, i))
            coeff_all.append(anti)
            raw_all.append(half * L.legval(1.0, anti.T))
        edges = np.concatenate(edges_all + [anchors[-1:]])
        owner = np.concatenate(owner_all)
        coeffs = np.concatenate(coeff_all)
        raw = np.concatenate(raw_all)

        scales = np.empty(m)
        base = np.empty(len(raw))
        start = 0
        for i in range(m):
            count = len(raw_all[i])
            seg = raw[start:start + count]
            total = float(seg.sum())
            target = anchor_phi1[i + 1] - anchor_phi1[i]
            scales[i] = target / total
            deviation = abs(total - target) / anchor_phi1[i + 1]
            if deviation > PROFILE_DEVIATION:
                logger.error(f"Propagated phi1 misses anchor {anchors[i + 1]:.6g} by {deviation:.3g} (relative)")
                raise DeviationExceededError(
                    f"propagation between anchors {anchors[i]:.6g} and {anchors[i + 1]:.6g} deviates "
                    f"{deviation:.3g} relative; use a smaller anchor spacing"
                )
            base[start:start + count] = anchor_phi1[i] + scales[i] * np.concatenate([[0.0], np.cumsum(seg)[:-1]])
            start += count

        profile = LadderProfile(
            T=T,
            U=U,
            anchors=anchors,
            anchor_phi1=anchor_phi1,
            anchor_phi_prime=anchor_dphi,
            edges=edges,
            anchor_of_panel=owner,
            coeffs=coeffs,
            scales=scales,
            base=base,
            window_lifted=U > window,
        )
        logger.info(f"Built phi1 profile on [{T:.6g}, {T + U:.6g}]: {m + 1} anchors, {len(owner)} panels")

        if verify:
            worst = self.midpoint_deviation(profile, cfg)
            if worst > PROFILE_DEVIATION:
                raise DeviationExceededError(
                    f"profile deviates {worst:.3g} relative from direct solves at mid-anchors"
                )
        return profile

    def midpoint_deviation(self, profile: LadderProfile, cfg: Optional[LadderConfig] = None) -> float:
        mids = 0.5 * (profile.anchors[:-1] + profile.anchors[1:])
        exact = np.array([self.phi1(float(t), cfg) for t in mids])
        return float(np.max(np.abs(profile.phi1_array(mids) - exact) / exact))

    def profile_covering(
        self, x_lo: float, x_hi: float, cfg: Optional[LadderConfig] = None
    ) -> Tuple[LadderProfile, float, float]:
        """Profile whose phi1-image contains [x_lo, x_hi], with phi1^-1 of both ends."""
        cfg = cfg or self.cfg
        t_lo = self.phi1_inverse(x_lo, cfg)
        t_hi = self.phi1_inverse(x_hi, cfg)
        pad = 1e-6 * t_lo
        profile = self.phi1_profile(t_lo - pad, (t_hi - t_lo) + 2.0 * pad, cfg, enforce_window=False)
        return profile, t_lo, t_hi
