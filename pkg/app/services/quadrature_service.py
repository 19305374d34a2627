"""
Quadrature Service

Integrals of Z^2 and of weighted or composite integrands.

Everything that can be read off the sample grid is: window integrals from the
cumulative checkpoints, exponentially weighted integrals as weighted panel
sums. When the panel error estimate misses the tolerance the integral falls
back to adaptive Gauss-Legendre subdivision (whole panel against its halves)
starting from the oscillation-resolving panel width.
"""

import logging
import math
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import brentq

from app.config import settings
from app.models.errors import DomainError, SingularityError, ToleranceUnreachableError
from app.models.schemas import CompositeWeight, IntegralResult
from app.services.cache_service import CriticalSampleGrid, PanelFn, panel_width

logger = logging.getLogger(__name__)

EULER_GAMMA = float(np.euler_gamma)

Integrand = Callable[[np.ndarray], np.ndarray]


def hl_main_term(T: float) -> float:
    """Ingham main term of F(T): T ln T + (2c - 1 - ln 2 pi) T."""
    if T <= 0:
        return 0.0
    return T * math.log(T) + (2.0 * EULER_GAMMA - 1.0 - math.log(2.0 * math.pi)) * T


class QuadratureService:
    def __init__(self, grid: CriticalSampleGrid, budget: int = None):
        self.grid = grid
        self.line = grid.line
        self.rule = grid.rule
        self.budget = budget or settings.QUAD_BUDGET

    # ---------- adaptive fallback ----------

    def _gl_batch(self, g: Integrand, lefts: np.ndarray, rights: np.ndarray) -> np.ndarray:
        mid, half = 0.5 * (lefts + rights), 0.5 * (rights - lefts)
        t = mid[:, None] + half[:, None] * self.rule.nodes[None, :]
        vals = np.asarray(g(t.ravel()), dtype=float).reshape(t.shape)
        if not np.all(np.isfinite(vals)):
            bad = t[~np.isfinite(vals)][0]
            logger.error(f"Non-finite integrand at t = {bad}")
            raise SingularityError(f"integrand is not finite at interior point {bad}")
        return half * (vals @ self.rule.weights)

    def adaptive(
        self,
        g: Integrand,
        a: float,
        b: float,
        tol: float,
        oscillatory: bool = True,
        breakpoints: Optional[Sequence[float]] = None,
    ) -> IntegralResult:
        """Adaptive GL on [a, b]: a panel is accepted once it agrees with its two halves."""
        if b <= a:
            return IntegralResult(value=0.0, abs_error_estimate=0.0, evaluations=0)
        cuts = [a] + sorted(p for p in (breakpoints or []) if a < p < b) + [b]
        lefts, rights = [], []
        for lo, hi in zip(cuts[:-1], cuts[1:]):
            pieces = 1
            if oscillatory:
                pieces = max(1, int(math.ceil((hi - lo) / float(panel_width(hi, self.grid.spec.oversample)))))
            edges = np.linspace(lo, hi, pieces + 1)
            lefts.append(edges[:-1])
            rights.append(edges[1:])
        lefts, rights = np.concatenate(lefts), np.concatenate(rights)

        total, err, evals = 0.0, 0.0, 0
        span = b - a
        while lefts.size:
            mids = 0.5 * (lefts + rights)
            whole = self._gl_batch(g, lefts, rights)
            halves = self._gl_batch(g, lefts, mids) + self._gl_batch(g, mids, rights)
            evals += 3 * self.rule.order * lefts.size
            if evals > self.budget:
                logger.error(f"Adaptive quadrature on [{a}, {b}] exceeded {self.budget} evaluations")
                raise ToleranceUnreachableError(
                    f"tolerance {tol:g} on [{a}, {b}] not reached within {self.budget} evaluations"
                )
            e = np.abs(whole - halves)
            width = rights - lefts
            done = (e <= tol * width / span) | (width <= 1e-12 * np.maximum(1.0, np.abs(rights)))
            total += float(halves[done].sum())
            err += float(e[done].sum())
            keep = ~done
            lefts, rights = (
                np.concatenate([lefts[keep], mids[keep]]),
                np.concatenate([mids[keep], rights[keep]]),
            )
        return IntegralResult(value=total, abs_error_estimate=err, evaluations=evals)

    def _grid_or_adaptive(self, fn: PanelFn, a: float, b: float, tol: float, breakpoints=None) -> IntegralResult:
        if breakpoints is None or len(breakpoints) == 0:
            value, err, evals = self.grid.panel_integral(a, b, fn)
        else:
            cuts = [a] + sorted(p for p in breakpoints if a < p < b) + [b]
            value, err, evals = 0.0, 0.0, 0
            for lo, hi in zip(cuts[:-1], cuts[1:]):
                v, e, n = self.grid.panel_integral(lo, hi, fn)
                value, err, evals = value + v, err + e, evals + n
        if err <= tol:
            return IntegralResult(value=value, abs_error_estimate=err, evaluations=evals)
        logger.debug(f"Panel estimate {err:.3g} above tol {tol:.3g} on [{a}, {b}]; refining adaptively")
        return self.adaptive(
            lambda t: fn(t, self.line.z2_array(t)), a, b, tol, oscillatory=True, breakpoints=breakpoints
        )

    # ---------- Z^2 ----------

    def integrate_z2(self, a: float, b: float, tol: float = 1e-6) -> IntegralResult:
        if a < 0 or b < a:
            raise DomainError(f"integrate_z2 needs 0 <= a <= b, got [{a}, {b}]")
        if a == b:
            return IntegralResult(value=0.0, abs_error_estimate=0.0, evaluations=0)
        fb, eb, nb = self.grid.cumulative(b)
        fa, ea, na = self.grid.cumulative(a)
        if ea + eb <= tol:
            return IntegralResult(value=fb - fa, abs_error_estimate=ea + eb, evaluations=na + nb)
        return self._grid_or_adaptive(lambda t, z2: z2, a, b, tol)

    def hl_cumulative(self, T: float) -> float:
        if T < 0:
            raise DomainError(f"hl_cumulative needs T >= 0, got {T}")
        return self.grid.cumulative(T)[0]

    def integrate_z4(self, a: float, b: float, tol: float = 1e-6) -> IntegralResult:
        if a < 0 or b < a:
            raise DomainError(f"integrate_z4 needs 0 <= a <= b, got [{a}, {b}]")
        return self._grid_or_adaptive(lambda t, z2: z2 * z2, a, b, tol)

    # ---------- exponential weights ----------

    @staticmethod
    def truncation_point(x: float, tol: float, power: int = 0) -> float:
        """t* where e^(-2t/x) t^(power+1) ln t falls to tol/10."""
        target = math.log(tol / 10.0)

        def excess(t):
            return -2.0 * t / x + (power + 1) * math.log(t) + math.log(math.log(t)) - target

        if excess(x) <= 0.0:
            return x
        return brentq(excess, x, 500.0 * x, xtol=1e-9 * x)

    def integrate_kernel(
        self, kernel: Integrand, x: float, a_param: float, tol: float, power: int = 0
    ) -> IntegralResult:
        """int_0^{t_cut} Z^2 kernel with t_cut = min(mu[x], t*) and the dropped tail in the error."""
        mu = a_param * x * math.log(x)
        t_star = self.truncation_point(x, tol, power)
        t_cut = min(mu, t_star)
        tail = 0.0
        if t_cut < mu:
            tail = math.exp(-2.0 * t_cut / x) * t_cut ** (power + 1) * math.log(t_cut)
        res = self._grid_or_adaptive(lambda t, z2: z2 * kernel(t), 0.0, t_cut, max(tol - tail, 0.5 * tol))
        return IntegralResult(
            value=res.value, abs_error_estimate=res.abs_error_estimate + tail, evaluations=res.evaluations
        )

    def integrate_weighted(self, x: float, a_param: float, tol: float = 1e-6) -> IntegralResult:
        """int_0^{mu[x]} Z^2(t) e^(-2t/x) dt, truncated where the weight is spent."""
        if x < 10.0:
            raise DomainError(f"integrate_weighted needs x >= 10, got {x}")
        if not 7.0 <= a_param <= 8.0:
            raise DomainError(f"a_param must lie in [7, 8], got {a_param}")
        return self.integrate_kernel(lambda t: np.exp(-2.0 * t / x), x, a_param, tol)

    # ---------- composite ----------

    def integrate_composite(
        self,
        f: Optional[Integrand],
        weight,
        a: float,
        b: float,
        tol: float = 1e-6,
        profile=None,
        image_space: bool = False,
        endpoint_singular: bool = False,
        breakpoints: Optional[Sequence[float]] = None,
    ) -> IntegralResult:
        """
        int_a^b f(phi1(t)) w(t) dt for w in {Z^2, Z~^2, Z^4(phi1) Z^2}.

        With image_space the integral is taken in x = phi1(t), where
        Z~^2 dt = dx and Z^2 dt = (Z^2/Z~^2)(t(x)) dx; breakpoints are then
        x-values. endpoint_singular maps x = c + r sin u so integrable
        inverse-square-root endpoint singularities disappear.
        """
        weight = CompositeWeight(weight)
        if b < a:
            raise DomainError(f"integrate_composite needs a <= b, got [{a}, {b}]")
        if profile is None:
            if weight != CompositeWeight.Z2 or f is not None:
                raise DomainError("a phi1 profile is needed for composite weights and non-constant f")
            return self.integrate_z2(a, b, tol)
        f = f if f is not None else (lambda x: np.ones_like(x))

        if not image_space:
            if weight == CompositeWeight.Z2:
                def fn(t, z2):
                    return f(profile.phi1_array(t)) * z2
            elif weight == CompositeWeight.ZTILDE2:
                def fn(t, z2):
                    return f(profile.phi1_array(t)) * profile.ztilde2_from_z2(t, z2)
            else:
                def fn(t, z2):
                    x = profile.phi1_array(t)
                    return f(x) * self.line.z2_array(x) ** 2 * z2
            return self._grid_or_adaptive(fn, a, b, tol, breakpoints)

        xa, xb = float(profile.phi1_array(np.array([a]))[0]), float(profile.phi1_array(np.array([b]))[0])
        cuts = sorted(set(profile.image_breakpoints(xa, xb)) | set(breakpoints or []))

        if weight == CompositeWeight.Z4_OF_PHI1_TIMES_Z2:
            def fn(x, z2x):
                return f(x) * z2x * z2x * profile.density_ratio(profile.inverse_array(x))
            return self._grid_or_adaptive(fn, xa, xb, tol, cuts)

        if weight == CompositeWeight.ZTILDE2:
            def g(x):
                return f(x)
        else:
            def g(x):
                return f(x) * profile.density_ratio(profile.inverse_array(x))

        if not endpoint_singular:
            return self.adaptive(g, xa, xb, tol, oscillatory=False, breakpoints=cuts)

        c, r = 0.5 * (xa + xb), 0.5 * (xb - xa)
        u_cuts = [math.asin(max(-1.0, min(1.0, (p - c) / r))) for p in cuts if xa < p < xb]
        return self.adaptive(
            lambda u: g(c + r * np.sin(u)) * r * np.cos(u),
            -0.5 * math.pi,
            0.5 * math.pi,
            tol,
            oscillatory=False,
            breakpoints=u_cuts,
        )
