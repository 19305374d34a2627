import math

import mpmath
import numpy as np
import pytest

from app.models.errors import DomainError, SingularityError, ToleranceUnreachableError
from app.models.schemas import CompositeWeight
from app.services.quadrature_service import EULER_GAMMA, QuadratureService, hl_main_term


def test_integral_matches_oracle_low_t(quadrature):
    expected = float(mpmath.quad(lambda t: mpmath.siegelz(t) ** 2, [100, 100.5, 101]))
    result = quadrature.integrate_z2(100.0, 101.0)
    assert abs(result.value - expected) < 1e-8
    assert result.abs_error_estimate < 1e-6


def test_integral_matches_oracle_rs_range(quadrature):
    expected = float(mpmath.quad(lambda t: mpmath.siegelz(t) ** 2, np.linspace(1000, 1002, 9).tolist()))
    assert abs(quadrature.integrate_z2(1000.0, 1002.0).value - expected) < 1e-8


def test_checkpoints_agree_with_adaptive(quadrature, line):
    grid_value = quadrature.integrate_z2(1500.0, 1530.0).value
    adaptive = quadrature.adaptive(lambda t: line.z2_array(t), 1500.0, 1530.0, tol=1e-10)
    assert abs(grid_value - adaptive.value) < 1e-8


def test_window_is_additive(quadrature):
    whole = quadrature.integrate_z2(1000.0, 1100.0).value
    parts = quadrature.integrate_z2(1000.0, 1040.3).value + quadrature.integrate_z2(1040.3, 1100.0).value
    assert abs(whole - parts) < 1e-9


def test_hardy_littlewood_main_term(quadrature):
    for T in (1000.0, 3000.0):
        F = quadrature.hl_cumulative(T)
        assert abs(F / hl_main_term(T) - 1.0) < 0.02


def test_main_term_constants():
    assert abs(EULER_GAMMA - 0.5772156649015329) < 1e-15
    assert hl_main_term(0.0) == 0.0
    T = 1e4
    assert math.isclose(hl_main_term(T), T * math.log(T) + (2 * EULER_GAMMA - 1 - math.log(2 * math.pi)) * T)


def test_integrate_z2_domain(quadrature):
    with pytest.raises(DomainError):
        quadrature.integrate_z2(-1.0, 5.0)
    with pytest.raises(DomainError):
        quadrature.integrate_z2(10.0, 5.0)
    assert quadrature.integrate_z2(7.0, 7.0).value == 0.0


def test_z4_integral_matches_adaptive(quadrature, line):
    value = quadrature.integrate_z4(1200.0, 1210.0).value
    adaptive = quadrature.adaptive(lambda t: line.z2_array(t) ** 2, 1200.0, 1210.0, tol=1e-9)
    assert abs(value - adaptive.value) < 1e-6 * abs(adaptive.value)


def test_adaptive_is_exact_on_polynomials(quadrature):
    result = quadrature.adaptive(lambda t: t ** 3, 0.0, 2.0, tol=1e-12, oscillatory=False)
    assert abs(result.value - 4.0) < 1e-12


def test_adaptive_respects_breakpoints(quadrature):
    step = quadrature.adaptive(lambda t: (t > 1.3).astype(float), 0.0, 2.0, tol=1e-12,
                               oscillatory=False, breakpoints=[1.3])
    assert abs(step.value - 0.7) < 1e-12


def test_adaptive_budget(grid):
    tight = QuadratureService(grid, budget=1000)
    with pytest.raises(ToleranceUnreachableError):
        tight.adaptive(lambda t: np.sin(1e4 * t), 0.0, 10.0, tol=1e-14, oscillatory=False)


def test_interior_singularity_is_reported(quadrature):
    with np.errstate(divide="ignore"):
        with pytest.raises(SingularityError):
            quadrature.adaptive(lambda t: 1.0 / (t - 0.5), 0.0, 1.0, tol=1e-8, oscillatory=False)


def test_truncation_point_balances_tail():
    x, tol = 1500.0, 1e-6
    t_star = QuadratureService.truncation_point(x, tol)
    tail = math.exp(-2.0 * t_star / x) * t_star * math.log(t_star)
    assert t_star > x
    assert abs(tail / (tol / 10.0) - 1.0) < 1e-6


def test_weighted_integral_domain(quadrature):
    with pytest.raises(DomainError):
        quadrature.integrate_weighted(5.0, 7.0)
    with pytest.raises(DomainError):
        quadrature.integrate_weighted(1000.0, 6.0)


def test_weighted_integral_against_adaptive(quadrature, line):
    x = 400.0
    result = quadrature.integrate_weighted(x, 7.0, tol=1e-6)
    t_cut = QuadratureService.truncation_point(x, 1e-6)
    adaptive = quadrature.adaptive(lambda t: line.z2_array(t) * np.exp(-2.0 * t / x), 0.0, t_cut, tol=1e-7)
    assert abs(result.value - adaptive.value) < 1e-5
    assert result.abs_error_estimate < 1e-6


def test_composite_without_profile_reduces_to_z2(quadrature):
    direct = quadrature.integrate_z2(1000.0, 1010.0).value
    composite = quadrature.integrate_composite(None, CompositeWeight.Z2, 1000.0, 1010.0)
    assert composite.value == direct
    with pytest.raises(DomainError):
        quadrature.integrate_composite(None, CompositeWeight.ZTILDE2, 1000.0, 1010.0)
    with pytest.raises(DomainError):
        quadrature.integrate_composite(lambda x: x, CompositeWeight.Z2, 1000.0, 1010.0)


def test_weighted_truncation_is_sound(quadrature, line):
    x, tol = 400.0, 1e-6
    t_cut = min(7.0 * x * math.log(x), QuadratureService.truncation_point(x, tol))
    beyond = quadrature.adaptive(
        lambda t: line.z2_array(t) * np.exp(-2.0 * t / x), t_cut, 1.2 * t_cut, tol=tol / 100.0
    )
    assert beyond.value < tol


def test_halving_tolerance_stays_within_estimate(quadrature, line):
    coarse = quadrature.adaptive(lambda t: line.z2_array(t), 1000.0, 1010.0, tol=1e-6)
    fine = quadrature.adaptive(lambda t: line.z2_array(t), 1000.0, 1010.0, tol=5e-7)
    assert abs(fine.value - coarse.value) <= coarse.abs_error_estimate + 1e-12


def test_hardy_littlewood_scale(quadrature):
    T = 1e4
    assert 0.7 < quadrature.hl_cumulative(T) / (T * math.log(T)) < 1.1
