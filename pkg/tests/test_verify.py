import math

import numpy as np
import pytest

from app.models.errors import DomainError, SignViolationError
from app.services.verify_service import IDENTITY_BAND, eps_hat
from app.utils import export


def strong_point(line, lo, hi):
    """A t in [lo, hi] with Z^2(t) well above zero."""
    t = np.linspace(lo, hi, 401)
    return float(t[np.argmax(line.z2_array(t))])


def test_eps_hat():
    assert eps_hat(1e3) == pytest.approx(math.log(math.log(1e3)) / math.log(1e3))
    assert eps_hat(1e6) < eps_hat(1e3)


def test_image_function_integrals(verify):
    prime_pi = verify.image_function("prime_pi", 10.0, 20.0)
    assert prime_pi.integral(10.0, 20.0) == 60.0
    assert prime_pi.breakpoints == [11.0, 13.0, 17.0, 19.0]
    cheb = verify.image_function("chebyshev(0)", 0.0, 2.0)
    assert cheb.integral(0.0, 2.0) == pytest.approx(2.0)
    # T_3 on [-1, 0] integrates to 1/2
    cheb3 = verify.image_function("chebyshev(3)", 0.0, 2.0)
    assert cheb3.integral(0.0, 2.0) == pytest.approx(1.0)
    assert cheb3.sign_checked
    assert verify.image_function("linear", 0.0, 1.0).integral(1.0, 3.0) == 4.0


def test_unknown_image_function(verify):
    with pytest.raises(DomainError):
        verify.image_function("sine", 1000.0, 1010.0)
    with pytest.raises(DomainError):
        verify.image_function("one two", 1000.0, 1010.0)


@pytest.mark.parametrize("f_id", ["one", "linear", "chebyshev(3)"])
def test_transport_identity(verify, f_id):
    report = verify.verify_substitution(f_id, 1000.0, 100.0, "transport")
    assert report.band == IDENTITY_BAND
    assert report.passed, report.ratio
    assert report.name.startswith("substitution_transport_")


def test_inverse_transport_identity(verify):
    report = verify.verify_substitution("one", 1000.0, 50.0, "inverse_transport")
    assert report.passed, report.ratio
    assert report.details["x_lo"] == 1000.0
    assert report.details["t_lo"] > 1000.0


def test_direct_form_needs_one_sign(verify):
    with pytest.raises(SignViolationError):
        verify.verify_substitution("chebyshev(3)", 1000.0, 100.0, "direct")


def test_direct_form_of_one(verify):
    report = verify.verify_substitution("one", 1000.0, 100.0, "direct")
    assert report.passed
    # the mean of Z^2 / ln T sits just below one at this height
    assert 0.85 < report.ratio < 1.05


def test_inverse_prime_pi(verify):
    report = verify.verify_substitution("prime_pi", 1000.0, 50.0, "inverse")
    assert math.isfinite(report.details["prime_ratio"])
    assert report.passed


def test_unknown_form(verify):
    with pytest.raises(DomainError):
        verify.verify_substitution("one", 1000.0, 10.0, "sideways")


def test_theorem1_at_u0(verify, cfg):
    report = verify.verify_theorem1(1000.0, cfg.u0(1000.0))
    e = eps_hat(1000.0)
    assert report.band == pytest.approx((1.0 - 3.0 * e, 1.0 + 3.0 * e))
    assert report.assertable
    assert report.passed
    assert report.ratio == pytest.approx(report.lhs / report.rhs)


def test_theorem1_window(verify):
    with pytest.raises(DomainError):
        verify.verify_theorem1(1000.0, 200.0)
    tiny = verify.verify_theorem1(1000.0, 1e-3)
    assert not tiny.assertable


def test_fundamental(verify):
    report = verify.verify_fundamental(1000.0)
    assert report.passed
    assert "almost_parallel" in report.details


def test_mean_value_domain(verify):
    with pytest.raises(DomainError):
        verify.verify_mean_value(1010.0, 1000.0)
    with pytest.raises(DomainError):
        verify.verify_mean_value(1000.0, 1000.0 + 2.0 * verify.cfg.u0(1000.0), T=1000.0)
    with pytest.raises(DomainError):
        verify.verify_mean_value(990.0, 1000.0, T=1000.0)


def test_mean_value_across_a_zero(verify, line):
    gamma = line.find_zeros(1000.0, 1003.0)[0].gamma
    report = verify.verify_mean_value(gamma - 0.15, gamma + 0.15)
    # both sides are small here but stay tied through the chord slope
    assert report.ratio < 1.0
    assert 1.0 / 1.3 < report.details["agreement"] < 1.3


def test_full_window_recovers_fundamental(verify):
    whole = verify.verify_mean_value(1000.0, 1000.0 + verify.cfg.u0(1000.0))
    assert whole.lhs == pytest.approx(verify.verify_fundamental(1000.0).lhs, rel=1e-9)


def test_density(verify, line):
    t = strong_point(line, 1000.0, 1005.0)
    report = verify.verify_density(t)
    assert report.assertable
    assert report.passed, report.ratio


def test_gap_law(verify):
    report = verify.verify_gap_law([2000.0, 1000.0, 1500.0])
    assert report.details["T"] == [1000.0, 1500.0, 2000.0]
    assert all(0.5 < r < 2.0 for r in report.details["ratios"])
    assert report.T == 2000.0


@pytest.mark.parametrize("n", [0, 1])
def test_chebyshev(verify, n):
    report = verify.verify_chebyshev(n, 1000.0)
    expected = (math.pi if n == 0 else 0.5 * math.pi) * math.log(1000.0)
    assert report.rhs == pytest.approx(expected)
    assert report.passed, report.ratio


def test_chebyshev_domain(verify):
    with pytest.raises(DomainError):
        verify.verify_chebyshev(-1, 1000.0)


def test_report_only_checks(verify):
    selberg = verify.verify_selberg_moment(1, 1000.0)
    prediction = verify.point_prediction(1000.0, 10.0)
    for report in (selberg, prediction):
        assert not report.assertable
        assert not report.failed
        assert math.isfinite(report.ratio)
    assert 1000.0 <= prediction.details["omega"] <= 1010.0


def test_point_prediction_scans_u1_window(verify, cfg):
    U = cfg.u1(1000.0)
    coarse = verify.point_prediction(1000.0, samples_per_unit=32)
    fine = verify.point_prediction(1000.0, samples_per_unit=64)
    assert coarse.U == pytest.approx(U)
    assert 1000.0 <= fine.details["omega"] <= 1000.0 + U
    assert abs(fine.details["omega"] - coarse.details["omega"]) < U / 100.0
    assert not fine.failed


def test_point_prediction_never_raises_on_short_window(verify):
    report = verify.point_prediction(1600.0, 0.5)
    assert 1600.0 <= report.details["omega"] <= 1600.5
    assert isinstance(report.details["crossing"], bool)
    assert report.details["crossing"] or report.details["level_miss"] > 0.0
    assert not report.failed


def test_second_class(verify, line):
    gamma = line.find_zeros(1000.0, 1003.0)[0].gamma
    report = verify.verify_second_class(gamma)
    assert report.U >= verify.cfg.u0(gamma)
    assert math.isfinite(report.ratio)


def test_run_dispatch(verify):
    assert verify.run("theorem1", 1000.0).name == "theorem1"
    assert verify.run("substitution", 1000.0, 20.0, f_id="linear").name == "substitution_transport_linear"
    with pytest.raises(DomainError):
        verify.run("riemann", 1000.0)


def test_sweep_is_sorted(verify):
    reports = verify.sweep("fundamental", [1200.0, 1000.0])
    assert [r.T for r in reports] == [1000.0, 1200.0]


def test_report_schema(verify):
    report = verify.verify_theorem1(1000.0, 10.0)
    data = export.report_dict(report)
    assert data["schema"] == 1
    assert "pass" in data and "passed" not in data
    row = export.report_row(report)
    assert list(row) == export.REPORT_COLUMNS
    assert row["band_lo"] < row["band_hi"]


@pytest.mark.slow
def test_theorem2_desk_scale(verify):
    report = verify.verify_theorem2(1e4)
    assert math.isfinite(report.ratio)
    assert 0.9 < report.details["transport_ratio"] < 1.05
    assert 0.5 < report.details["translation_ratio"] < 2.0
    assert "window" in report.notes


@pytest.mark.slow
def test_theorem2_trend(verify):
    report = verify.verify_theorem2_trend([1e4, 2e4])
    assert len(report.details["ratios"]) == 2
    assert report.T == 2e4


def upper_windows(T, count=20):
    return np.geomspace(1.0, 0.999 * T / math.log(T), count)


@pytest.mark.parametrize(
    "T", [pytest.param(1e4, marks=pytest.mark.slow), pytest.param(1e5, marks=pytest.mark.large)]
)
def test_theorem1_band_over_windows(verify, T):
    for U in upper_windows(T):
        report = verify.verify_theorem1(T, float(U))
        assert not report.failed, (U, report.ratio)


@pytest.mark.parametrize(
    "T",
    [
        pytest.param(1e4, marks=pytest.mark.slow),
        pytest.param(1e5, marks=pytest.mark.large),
        pytest.param(1e6, marks=pytest.mark.large),
    ],
)
def test_fundamental_at_height(verify, T):
    report = verify.verify_fundamental(T)
    assert abs(report.details["tan_alpha"] - 1.0) <= 3.0 * eps_hat(T)


@pytest.mark.large
def test_fundamental_deviation_settles(verify):
    deviations = [abs(verify.verify_fundamental(T).details["tan_alpha"] - 1.0) for T in (1e4, 1e5, 1e6)]
    assert all(b <= a + 0.05 for a, b in zip(deviations, deviations[1:]))


@pytest.mark.parametrize(
    "T_list",
    [
        pytest.param([1e3, 1e4], marks=pytest.mark.slow),
        pytest.param([1e3, 1e4, 1e5], marks=pytest.mark.large),
    ],
)
def test_gap_law_settles(verify, T_list):
    report = verify.verify_gap_law(T_list)
    assert report.details["settling"]
    assert report.passed


@pytest.mark.large
def test_theorem2_settles(verify):
    report = verify.verify_theorem2_trend([3e3, 1e4, 3e4])
    assert report.details["settling"]
    assert report.passed


@pytest.mark.parametrize(
    "T", [pytest.param(1e4, marks=pytest.mark.slow), pytest.param(1e5, marks=pytest.mark.large)]
)
def test_chebyshev_degrees_agree(verify, T):
    reports = [verify.verify_chebyshev(n, T) for n in (1, 2, 5)]
    assert all(r.passed for r in reports), [r.ratio for r in reports]
    ratios = [r.ratio for r in reports]
    assert max(ratios) / min(ratios) <= 1.3
