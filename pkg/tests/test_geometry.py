import math

import numpy as np
import pytest

from app.models.errors import DeviationExceededError, DomainError
from app.models.schemas import Chord, ZeroPair
from app.services.geometry_service import GeometryService, default_eta


@pytest.fixture(scope="module")
def first_pair(line):
    return line.find_zeros(1000.0, 1003.0)[0]


@pytest.fixture(scope="module")
def inflection(geometry, first_pair):
    return geometry.find_inflection(first_pair)


def test_chord_slope_near_mean_density(geometry, cfg):
    chord = geometry.chord(1000.0, cfg.u0(1000.0))
    assert 0.5 < chord.tan_alpha < 1.5
    assert chord.alpha == math.atan(chord.tan_alpha)


def test_chord_domain(geometry):
    with pytest.raises(DomainError):
        geometry.chord(1000.0, 0.0)


def test_almost_parallel():
    chord = Chord.from_endpoints(1000.0, 10.0, 2000.0, 2019.0)
    assert chord.tan_alpha == pytest.approx(0.95)
    assert GeometryService.is_almost_parallel(chord, 0.1)
    assert not GeometryService.is_almost_parallel(chord, 0.01)
    with pytest.raises(DomainError):
        GeometryService.is_almost_parallel(chord, 0.0)


def test_default_eta_shrinks():
    assert 0.0 < default_eta(1e6) < default_eta(1e3) < 1.0


def test_profile_chord_matches_direct_chord(geometry, ladder, cfg):
    profile = ladder.phi1_profile(1000.0, 40.0, cfg)
    direct = geometry.chord(1000.0, 32.0)
    from_profile = geometry.profile_chord(profile, 1000.0, 32.0)
    assert abs(from_profile.tan_alpha - direct.tan_alpha) < 1e-4


def test_inflection_inside_gap(inflection, first_pair):
    assert first_pair.gamma >= 1000.0
    assert first_pair.gamma < inflection.rho < first_pair.gamma_prime
    assert 0.0 < inflection.beta < 0.5 * math.pi


def test_inflection_domain(geometry, line):
    pair = line.find_zeros(900.0, 902.0)[0]
    with pytest.raises(DomainError):
        geometry.find_inflection(pair)


def test_rotating_chord_scan(geometry, inflection):
    rows = geometry.rotating_chord_scan(inflection.gamma, inflection.rho, 12, beta=inflection.beta)
    assert all(r.alpha <= inflection.beta + 1e-9 for r in rows)
    assert len(rows) == 12
    assert np.all(np.diff([r.U for r in rows]) > 0.0)
    assert rows[-1].U == pytest.approx(inflection.rho - inflection.gamma)
    assert all(r.lhs >= 0.0 and math.isfinite(r.ratio) for r in rows)
    with pytest.raises(DomainError):
        geometry.rotating_chord_scan(inflection.rho, inflection.gamma, 4)


def test_rotating_chord_scan_checks_beta(geometry, inflection):
    with pytest.raises(DeviationExceededError):
        geometry.rotating_chord_scan(inflection.gamma, inflection.rho, 12, beta=0.0)


def test_parallel_gap_chords(geometry, inflection):
    rows = geometry.parallel_gap_chords(inflection, 6)
    assert len(rows) <= 6
    for row in rows:
        assert inflection.gamma < row.gamma < inflection.rho
        assert row.gamma + row.U <= inflection.gamma_prime
        assert row.tan_alpha == pytest.approx(math.tan(inflection.beta))


def test_second_class_window(geometry, cfg, first_pair):
    window = geometry.second_class_window(first_pair.gamma)
    assert window.gamma_bar >= first_pair.gamma + cfg.u0(first_pair.gamma)
    assert window.gamma < window.rho_bar < window.gamma_bar
    assert window.tan_alpha > 0.0


def test_second_class_scan_keeps_admissible_angles(geometry, first_pair):
    eta = 0.2
    rows = geometry.second_class_scan(first_pair.gamma, 24, eta=eta)
    assert len(rows) <= 24
    for row in rows:
        assert eta <= row.alpha <= 0.5 * math.pi - eta


def test_second_class_domain(geometry):
    with pytest.raises(DomainError):
        geometry.second_class_window(500.0)


def test_zero_gap_fraction(geometry):
    result = geometry.zero_gap_fraction(1000.0)
    assert result.gaps > 0
    assert 0.0 <= result.fraction <= 1.0
    assert result.threshold == pytest.approx(3.0 * math.log(math.log(1000.0)) / math.log(1000.0))


def test_zero_pair_is_ordered():
    with pytest.raises(ValueError):
        ZeroPair(gamma=2.0, gamma_prime=1.0, refinement_width=0.0)


def test_mean_value_family_tracks_chord_slope(geometry, cfg):
    U0 = cfg.u0(1000.0)
    samples = geometry.mean_value_family(1000.0, 8)
    assert len(samples) == 8
    for sample in samples:
        assert 1000.0 <= sample.N < sample.M <= 1000.0 + U0 + 1e-9
        assert 1.0 / 1.3 < sample.agreement < 1.3
    with pytest.raises(DomainError):
        geometry.mean_value_family(500.0, 4)
    with pytest.raises(DomainError):
        geometry.mean_value_family(1000.0, 0)
