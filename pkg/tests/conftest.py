import sys
from pathlib import Path

import pytest

# Add parent directory to path for imports
sys.path.insert(0, str(Path(__file__).parent.parent))

from app.models.schemas import GridSpec, LadderConfig
from app.services.cache_service import CriticalSampleGrid
from app.services.critical_line_service import CriticalLineService
from app.services.geometry_service import GeometryService
from app.services.ladder_service import LadderService
from app.services.prime_service import PrimeService
from app.services.quadrature_service import QuadratureService
from app.services.verify_service import VerifyService


def pytest_addoption(parser):
    parser.addoption("--runslow", action="store_true", default=False, help="run desk-scale checks at T >= 1e4")
    parser.addoption(
        "--runlarge", action="store_true", default=False,
        help="run checks whose sample grid reaches 1e6 and beyond (gigabytes, hours)",
    )


def pytest_configure(config):
    config.addinivalue_line("markers", "slow: desk-scale check that builds a large sample grid")
    config.addinivalue_line("markers", "large: check at T >= 1e5 whose sample grid reaches 1e6 and beyond")


def pytest_collection_modifyitems(config, items):
    skips = {
        "slow": (config.getoption("--runslow"), pytest.mark.skip(reason="needs --runslow")),
        "large": (config.getoption("--runlarge"), pytest.mark.skip(reason="needs --runlarge")),
    }
    for item in items:
        for marker, (enabled, skip) in skips.items():
            if marker in item.keywords and not enabled:
                item.add_marker(skip)


@pytest.fixture(scope="session")
def primes():
    return PrimeService(limit=10_000_000)


@pytest.fixture(scope="session")
def line(primes):
    return CriticalLineService(correction_depth=4, rs_min_t=200.0, primes=primes)


@pytest.fixture(scope="session")
def grid(line):
    spec = GridSpec(oversample=4, gl_order=15, correction_depth=4, rs_min_t=200.0, block_panels=64)
    return CriticalSampleGrid(line, spec, threads=2)


@pytest.fixture(scope="session")
def quadrature(grid):
    return QuadratureService(grid)


@pytest.fixture(scope="session")
def cfg():
    return LadderConfig(a_param=7.0, epsilon=0.01, tol_residual=1e-8, anchor_spacing=32.0)


@pytest.fixture(scope="session")
def ladder(quadrature, cfg):
    return LadderService(quadrature, cfg, threads=2)


@pytest.fixture(scope="session")
def geometry(ladder):
    return GeometryService(ladder, alpha_band_units="angle")


@pytest.fixture(scope="session")
def verify(ladder, geometry):
    return VerifyService(ladder, geometry, threads=2)
