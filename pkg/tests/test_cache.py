import json
import threading
import time

import numpy as np
import pytest

from app.models.errors import CacheFormatError, DomainError
from app.models.schemas import GridSpec
from app.services.cache_service import CriticalSampleGrid, GridStore, gauss_legendre, panel_width
from app.services.critical_line_service import CriticalLineService

SPEC = GridSpec(oversample=4, gl_order=15, correction_depth=4, rs_min_t=200.0, block_panels=64)


def small_grid(line, store=None, spec=SPEC):
    return CriticalSampleGrid(line, spec, threads=1, store=store)


def test_panel_width_shrinks_with_t():
    widths = panel_width(np.array([10.0, 100.0, 1e3, 1e5]), 4)
    assert widths[0] == 1.0
    assert np.all(np.diff(widths) <= 0.0)
    assert widths[-1] < 0.5


def test_gauss_legendre_rule():
    rule = gauss_legendre(15)
    assert rule.order == 15
    assert abs(rule.weights.sum() - 2.0) < 1e-14
    # degree 13 and 14 coefficients of a degree-12 polynomial vanish
    assert np.allclose(rule.tail @ rule.nodes ** 12, 0.0, atol=1e-13)


def test_spec_must_match_evaluator(line):
    other = CriticalLineService(correction_depth=2, rs_min_t=200.0, primes=line.primes)
    with pytest.raises(DomainError):
        CriticalSampleGrid(other, SPEC)


def test_blocks_and_checkpoints(line):
    grid = small_grid(line)
    grid.ensure(500.0)
    assert grid.t_max >= 500.0
    assert grid.panels % SPEC.block_panels == 0
    assert len(grid.checkpoints) == grid.panels // SPEC.block_panels + 1
    assert abs(grid.checkpoints[-1] - grid.values.sum()) < 1e-9 * grid.checkpoints[-1]
    # every block shares one width
    widths = np.diff(grid.edges).reshape(-1, SPEC.block_panels)
    assert np.allclose(widths, widths[:, :1], rtol=1e-12, atol=0.0)


def test_extended_grid_equals_cold_grid(line):
    cold = small_grid(line)
    cold.ensure(900.0)
    warm = small_grid(line)
    warm.ensure(300.0)
    warm.ensure(900.0)
    n = min(cold.panels, warm.panels)
    assert np.array_equal(cold.edges[:n + 1], warm.edges[:n + 1])
    assert np.array_equal(cold.z2[:n], warm.z2[:n])
    assert cold.cumulative(850.0) == warm.cumulative(850.0)


def test_threaded_build_is_bitwise_serial(line):
    serial = small_grid(line)
    serial.ensure(1500.0)
    threaded = CriticalSampleGrid(line, SPEC, threads=4)
    threaded.ensure(1500.0)
    assert np.array_equal(serial.z2, threaded.z2)
    assert np.array_equal(serial.checkpoints, threaded.checkpoints)



def test_reader_waits_for_extension(line):
    grid = small_grid(line)
    grid.ensure(300.0)
    entered = threading.Event()
    evaluate = grid._evaluate

    def slow_evaluate(first, last, edges):
        entered.set()
        time.sleep(1.0)
        return evaluate(first, last, edges)

    grid._evaluate = slow_evaluate
    writer = threading.Thread(target=grid.ensure, args=(1000.0,))
    writer.start()
    assert entered.wait(30.0)
    # the extension is in flight: t_max still shows the old grid
    assert grid.t_max < 600.0
    value = grid.cumulative(600.0)[0]
    writer.join()
    cold = small_grid(line)
    cold.ensure(1000.0)
    assert value == pytest.approx(cold.cumulative(600.0)[0], rel=1e-12)
    assert grid.panels == len(grid.edges) - 1

@pytest.mark.parametrize("fmt", ["binary", "csv"])
def test_store_round_trip(line, tmp_path, fmt):
    built = small_grid(line, GridStore(tmp_path, fmt))
    built.ensure(600.0)
    loaded = small_grid(line, GridStore(tmp_path, fmt))
    assert loaded.panels == built.panels
    assert np.array_equal(loaded.edges, built.edges)
    assert np.array_equal(np.asarray(loaded.z2), np.asarray(built.z2))
    assert loaded.cumulative(555.5)[0] == pytest.approx(built.cumulative(555.5)[0], rel=1e-14)
    # growing a loaded grid appends the same blocks as a cold build
    loaded.ensure(900.0)
    cold = small_grid(line)
    cold.ensure(900.0)
    n = min(cold.panels, loaded.panels)
    assert np.array_equal(np.asarray(loaded.z2)[:n], cold.z2[:n])


def test_store_rejects_foreign_header(line, tmp_path):
    grid = small_grid(line, GridStore(tmp_path, "binary"))
    grid.ensure(300.0)
    header_path = tmp_path / SPEC.key / "header.json"
    header = json.loads(header_path.read_text())
    header["theta_terms"] = 99
    header_path.write_text(json.dumps(header))
    with pytest.raises(CacheFormatError):
        small_grid(line, GridStore(tmp_path, "binary"))


def test_csv_with_wrong_nodes_is_rejected(line, tmp_path):
    grid = small_grid(line, GridStore(tmp_path, "csv"))
    grid.ensure(300.0)
    path = tmp_path / f"{SPEC.key}.csv"
    lines = path.read_text().splitlines()
    t, z2 = lines[5].split(",")
    lines[5] = f"{float(t) + 1e-3!r},{z2}"
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(CacheFormatError):
        small_grid(line, GridStore(tmp_path, "csv"))


def test_unknown_store_format(tmp_path):
    with pytest.raises(CacheFormatError):
        GridStore(tmp_path, "parquet")


def test_missing_cache_starts_empty(line, tmp_path):
    grid = small_grid(line, GridStore(tmp_path / "nothing", "binary"))
    assert grid.panels == 0
    assert grid.cumulative(0.0) == (0.0, 0.0, 0)
