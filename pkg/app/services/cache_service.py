"""
Critical Sample Grid

Z^2 sampled at Gauss-Legendre nodes of panels that resolve every oscillation
of Z, with cumulative checkpoints of F(T) = int_0^T Z^2 every block of panels.

Panels are laid out in blocks from t = 0. Inside a block all panels share one
width, the width demanded at the block's far end, so the layout depends only
on the grid spec and never on how far the grid has been built. Each block is
evaluated on its own; a grid built cold and one extended from disk hold the
same samples bit for bit.

Persistence (GridStore):
- binary: <cache>/<key>/{header.json, edges.npy, z2.npy, values.npy,
  errors.npy, checkpoints.npy}; z2 is memory-mapped on load
- csv: <cache>/<key>.csv with a '# {header}' line, then 't,z2' rows
"""

import logging
import math
import os
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Callable, Optional, Tuple

import numpy as np
from numpy.polynomial.legendre import leggauss, legvander

from app.config import settings
from app.models.errors import CacheFormatError, DomainError
from app.models.schemas import GridHeader, GridSpec
from app.services.critical_line_service import (
    CriticalLineService,
    correction_polynomials,
    theta_prime_array,
)

logger = logging.getLogger(__name__)

MAX_PANEL_WIDTH = 1.0
GROWTH = 1.25
# panels per chunk when streaming nodes back out of the edges
CHUNK_PANELS = 1 << 16

PanelFn = Callable[[np.ndarray, np.ndarray], np.ndarray]


@dataclass(frozen=True)
class GaussLegendreRule:
    nodes: np.ndarray
    weights: np.ndarray
    # rows extracting the two highest Legendre coefficients from node values
    tail: np.ndarray

    @property
    def order(self) -> int:
        return len(self.nodes)


@lru_cache(maxsize=4)
def gauss_legendre(order: int) -> GaussLegendreRule:
    x, w = leggauss(order)
    v = legvander(x, order - 1)
    k = np.array([order - 2, order - 1])
    tail = ((2 * k + 1) / 2.0)[:, None] * (w[None, :] * v[:, k].T)
    return GaussLegendreRule(nodes=x, weights=w, tail=tail)


def panel_width(t, oversample: int, theta_terms: int = None) -> np.ndarray:
    """A quarter oscillation of Z at oversample 4, never wider than 1."""
    tp = theta_prime_array(np.maximum(np.asarray(t, dtype=float), 20.0), theta_terms)
    return np.minimum(MAX_PANEL_WIDTH, 2.0 * math.pi / (oversample * tp))


def gl_panel(fn: PanelFn, line: CriticalLineService, rule: GaussLegendreRule, a: float, b: float):
    """One fresh Gauss-Legendre panel on [a, b]: (value, error, evaluations)."""
    if b <= a:
        return 0.0, 0.0, 0
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    t = mid + half * rule.nodes
    g = fn(t, line.z2_array(t))
    value = half * float(g @ rule.weights)
    err = half * float(np.abs(rule.tail @ g).sum())
    return value, err, rule.order


class CriticalSampleGrid:
    """Z^2 samples with cumulative checkpoints; grows on demand."""

    def __init__(
        self,
        line: CriticalLineService,
        spec: Optional[GridSpec] = None,
        threads: int = None,
        store: Optional["GridStore"] = None,
    ):
        self.spec = spec or GridSpec(
            oversample=settings.OVERSAMPLE,
            gl_order=settings.GL_ORDER,
            correction_depth=settings.CORRECTION_DEPTH,
            rs_min_t=settings.RS_MIN_T,
            block_panels=settings.BLOCK_PANELS,
        )
        if line.correction_depth != self.spec.correction_depth or line.rs_min_t != self.spec.rs_min_t:
            raise DomainError(
                f"grid spec {self.spec.key} does not match the Z evaluator "
                f"(depth {line.correction_depth}, rs_min_t {line.rs_min_t})"
            )
        self.line = line
        self.rule = gauss_legendre(self.spec.gl_order)
        self.threads = threads or settings.THREADS
        self.store = store
        self._lock = threading.Lock()

        n = self.spec.gl_order
        self.edges = np.zeros(1)
        self.z2 = np.zeros((0, n))
        self.values = np.zeros(0)
        self.errors = np.zeros(0)
        self.checkpoints = np.zeros(1)

        if store is not None:
            store.load_into(self)

    # ---------- layout ----------

    @property
    def t_max(self) -> float:
        return float(self.edges[-1])

    @property
    def panels(self) -> int:
        return len(self.values)

    def _next_block(self, start: float) -> np.ndarray:
        os = self.spec.oversample
        terms = self.line.theta_terms
        bp = self.spec.block_panels
        h0 = float(panel_width(start, os, terms))
        h = float(panel_width(start + bp * h0, os, terms))
        return start + h * np.arange(1, bp + 1)

    def layout(self, t_max: float, start_edges: Optional[np.ndarray] = None) -> np.ndarray:
        """Panel edges from the start of the grid until t_max is covered."""
        blocks = [np.zeros(1) if start_edges is None else start_edges]
        start = float(blocks[0][-1])
        while start < t_max:
            block = self._next_block(start)
            blocks.append(block)
            start = float(block[-1])
        return np.concatenate(blocks)

    def panel_nodes(self, i: int, j: int, edges: Optional[np.ndarray] = None) -> Tuple[np.ndarray, np.ndarray]:
        """Nodes (j-i, n) and half widths of panels i..j-1."""
        edges = self.edges if edges is None else edges
        left, right = edges[i:j], edges[i + 1:j + 1]
        mid, half = 0.5 * (left + right), 0.5 * (right - left)
        return mid[:, None] + half[:, None] * self.rule.nodes[None, :], half

    # ---------- build ----------

    def panel_stats(self, z2: np.ndarray, half: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        values = half * (z2 @ self.rule.weights)
        errors = half * np.abs(z2 @ self.rule.tail.T).sum(axis=1)
        return values, errors

    def _evaluate_block(self, bounds: Tuple[int, int], edges: np.ndarray):
        i, j = bounds
        t, half = self.panel_nodes(i, j, edges)
        z2 = self.line.z2_array(t.ravel()).reshape(t.shape)
        values, errors = self.panel_stats(z2, half)
        return z2, values, errors

    def _evaluate(self, first_panel: int, last_panel: int, edges: np.ndarray):
        bp = self.spec.block_panels
        bounds = [(i, min(i + bp, last_panel)) for i in range(first_panel, last_panel, bp)]
        serial = [b for b in bounds if edges[b[0]] < self.line.rs_min_t or self.threads <= 1]
        parallel = [b for b in bounds if b not in serial]

        results = {b: self._evaluate_block(b, edges) for b in serial}
        if parallel:
            correction_polynomials()
            with ThreadPoolExecutor(max_workers=self.threads) as pool:
                for b, res in zip(parallel, pool.map(lambda b: self._evaluate_block(b, edges), parallel)):
                    results[b] = res
        return [results[b] for b in bounds]

    def append_blocks(self, edges: np.ndarray, z2: np.ndarray, values: np.ndarray, errors: np.ndarray):
        """Publishes new panels. edges goes last: t_max never runs ahead of the data."""
        bp = self.spec.block_panels
        sums = values.reshape(-1, bp).sum(axis=1)
        checkpoints = np.concatenate(
            [self.checkpoints[:-1], np.cumsum(np.concatenate([self.checkpoints[-1:], sums]))]
        )
        self.z2 = np.concatenate([self.z2, z2]) if self.panels else z2
        self.errors = np.concatenate([self.errors, errors])
        self.checkpoints = checkpoints
        self.values = np.concatenate([self.values, values])
        self.edges = edges

    def ensure(self, t: float):
        if t <= self.t_max:
            return
        with self._lock:
            if t <= self.t_max:
                return
            goal = max(GROWTH * t, 64.0)
            first = self.panels
            edges = self.layout(goal, self.edges)
            last = len(edges) - 1
            logger.info(f"Extending sample grid to t = {edges[-1]:.6g} ({last - first} new panels)")
            blocks = self._evaluate(first, last, edges)
            self.append_blocks(
                edges,
                np.concatenate([b[0] for b in blocks]),
                np.concatenate([b[1] for b in blocks]),
                np.concatenate([b[2] for b in blocks]),
            )
            logger.info(f"Sample grid ready: {self.panels} panels, F({self.t_max:.6g}) = {self.checkpoints[-1]:.12g}")
            if self.store is not None:
                self.store.save(self)

    # ---------- queries ----------

    def panel_index(self, t: float) -> int:
        k = int(np.searchsorted(self.edges, t, side="right")) - 1
        return min(max(k, 0), self.panels - 1)

    def cumulative(self, T: float) -> Tuple[float, float, int]:
        """F(T) from the checkpoint of T's block, the panels before T and a tail panel."""
        if T <= 0.0:
            return 0.0, 0.0, 0
        self.ensure(T)
        k = self.panel_index(T)
        bp = self.spec.block_panels
        b = k // bp
        value = float(self.checkpoints[b]) + float(np.sum(self.values[b * bp:k]))
        err = float(np.sum(self.errors[b * bp:k]))
        tail, tail_err, evals = gl_panel(lambda t, z2: z2, self.line, self.rule, float(self.edges[k]), T)
        value += tail
        err += tail_err + 4.0 * np.finfo(float).eps * abs(value)
        return value, err, evals

    def panel_integral(self, a: float, b: float, fn: PanelFn) -> Tuple[float, float, int]:
        """int_a^b fn(t, Z^2(t)) dt over the cached panels, fresh panels at both ends."""
        if b <= a:
            return 0.0, 0.0, 0
        self.ensure(b)
        ka, kb = self.panel_index(a), self.panel_index(b)
        if ka == kb:
            return gl_panel(fn, self.line, self.rule, a, b)

        value, err, evals = gl_panel(fn, self.line, self.rule, a, float(self.edges[ka + 1]))
        v, e, n = gl_panel(fn, self.line, self.rule, float(self.edges[kb]), b)
        value, err, evals = value + v, err + e, evals + n

        for i in range(ka + 1, kb, CHUNK_PANELS):
            j = min(i + CHUNK_PANELS, kb)
            t, half = self.panel_nodes(i, j)
            g = fn(t.ravel(), np.asarray(self.z2[i:j]).ravel()).reshape(t.shape)
            vals, errs = self.panel_stats(g, half)
            value += float(vals.sum())
            err += float(errs.sum())
        return value, err, evals


class GridStore:
    """Reads and writes a grid under a cache directory."""

    def __init__(self, root: Path, fmt: str = None):
        self.root = Path(root)
        self.fmt = fmt or settings.CACHE_FORMAT
        if self.fmt not in ("binary", "csv"):
            raise CacheFormatError(f"unknown cache format {self.fmt!r}")

    def _header(self, grid: CriticalSampleGrid) -> GridHeader:
        return GridHeader(
            spec=grid.spec, t_max=grid.t_max, panels=grid.panels, theta_terms=grid.line.theta_terms
        )

    def _check(self, header: GridHeader, grid: CriticalSampleGrid):
        if header.spec != grid.spec or header.theta_terms != grid.line.theta_terms:
            raise CacheFormatError(
                f"cached grid {header.spec.key} (theta terms {header.theta_terms}) "
                f"does not match {grid.spec.key}"
            )

    def save(self, grid: CriticalSampleGrid):
        self.root.mkdir(parents=True, exist_ok=True)
        header = self._header(grid)
        if self.fmt == "binary":
            folder = self.root / grid.spec.key
            folder.mkdir(exist_ok=True)
            for name in ("edges", "z2", "values", "errors", "checkpoints"):
                # replace, never truncate: z2.npy may be memory-mapped by this grid
                tmp = folder / f"{name}.npy.tmp"
                with open(tmp, "wb") as f:
                    np.save(f, np.asarray(getattr(grid, name)))
                os.replace(tmp, folder / f"{name}.npy")
            (folder / "header.json").write_text(header.model_dump_json(by_alias=True))
        else:
            t, _ = grid.panel_nodes(0, grid.panels)
            with open(self.root / f"{grid.spec.key}.csv", "w") as f:
                f.write(f"# {header.model_dump_json(by_alias=True)}\n")
                f.write("t,z2\n")
                np.savetxt(f, np.column_stack([t.ravel(), np.asarray(grid.z2).ravel()]), fmt="%.17g", delimiter=",")
        logger.info(f"Saved sample grid {grid.spec.key} ({grid.panels} panels) to {self.root}")

    def load_into(self, grid: CriticalSampleGrid):
        if self.fmt == "binary":
            folder = self.root / grid.spec.key
            if not (folder / "header.json").exists():
                return
            header = GridHeader.model_validate_json((folder / "header.json").read_text())
            self._check(header, grid)
            try:
                grid.edges = np.load(folder / "edges.npy")
                grid.z2 = np.load(folder / "z2.npy", mmap_mode="r")
                grid.values = np.load(folder / "values.npy")
                grid.errors = np.load(folder / "errors.npy")
                grid.checkpoints = np.load(folder / "checkpoints.npy")
            except (OSError, ValueError) as e:
                raise CacheFormatError(f"unreadable grid files in {folder}: {e}")
        else:
            path = self.root / f"{grid.spec.key}.csv"
            if not path.exists():
                return
            with open(path) as f:
                first = f.readline()
            if not first.startswith("# "):
                raise CacheFormatError(f"{path} has no header line")
            header = GridHeader.model_validate_json(first[2:])
            self._check(header, grid)
            data = np.loadtxt(path, delimiter=",", skiprows=2, ndmin=2)
            edges = grid.layout(header.t_max)
            t, half = grid.panel_nodes(0, header.panels, edges)
            if data.shape != (t.size, 2) or not np.allclose(data[:, 0], t.ravel(), rtol=1e-15, atol=0.0):
                raise CacheFormatError(f"{path} nodes do not match the layout of {grid.spec.key}")
            z2 = data[:, 1].reshape(t.shape)
            bp = grid.spec.block_panels
            stats = [grid.panel_stats(z2[i:i + bp], half[i:i + bp]) for i in range(0, header.panels, bp)]
            grid.append_blocks(edges, z2, np.concatenate([s[0] for s in stats]), np.concatenate([s[1] for s in stats]))

        if len(grid.checkpoints) != grid.panels // grid.spec.block_panels + 1:
            raise CacheFormatError(f"checkpoint count does not match {grid.panels} panels")
        logger.info(f"Loaded sample grid {grid.spec.key}: {grid.panels} panels up to t = {grid.t_max:.6g}")
