"""
Command line of the ladder laboratory.

    python -m app.main cache build --tmax 1e6
    python -m app.main ladder --T 1e4 --a 7.5
    python -m app.main zeros --lo 10 --hi 100
    python -m app.main verify thm1 --T 1e5 --U 1e3
    python -m app.main sweep --name gaplaw --T-list 1e3 1e4 1e5

Tables and reports go to stdout (or --out), logs to stderr. Exit status:
2 for usage errors, 1 for computation errors, otherwise 0 when every
assertable report passed; sweep exits with the number of failed reports.
"""

import argparse
import logging
import math
import sys
from contextlib import contextmanager
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np
from pydantic import ValidationError

from app.config import settings
from app.models.errors import LadderLabError
from app.models.schemas import Command, GridHeader, GridSpec, LadderConfig, OutputFormat, RunConfig
from app.services.cache_service import CriticalSampleGrid, GridStore
from app.services.critical_line_service import CriticalLineService
from app.services.geometry_service import GeometryService
from app.services.ladder_service import LadderService
from app.services.prime_service import PrimeService
from app.services.quadrature_service import QuadratureService
from app.services.verify_service import VerifyService
from app.utils import export

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

logger = logging.getLogger(__name__)

# command-line check names -> VerifyService.run names
VERIFY_NAMES = {
    "thm1": "theorem1",
    "fundamental": "fundamental",
    "meanvalue": "mean_value",
    "thm2": "theorem2",
    "subst": "substitution",
    "cheb": "chebyshev",
    "selberg": "selberg_moment",
    "prediction": "point_prediction",
    "secondclass": "second_class",
    "density": "density",
    "gaplaw": "gap_law",
    "thm2trend": "theorem2_trend",
}
TREND_CHECKS = ("gaplaw", "thm2trend")


@dataclass
class Services:
    primes: PrimeService
    line: CriticalLineService
    grid: CriticalSampleGrid
    quadrature: QuadratureService
    ladder: LadderService
    geometry: GeometryService
    verify: VerifyService


def build_services(run: RunConfig, oversample: Optional[int] = None, cache_format: Optional[str] = None) -> Services:
    """Wires the service stack; flags win over JLL_* environment values."""
    threads = run.threads
    cache = run.cache_path or settings.CACHE
    primes = PrimeService()
    line = CriticalLineService(primes=primes)
    spec = GridSpec(
        oversample=oversample or settings.OVERSAMPLE,
        gl_order=settings.GL_ORDER,
        correction_depth=line.correction_depth,
        rs_min_t=line.rs_min_t,
        block_panels=settings.BLOCK_PANELS,
    )
    store = GridStore(cache, cache_format) if cache else None
    grid = CriticalSampleGrid(line, spec, threads=threads, store=store)
    quadrature = QuadratureService(grid)
    cfg = LadderConfig(
        a_param=run.a_param,
        epsilon=run.epsilon,
        tol_residual=run.tol,
        anchor_spacing=settings.ANCHOR_SPACING,
    )
    ladder = LadderService(quadrature, cfg, threads=threads)
    geometry = GeometryService(ladder)
    verify = VerifyService(ladder, geometry, threads=threads)
    return Services(primes, line, grid, quadrature, ladder, geometry, verify)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--a", type=float, default=settings.A_PARAM, help="mu-multiplier a in [7, 8]")
    common.add_argument("--epsilon", type=float, default=settings.EPSILON)
    common.add_argument("--tol", type=float, default=settings.TOL_RESIDUAL, help="relative ladder residual")
    common.add_argument("--cache", type=Path, default=None, help="sample-grid cache directory")
    common.add_argument("--cache-format", choices=["binary", "csv"], default=None)
    common.add_argument("--oversample", type=int, default=None)
    common.add_argument("--threads", type=int, default=settings.THREADS)
    common.add_argument("--format", choices=[f.value for f in OutputFormat], default=None)
    common.add_argument("--out", type=Path, default=None)
    common.add_argument("-v", "--verbose", action="store_true")
    common.add_argument("-q", "--quiet", action="store_true")

    parser = argparse.ArgumentParser(prog="ladderlab", description="Jacob's ladder numerical laboratory")
    sub = parser.add_subparsers(dest="command", required=True)

    cache = sub.add_parser("cache", parents=[common], help="build the Z^2 sample grid")
    cache.add_argument("action", choices=["build"])
    cache.add_argument("--tmax", type=float, required=True)

    ladder = sub.add_parser("ladder", parents=[common], help="solve phi(T)")
    ladder.add_argument("--T", type=float, nargs="+", required=True)

    zeros = sub.add_parser("zeros", parents=[common], help="zeros of Z as consecutive pairs")
    zeros.add_argument("--lo", type=float, required=True)
    zeros.add_argument("--hi", type=float, required=True)

    verify = sub.add_parser("verify", parents=[common], help="run one check")
    verify.add_argument("name", choices=sorted(VERIFY_NAMES))
    _check_params(verify)

    sweep = sub.add_parser("sweep", parents=[common], help="run one check over a list of T")
    sweep.add_argument("--name", choices=sorted(VERIFY_NAMES), required=True)
    _check_params(sweep)

    scan = sub.add_parser("scan", parents=[common], help="rotating chord scan from a zero")
    scan.add_argument("--gamma", type=float, required=True, help="scan starts at the first zero >= gamma")
    scan.add_argument("--n-angles", type=int, default=32)
    scan.add_argument("--second-class", action="store_true")

    profile = sub.add_parser("profile", parents=[common], help="dump phi1 on [T, T+U]")
    profile.add_argument("--T", type=float, required=True)
    profile.add_argument("--U", type=float, required=True)
    profile.add_argument("--points", type=int, default=1025)
    return parser


def _check_params(p: argparse.ArgumentParser):
    p.add_argument("--T", type=float, default=None)
    p.add_argument("--U", type=float, default=None)
    p.add_argument("--T-list", dest="T_list", type=float, nargs="+", default=[])
    p.add_argument("--N", type=float, default=None)
    p.add_argument("--M", type=float, default=None)
    p.add_argument("--n", type=int, default=1, help="Chebyshev degree")
    p.add_argument("--k", type=int, default=1, help="moment order")
    p.add_argument("--f", dest="f_id", default="one", help="one | linear | chebyshev(n) | prime_pi | selberg_pow(k)")
    p.add_argument("--form", default="transport", choices=["transport", "direct", "inverse", "inverse_transport"])


def configure_logging(verbose: bool, quiet: bool):
    level = logging.DEBUG if verbose else logging.WARNING if quiet else logging.INFO
    logging.basicConfig(level=level, format=LOG_FORMAT, stream=sys.stderr, force=True)


@contextmanager
def _output(path: Optional[Path]):
    if path is None:
        yield sys.stdout
        return
    with open(path, "w", newline="") as f:
        yield f


def _run_config(args: argparse.Namespace) -> RunConfig:
    default_format = OutputFormat.CSV if args.command in ("ladder", "zeros", "scan", "profile") else OutputFormat.JSON
    T = args.T[0] if isinstance(getattr(args, "T", None), list) else getattr(args, "T", None)
    return RunConfig(
        command=Command(args.command),
        T=T,
        U=getattr(args, "U", None),
        a_param=args.a,
        epsilon=args.epsilon,
        tol=args.tol,
        cache_path=args.cache,
        format=OutputFormat(args.format) if args.format else default_format,
        threads=args.threads,
        T_list=getattr(args, "T_list", []) or [],
        check=getattr(args, "name", None),
    )


def _verify(services: Services, args: argparse.Namespace, run: RunConfig) -> list:
    name = args.name
    if name in TREND_CHECKS:
        T_list = run.T_list or ([run.T] if run.T else [])
        if not T_list:
            raise argparse.ArgumentTypeError(f"{name} needs --T-list")
        return services.verify.sweep(VERIFY_NAMES[name], T_list)
    if name == "meanvalue":
        N = args.N if args.N is not None else run.T
        if N is None:
            raise argparse.ArgumentTypeError("meanvalue needs --N or --T")
        T_ref = run.T if run.T is not None else N
        if args.M is not None:
            M = args.M
        else:
            M = N + run.U if run.U else T_ref + services.ladder.cfg.u0(T_ref)
        return [services.verify.verify_mean_value(N, M, T=run.T)]
    if run.T is None:
        raise argparse.ArgumentTypeError(f"{name} needs --T")
    return [services.verify.run(
        VERIFY_NAMES[name], run.T, run.U, f_id=args.f_id, form=args.form, n=args.n, k=args.k
    )]


def _sweep(services: Services, args: argparse.Namespace, run: RunConfig) -> list:
    if args.name in TREND_CHECKS:
        return services.verify.sweep(VERIFY_NAMES[args.name], run.T_list)
    return services.verify.sweep(
        VERIFY_NAMES[args.name], run.T_list, run.U, f_id=args.f_id, form=args.form, n=args.n, k=args.k
    )


def _first_pair(services: Services, gamma: float):
    reach = gamma
    while True:
        step = 4.0 * math.pi / float(services.line.theta_prime(np.array([reach]))[0])
        pairs = services.line.find_zeros(reach, reach + step)
        if pairs:
            return pairs[0]
        reach += step


def dispatch(services: Services, args: argparse.Namespace, run: RunConfig, out) -> int:
    if run.command == Command.CACHE:
        services.grid.ensure(args.tmax)
        header = GridHeader(
            spec=services.grid.spec, t_max=services.grid.t_max,
            panels=services.grid.panels, theta_terms=services.line.theta_terms,
        )
        export.write_rows([export.dump_model(header)], out, OutputFormat.JSON)
        return 0

    if run.command == Command.LADDER:
        points = services.ladder.ladder_table(args.T)
        export.write_rows(export.ladder_rows(points), out, run.format, ["T", "phi", "residual", "a"])
        return 0

    if run.command == Command.ZEROS:
        pairs = services.line.find_zeros(args.lo, args.hi)
        export.write_rows(export.zero_rows(pairs), out, run.format, ["gamma", "gamma_prime"])
        return 0

    if run.command == Command.SCAN:
        pair = _first_pair(services, args.gamma)
        if args.second_class:
            rows = services.geometry.second_class_scan(pair.gamma, args.n_angles)
        else:
            inflection = services.geometry.find_inflection(pair)
            rows = services.geometry.rotating_chord_scan(
                pair.gamma, inflection.rho, args.n_angles, beta=inflection.beta
            )
        export.write_rows(export.scan_rows(rows), out, run.format,
                          ["gamma", "U", "tan_alpha", "lhs", "rhs", "ratio"])
        return 0

    if run.command == Command.PROFILE:
        profile = services.ladder.phi1_profile(run.T, run.U)
        t = np.linspace(run.T, run.T + run.U, args.points)
        export.write_rows(export.profile_rows(t, profile.phi1_array(t)), out, run.format, ["t", "phi1"])
        return 0

    reports = _verify(services, args, run) if run.command == Command.VERIFY else _sweep(services, args, run)
    export.write_reports(reports, out, run.format)
    failed = sum(r.failed for r in reports)
    for r in reports:
        if r.failed:
            logger.warning(f"{r.name} at T = {r.T:.6g}: ratio {r.ratio:.6g} outside {r.band}")
    if run.command == Command.SWEEP:
        return failed
    return 1 if failed else 0


def run(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 0 if e.code == 0 else 2
    configure_logging(args.verbose, args.quiet)

    try:
        run_config = _run_config(args)
        services = build_services(run_config, args.oversample, args.cache_format)
        with _output(args.out) as out:
            return dispatch(services, args, run_config, out)
    except (ValidationError, argparse.ArgumentTypeError) as e:
        logger.error(f"Invalid arguments: {e}")
        return 2
    except LadderLabError as e:
        logger.error(f"{e.error_type}: {e.message}")
        return 1


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
