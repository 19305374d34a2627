from pathlib import Path
from typing import Literal, Optional

from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    # Sample-grid cache (binary .npy files or CSV); unset keeps it in memory
    CACHE: Optional[Path] = None
    CACHE_FORMAT: Literal["binary", "csv"] = "binary"
    THREADS: int = 1

    # Sample grid: panel width is one oversample-th of a Z oscillation
    OVERSAMPLE: int = 4
    GL_ORDER: int = 15
    BLOCK_PANELS: int = 64

    # Riemann-Siegel evaluation
    CORRECTION_DEPTH: int = 4
    RS_MIN_T: float = 200.0
    THETA_TERMS: int = 6

    # Zero scanning and S(t)
    ZERO_SCAN_OVERSAMPLE: int = 8
    ZERO_WIDTH: float = 1e-9
    S_BOUND: float = 3.0

    # Prime sieve
    SIEVE_LIMIT: int = 100_000_000
    SIEVE_SEGMENT: int = 1 << 20

    # Ladder defaults
    A_PARAM: float = 7.0
    EPSILON: float = 0.01
    TOL_RESIDUAL: float = 1e-8
    ANCHOR_SPACING: float = 64.0

    # Second-class angle band: "angle" reads [eta, pi/2 - eta] radians, "slope" reads tan
    ALPHA_BAND_UNITS: Literal["angle", "slope"] = "angle"

    # Adaptive quadrature evaluation budget (Z evaluations)
    QUAD_BUDGET: int = 20_000_000

    class Config:
        env_file = ".env"
        env_prefix = "JLL_"


settings = Settings()
