import math
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

REPORT_SCHEMA_VERSION = 1


class CompositeWeight(str, Enum):
    Z2 = "z2"
    ZTILDE2 = "ztilde2"
    Z4_OF_PHI1_TIMES_Z2 = "z4_of_phi1_times_z2"


class OutputFormat(str, Enum):
    CSV = "csv"
    JSON = "json"


class Command(str, Enum):
    CACHE = "cache"
    LADDER = "ladder"
    ZEROS = "zeros"
    VERIFY = "verify"
    SWEEP = "sweep"
    SCAN = "scan"
    PROFILE = "profile"


# ----------------------------------------
# critical line
# ----------------------------------------

class ThetaValue(BaseModel):
    t: float = Field(ge=2.0)
    theta: float


class ZValue(BaseModel):
    t: float
    z: float


class ZeroPair(BaseModel):
    gamma: float
    gamma_prime: float
    refinement_width: float = Field(ge=0.0)

    @model_validator(mode="after")
    def _ordered(self):
        if not self.gamma < self.gamma_prime:
            raise ValueError(f"zero pair out of order: {self.gamma} >= {self.gamma_prime}")
        return self

    @property
    def gap(self) -> float:
        return self.gamma_prime - self.gamma


class SValue(BaseModel):
    t: float
    s: float
    zero_count: int = Field(
        ge=0,
        description="N(t): number of zeros with ordinate in (0, t)"
    )


# ----------------------------------------
# quadrature
# ----------------------------------------

class GridSpec(BaseModel):
    """Identity of a sample grid; two grids with equal specs hold equal samples."""
    model_config = ConfigDict(frozen=True)

    oversample: int = Field(default=4, ge=4)
    gl_order: int = Field(default=15, ge=3)
    correction_depth: int = Field(default=4, ge=0, le=4)
    rs_min_t: float = Field(default=200.0, ge=10.0)
    block_panels: int = Field(default=64, ge=1)

    @property
    def key(self) -> str:
        return (
            f"grid_os{self.oversample}_gl{self.gl_order}_rs{self.correction_depth}"
            f"_lo{self.rs_min_t:g}_b{self.block_panels}"
        )


class IntegralResult(BaseModel):
    value: float
    abs_error_estimate: float = Field(ge=0.0)
    evaluations: int = Field(ge=0)


# ----------------------------------------
# ladder
# ----------------------------------------

class LadderConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    a_param: float = Field(
        default=7.0, ge=7.0, le=8.0,
        description="mu-multiplier: mu[phi] = a phi ln phi"
    )
    epsilon: float = Field(default=0.01, gt=0.0, lt=0.1)
    tol_residual: float = Field(default=1e-8, gt=0.0)
    anchor_spacing: float = Field(default=64.0, gt=0.0)

    def u0(self, T: float) -> float:
        return T ** (1.0 / 3.0 + 2.0 * self.epsilon)

    def u1(self, T: float) -> float:
        return T ** (7.0 / 8.0 + 2.0 * self.epsilon)

    def u2(self, T: float) -> float:
        return T ** (0.5 + self.epsilon)


class LadderPoint(BaseModel):
    T: float
    phi: float = Field(gt=0.0)
    residual: float = Field(ge=0.0)
    a_param: float

    @property
    def phi1(self) -> float:
        return 0.5 * self.phi


class PhiDerivatives(BaseModel):
    phi_at: float
    phi_prime: float
    phi_second: float


# ----------------------------------------
# geometry
# ----------------------------------------

class Chord(BaseModel):
    T: float
    U: float = Field(gt=0.0)
    tan_alpha: float
    alpha: float

    @classmethod
    def from_endpoints(cls, T: float, U: float, phi_left: float, phi_right: float) -> "Chord":
        tan_alpha = (phi_right - phi_left) / (2.0 * U)
        return cls(T=T, U=U, tan_alpha=tan_alpha, alpha=math.atan(tan_alpha))


class InflectionPoint(BaseModel):
    rho: float
    gamma: float
    gamma_prime: float
    beta: float

    @model_validator(mode="after")
    def _inside_gap(self):
        if not self.gamma < self.rho < self.gamma_prime:
            raise ValueError(f"inflection {self.rho} outside ({self.gamma}, {self.gamma_prime})")
        return self


class ChordScanRow(BaseModel):
    gamma: float
    U: float
    tan_alpha: float
    alpha: float
    lhs: float
    rhs: float
    ratio: float


class SecondClassWindow(BaseModel):
    gamma: float
    gamma_bar: float
    rho_bar: float
    tan_alpha: float


# ----------------------------------------
# verify
# ----------------------------------------

class VerificationReport(BaseModel):
    model_config = ConfigDict(populate_by_name=True)

    schema_version: int = Field(default=REPORT_SCHEMA_VERSION, alias="schema")
    name: str
    T: float
    U: float
    lhs: float
    rhs: float
    ratio: float
    band: Tuple[float, float]
    passed: bool = Field(alias="pass")
    assertable: bool = True
    notes: str = ""
    elapsed_ms: float = 0.0
    details: Dict[str, Any] = Field(default_factory=dict)

    @field_validator("rhs")
    @classmethod
    def _rhs_defined(cls, v: float) -> float:
        if v == 0.0 or not math.isfinite(v):
            raise ValueError(f"rhs must be finite and nonzero, got {v}")
        return v

    @classmethod
    def build(
        cls,
        name: str,
        T: float,
        U: float,
        lhs: float,
        rhs: float,
        band: Tuple[float, float],
        assertable: bool = True,
        notes: str = "",
        elapsed_ms: float = 0.0,
        details: Optional[Dict[str, Any]] = None,
        passed: Optional[bool] = None,
    ) -> "VerificationReport":
        """Ratio and verdict from lhs, rhs and the band; passed overrides the band verdict."""
        ratio = lhs / rhs
        if passed is None:
            passed = bool(band[0] < ratio < band[1])
        return cls(
            name=name,
            T=T,
            U=U,
            lhs=lhs,
            rhs=rhs,
            ratio=ratio,
            band=band,
            passed=passed,
            assertable=assertable,
            notes=notes,
            elapsed_ms=elapsed_ms,
            details=details or {},
        )

    @property
    def failed(self) -> bool:
        """True only for assertable checks outside their band."""
        return self.assertable and not self.passed


# ----------------------------------------
# cli
# ----------------------------------------

class RunConfig(BaseModel):
    command: Command
    T: Optional[float] = None
    U: Optional[float] = None
    a_param: float = Field(default=7.0, ge=7.0, le=8.0)
    epsilon: float = Field(default=0.01, gt=0.0, lt=0.1)
    tol: float = Field(default=1e-8, gt=0.0)
    cache_path: Optional[Path] = None
    format: OutputFormat = OutputFormat.JSON
    threads: int = Field(default=1, ge=1)
    T_list: List[float] = Field(default_factory=list)
    check: Optional[str] = None

    @model_validator(mode="after")
    def _preconditions(self):
        if self.command == Command.LADDER and (self.T is None or self.T < 1e3):
            raise ValueError("ladder needs --T >= 1e3")
        if self.U is not None and self.U <= 0:
            raise ValueError("--U must be positive")
        if self.command == Command.SWEEP and not self.T_list:
            raise ValueError("sweep needs a non-empty --T-list")
        if self.command in (Command.VERIFY, Command.SWEEP, Command.PROFILE):
            heights = ([self.T] if self.T is not None else []) + self.T_list
            if any(T < 1e3 for T in heights):
                raise ValueError(f"{self.command.value} needs every T >= 1e3, got {min(heights):g}")
            # windows bounded by T / ln T
            if self.U is not None and heights and (self.command == Command.PROFILE or self.check == "thm1"):
                lowest = min(heights)
                if self.U > lowest / math.log(lowest):
                    raise ValueError(f"--U = {self.U:g} exceeds T / ln T = {lowest / math.log(lowest):.6g}")
        return self


class GridHeader(BaseModel):
    """Header record of a persisted sample grid."""
    schema_version: int = Field(default=1, alias="schema")
    spec: GridSpec
    t_max: float
    panels: int = Field(ge=0)
    theta_terms: int

    model_config = ConfigDict(populate_by_name=True)
