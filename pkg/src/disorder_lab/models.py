"""Pydantic data models shared by the library, the experiments and the CLI."""

from __future__ import annotations

import math
from enum import Enum
from typing import Any

from pydantic import BaseModel, ConfigDict, Field, model_validator


# ---------------------------------------------------------------------------
# Enums
# ---------------------------------------------------------------------------

class DisorderFamily(str, Enum):
    GAUSSIAN = "standard-gaussian"
    RADEMACHER = "rademacher"
    EXPONENTIAL = "centered-exponential"


class SlowlyVarying(str, Enum):
    CONSTANT = "constant-1"
    LOG_POWER = "log-power"


class WalkFamily(str, Enum):
    SSRW_1D = "ssrw-1d"
    SSRW_2D = "ssrw-2d"
    STABLE_1D = "stable-1d"


class ModelKind(str, Enum):
    PINNING = "pinning"
    POLYMER = "polymer"


class Endpoint(str, Enum):
    FREE = "free"
    CONSTRAINED = "constrained"


class PolymerMode(str, Enum):
    POINT_TO_PLANE = "point-to-plane"
    POINT_TO_POINT = "point-to-point"


class FieldType(str, Enum):
    OCCUPATION = "occupation"  # sigma in {0, 1}
    SPIN = "spin"              # sigma in {-1, +1}


# ---------------------------------------------------------------------------
# Model specifications (serializable halves of the core types)
# ---------------------------------------------------------------------------

class DisorderSpec(BaseModel):
    """Law of the i.i.d. environment; serializes as {"family", "params"}."""
    model_config = ConfigDict(frozen=True)

    family: DisorderFamily = DisorderFamily.GAUSSIAN
    params: dict[str, float] = Field(default_factory=dict)


class RenewalSpec(BaseModel):
    """Serialized form of a renewal law: {"alpha", "L", "kappa", "N_max"}."""
    model_config = ConfigDict(frozen=True, populate_by_name=True)

    alpha: float = Field(0.75, gt=0)
    L: SlowlyVarying = SlowlyVarying.CONSTANT
    kappa: float = 0.0
    N_max: int = Field(4096, ge=2)


class WalkSpec(BaseModel):
    """Serialized form of a walk law: {"family", "alpha", "X_max"}."""
    model_config = ConfigDict(frozen=True)

    family: WalkFamily = WalkFamily.SSRW_1D
    alpha: float | None = Field(None, ge=1.0, le=2.0)
    X_max: int | None = Field(None, ge=1)

    @model_validator(mode="after")
    def _stable_needs_alpha(self) -> "WalkSpec":
        if self.family is WalkFamily.STABLE_1D and self.alpha is None:
            raise ValueError("stable-1d walks need alpha in [1, 2]")
        return self


# ---------------------------------------------------------------------------
# Partition functions
# ---------------------------------------------------------------------------

class PartitionValue(BaseModel):
    value: float
    log_value: float
    model: ModelKind
    N: int
    beta: float
    h: float
    endpoint: str
    seed_master: int | None = None
    seed_stream: int | None = None
    truncation_error: float = 0.0


class ContinuumPinningParams(BaseModel):
    beta_hat: float = Field(ge=0)
    h_hat: float = 0.0
    t: float = Field(1.0, gt=0)
    mean_interarrival: float = Field(gt=0)

    @model_validator(mode="after")
    def _finite_mean(self) -> "ContinuumPinningParams":
        if not math.isfinite(self.mean_interarrival):
            raise ValueError("continuum pinning sampler needs a finite mean inter-arrival")
        return self


# ---------------------------------------------------------------------------
# Chaos expansion
# ---------------------------------------------------------------------------

class TruncationReport(BaseModel):
    k_max: int
    tail_bound: float
    epsilon_margin: float = 0.0
    terms: list[float] = Field(default_factory=list)


# ---------------------------------------------------------------------------
# Statistics
# ---------------------------------------------------------------------------

class MomentSummary(BaseModel):
    count: int
    mean: float
    variance: float
    skewness: float | None = None
    kurtosis: float | None = None
    mean_stderr: float
    variance_stderr: float | None = None
    kurtosis_undefined: bool = False


# ---------------------------------------------------------------------------
# Marginal relevance
# ---------------------------------------------------------------------------

class LognormalLimit(BaseModel):
    beta_hat: float = Field(ge=0)
    sigma_sq: float | None = None
    degenerate: bool = False

    @property
    def log_mean(self) -> float | None:
        return None if self.sigma_sq is None else -0.5 * self.sigma_sq

    @property
    def second_moment(self) -> float | None:
        return None if self.degenerate else 1.0 / (1.0 - self.beta_hat ** 2)


class ThetaBlock(BaseModel):
    block: int
    lower: int
    upper: int
    exact_variance: float
    mean: float
    variance: float
    skewness: float | None = None
    kurtosis: float | None = None


class ThetaBlockStats(BaseModel):
    N: int
    M: int
    replicas: int
    normalization: str
    blocks: list[ThetaBlock] = Field(default_factory=list)
    correlations: list[list[float]] = Field(default_factory=list)


# ---------------------------------------------------------------------------
# Free energy
# ---------------------------------------------------------------------------

class FreeEnergyEstimate(BaseModel):
    f_hat: float
    f_raw: float
    stderr: float
    N: int
    samples: int
    beta: float
    h: float


class CriticalPointEstimate(BaseModel):
    beta: float
    h_c_hat: float
    h_lo: float
    h_hi: float
    threshold: float

    @property
    def bracket(self) -> tuple[float, float]:
        return self.h_lo, self.h_hi


# ---------------------------------------------------------------------------
# Artifacts
# ---------------------------------------------------------------------------

class ResultTable(BaseModel):
    """Rows of one experiment, keyed by task index for order independence."""
    experiment: str
    columns: list[str]
    rows: list[dict[str, Any]] = Field(default_factory=list)

    def sorted_rows(self) -> list[dict[str, Any]]:
        return sorted(self.rows, key=lambda r: tuple(str(r.get(c)) for c in self.columns))

    def column(self, name: str) -> list[Any]:
        return [r[name] for r in self.rows]


class Manifest(BaseModel):
    config: dict[str, Any]
    config_hash: str
    seed: int
    version: str
    threads: int
    started: str
    elapsed: float = 0.0
