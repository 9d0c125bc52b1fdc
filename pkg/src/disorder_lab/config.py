"""Experiment configuration loading and validation."""

from __future__ import annotations

import os
from enum import Enum
from pathlib import Path
from typing import Any

import yaml
from pydantic import BaseModel, ConfigDict, Field, model_validator

from disorder_lab.errors import ConfigError
from disorder_lab.models import (
    DisorderFamily,
    DisorderSpec,
    Endpoint,
    ModelKind,
    PolymerMode,
    RenewalSpec,
    WalkFamily,
    WalkSpec,
)
from disorder_lab.utils.task_cache import stable_hash

THREADS_ENV = "DISORDER_LAB_THREADS"


class ExperimentKind(str, Enum):
    PINNING_Z = "pinning-z"
    POLYMER_Z = "polymer-z"
    OVERLAP = "overlap"
    CHAOS_ORACLE_CHECK = "chaos-oracle-check"
    LINDEBERG = "lindeberg"
    CONTINUUM_CHAOS = "continuum-chaos"
    MARGINAL_SCAN = "marginal-scan"
    THETA_BLOCKS = "theta-blocks"
    FREE_ENERGY = "free-energy"
    CRITICAL_POINT = "critical-point"
    SCALING_COLLAPSE = "scaling-collapse"


class OutputFormat(str, Enum):
    CSV = "csv"
    JSON = "json"


class ThetaNormalization(str, Enum):
    OVERLAP = "overlap"   # (M / R_N)^{1/2}
    LOG = "log"           # (M / log N)^{1/2}


class ExperimentConfig(BaseModel):
    """Top-level configuration of one experiment run."""
    model_config = ConfigDict(extra="forbid")

    experiment: ExperimentKind
    model: ModelKind = ModelKind.PINNING

    disorder: DisorderSpec = Field(default_factory=DisorderSpec)
    # second environment law of two-sample experiments
    disorder_b: DisorderSpec = Field(default_factory=lambda: DisorderSpec(family=DisorderFamily.RADEMACHER))
    renewal: RenewalSpec = Field(default_factory=RenewalSpec)
    walk: WalkSpec = Field(default_factory=WalkSpec)

    # model parameters
    N: int = Field(256, ge=1)
    beta: float = 0.0
    h: float = 0.0
    beta_hat: float = Field(0.5, ge=0)
    h_hat: float = 0.0
    t: float = Field(1.0, gt=0)
    mesh: float = Field(2.0 ** -12, gt=0, le=1)
    k_max: int = Field(12, ge=0, le=64)
    mean_interarrival: float | None = Field(None, gt=0)
    endpoint: Endpoint = Endpoint.FREE
    mode: PolymerMode = PolymerMode.POINT_TO_PLANE
    x: list[int] | None = None
    tol: float = Field(1e-6, gt=0, le=1e-3)
    M: int = Field(8, ge=1)
    normalization: ThetaNormalization = ThetaNormalization.OVERLAP

    # grids
    N_grid: list[int] = Field(default_factory=list)
    beta_hat_grid: list[float] = Field(default_factory=list)
    h_grid: list[float] = Field(default_factory=list)
    delta_grid: list[float] = Field(default_factory=list)
    N_per_delta: int = Field(16, ge=1)

    # free-energy scans
    threshold: float | None = Field(None, gt=0)
    levels: int = Field(6, ge=0, le=40)

    # run control
    samples: int = Field(1000, ge=2)
    master_seed: int = Field(0, ge=0, lt=2 ** 64)
    threads: int | None = Field(None, ge=1)
    output: Path = Path("./results")
    format: OutputFormat = OutputFormat.CSV

    @model_validator(mode="before")
    @classmethod
    def _model_from_experiment(cls, data: Any) -> Any:
        if isinstance(data, dict) and "model" not in data:
            if data.get("experiment") == ExperimentKind.POLYMER_Z.value:
                data = {**data, "model": ModelKind.POLYMER.value}
        return data

    @model_validator(mode="after")
    def _check_grids(self) -> "ExperimentConfig":
        if any(n < 1 for n in self.N_grid):
            raise ValueError("N_grid entries must be >= 1")
        if any(b < 0 for b in self.beta_hat_grid):
            raise ValueError("beta_hat_grid entries must be >= 0")
        if any(not 0 < d <= 1 for d in self.delta_grid):
            raise ValueError("delta_grid entries must lie in (0, 1]")
        if self.h_grid and any(b <= a for a, b in zip(self.h_grid, self.h_grid[1:])):
            raise ValueError("h_grid must be strictly increasing")
        if self.experiment is ExperimentKind.SCALING_COLLAPSE and not 0.5 < self.renewal.alpha < 1.0:
            raise ValueError("scaling-collapse needs renewal.alpha in (1/2, 1)")
        if self.experiment is ExperimentKind.PINNING_Z and self.model is not ModelKind.PINNING:
            raise ValueError("pinning-z runs the pinning model")
        if self.experiment is ExperimentKind.POLYMER_Z and self.model is not ModelKind.POLYMER:
            raise ValueError("polymer-z runs the polymer model")
        if self.experiment is ExperimentKind.CRITICAL_POINT and len(self.h_grid) < 2:
            raise ValueError("critical-point needs an h_grid with at least two points")
        if self.model is ModelKind.POLYMER and self.walk.family is WalkFamily.STABLE_1D and self.walk.X_max is None:
            # the default table is far wider than a desk-scale transfer window
            raise ValueError("stable-1d polymers need walk.X_max")
        return self

    @property
    def grid_N(self) -> list[int]:
        return self.N_grid or [self.N]

    @property
    def worker_threads(self) -> int:
        if self.threads:
            return self.threads
        env = os.environ.get(THREADS_ENV, "")
        return int(env) if env.isdigit() and int(env) > 0 else 1

    @property
    def cache_dir(self) -> Path:
        return self.output / "cache"

    def signature(self) -> str:
        """Hash of every field that affects results (not threads, output or format)."""
        return stable_hash(self.model_dump(mode="json", exclude={"threads", "output", "format"}))

    def ensure_dirs(self) -> None:
        self.output = self.output.resolve()
        self.output.mkdir(parents=True, exist_ok=True)


def _set_path(raw: dict, dotted: str, value: Any) -> None:
    keys = dotted.split(".")
    node = raw
    for key in keys[:-1]:
        child = node.get(key)
        if not isinstance(child, dict):
            child = {}
            node[key] = child
        node = child
    node[keys[-1]] = value


def apply_overrides(raw: dict, overrides: list[str] | tuple[str, ...]) -> dict:
    """Apply ``key.sub=value`` overrides; values are parsed as YAML scalars."""
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form key=value")
        key, _, text = item.partition("=")
        _set_path(raw, key.strip(), yaml.safe_load(text))
    return raw


def load_raw(config_path: str | Path) -> dict:
    """Read a YAML config or a manifest.json (whose ``config`` entry is used)."""
    path = Path(config_path)
    if not path.exists():
        raise ConfigError(f"Config file not found: {path}")
    with open(path, "r", encoding="utf-8") as f:
        raw = yaml.safe_load(f) or {}
    if not isinstance(raw, dict):
        raise ConfigError(f"Config file {path} must hold a mapping")
    if "config" in raw and "config_hash" in raw:
        raw = dict(raw["config"])
    return raw


def load_config(config_path: str | Path | None = None, overrides: list[str] | tuple[str, ...] = ()) -> ExperimentConfig:
    """Load and validate an experiment config; pydantic errors carry field paths."""
    raw = load_raw(config_path) if config_path is not None else {}
    raw = apply_overrides(raw, overrides)
    return ExperimentConfig.model_validate(raw)
