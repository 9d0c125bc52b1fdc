"""Partition-function and overlap tables: pinning-z, polymer-z, overlap."""

from __future__ import annotations

import math

from disorder_lab.config import ExperimentConfig
from disorder_lab.core.disorder import SpaceTimeSites, log_mgf, sample_field
from disorder_lab.core.partition import polymer_partition, polymer_radii
from disorder_lab.core.renewal import RenewalLaw, dichotomy_partial_sums
from disorder_lab.experiments.common import (
    Task,
    build_model,
    model_label,
    model_overlap,
    run_grid,
    sample_log_Z,
    task_seed,
)
from disorder_lab.errors import ConfigError
from disorder_lab.models import ModelKind, PolymerMode, ResultTable
from disorder_lab.utils.seeding import Seed

Z_COLUMNS = ["model", "N", "beta", "h", "endpoint", "seed", "replica", "log_Z", "Z"]
OVERLAP_COLUMNS = ["model", "N", "R_N", "dichotomy_sum"]


def _point_to_point_logs(cfg: ExperimentConfig, walk, N: int, h: float, master: int) -> list[float]:
    if cfg.x is None:
        raise ConfigError("point-to-point polymer runs need x")
    sites = SpaceTimeSites(N, walk.dim, polymer_radii(walk, N, cfg.tol))
    return [
        polymer_partition(
            walk, sample_field(cfg.disorder, sites, Seed(master, i)), cfg.beta, N,
            PolymerMode.POINT_TO_POINT, tuple(cfg.x), cfg.tol, h,
        ).log_value
        for i in range(cfg.samples)
    ]


def _z_rows(cfg: ExperimentConfig, N: int, threads: int) -> list[dict]:
    model = build_model(cfg)
    label = f"N={N}"
    master = task_seed(cfg, label)
    if cfg.model is ModelKind.PINNING:
        h, endpoint = cfg.h, cfg.endpoint.value
        logs = sample_log_Z(model, cfg.disorder, N, cfg.beta, h, master, cfg.samples, threads, cfg.endpoint)
    else:
        # polymer weights are normalized by e^{-M(beta)}; cfg.h shifts on top of that
        h, endpoint = cfg.h - log_mgf(cfg.disorder, cfg.beta), cfg.mode.value
        if cfg.mode is PolymerMode.POINT_TO_POINT:
            logs = _point_to_point_logs(cfg, model, N, h, master)
        else:
            logs = sample_log_Z(model, cfg.disorder, N, cfg.beta, h, master, cfg.samples, threads, tol=cfg.tol)
    name = model_label(model)
    return [
        {
            "model": name, "N": N, "beta": cfg.beta, "h": h, "endpoint": endpoint,
            "seed": master, "replica": i, "log_Z": float(v), "Z": math.exp(v) if v < 709.0 else math.inf,
        }
        for i, v in enumerate(logs)
    ]


def run_partition_z(cfg: ExperimentConfig, resume: bool = True) -> ResultTable:
    """log Z of ``samples`` environments at every N of the grid (pinning-z, polymer-z)."""
    tasks = [Task(f"N={N}", lambda threads, N=N: _z_rows(cfg, N, threads)) for N in cfg.grid_N]
    rows = run_grid(cfg, tasks, resume)
    return ResultTable(experiment=cfg.experiment.value, columns=Z_COLUMNS, rows=rows)


def _overlap_rows(cfg: ExperimentConfig, N: int) -> list[dict]:
    model = build_model(cfg)
    dichotomy = float(dichotomy_partial_sums(model, N)[-1]) if isinstance(model, RenewalLaw) else None
    return [{"model": model_label(model), "N": N, "R_N": model_overlap(model, N), "dichotomy_sum": dichotomy}]


def run_overlap(cfg: ExperimentConfig, resume: bool = True) -> ResultTable:
    """R_N along the N grid, with the marginal dichotomy partial sums for pinning."""
    tasks = [Task(f"N={N}", lambda threads, N=N: _overlap_rows(cfg, N)) for N in cfg.grid_N]
    rows = run_grid(cfg, tasks, resume)
    return ResultTable(experiment=cfg.experiment.value, columns=OVERLAP_COLUMNS, rows=rows)
