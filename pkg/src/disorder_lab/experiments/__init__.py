"""Experiment suites and the dispatcher that runs one config end to end."""

from __future__ import annotations

import time
from datetime import datetime
from typing import Callable

import click

from disorder_lab.config import ExperimentConfig, ExperimentKind
from disorder_lab.models import ResultTable

Runner = Callable[[ExperimentConfig, bool], ResultTable]


def _registry() -> dict[ExperimentKind, Runner]:
    from disorder_lab.experiments.chaos_runs import run_chaos_oracle_check, run_continuum_chaos, run_lindeberg
    from disorder_lab.experiments.marginal import run_marginal_scan, run_theta_blocks
    from disorder_lab.experiments.partition_runs import run_overlap, run_partition_z
    from disorder_lab.experiments.scaling import run_critical_point, run_free_energy, run_scaling_collapse

    return {
        ExperimentKind.PINNING_Z: run_partition_z,
        ExperimentKind.POLYMER_Z: run_partition_z,
        ExperimentKind.OVERLAP: run_overlap,
        ExperimentKind.CHAOS_ORACLE_CHECK: run_chaos_oracle_check,
        ExperimentKind.LINDEBERG: run_lindeberg,
        ExperimentKind.CONTINUUM_CHAOS: run_continuum_chaos,
        ExperimentKind.MARGINAL_SCAN: run_marginal_scan,
        ExperimentKind.THETA_BLOCKS: run_theta_blocks,
        ExperimentKind.FREE_ENERGY: run_free_energy,
        ExperimentKind.CRITICAL_POINT: run_critical_point,
        ExperimentKind.SCALING_COLLAPSE: run_scaling_collapse,
    }


def run_experiment(cfg: ExperimentConfig, resume: bool = True, write: bool = True) -> ResultTable:
    """Run the configured experiment; write its table and manifest.json under ``cfg.output``."""
    from disorder_lab.experiments.common import write_manifest, write_table

    started = datetime.now().astimezone()
    start = time.time()
    table = _registry()[cfg.experiment](cfg, resume)
    if write:
        write_table(cfg, table)
        path = write_manifest(cfg, started, time.time() - start)
        click.echo(f"  Manifest: {path}")
    return table
