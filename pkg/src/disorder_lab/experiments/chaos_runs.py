"""Chaos-expansion experiments: oracle equivalence, Lindeberg replacement, continuum series."""

from __future__ import annotations

import math

import click
import numpy as np

from disorder_lab.config import ExperimentConfig
from disorder_lab.core.chaos import (
    chaos_oracle,
    chaos_second_moment,
    lindeberg_distance,
    simulate_continuum_chaos_batch,
)
from disorder_lab.core.disorder import LineSites, eta_transform, log_mgf, sample_field
from disorder_lab.core.partition import continuum_pinning_samples, pinning_partition, polymer_partition
from disorder_lab.core.renewal import RenewalLaw
from disorder_lab.core.stats import MomentAccumulator, ks_critical, ks_statistic, moment_summary
from disorder_lab.errors import DomainError
from disorder_lab.experiments.common import Task, build_model, run_grid, task_seed
from disorder_lab.models import ContinuumPinningParams, DisorderSpec, Endpoint, ResultTable
from disorder_lab.references.base import ContinuumCoefficients, DiscreteCoefficients
from disorder_lab.references.pinning import AlphaContinuum, FiniteMeanContinuum, RenewalCoefficients
from disorder_lab.references.polymer import WalkCoefficients
from disorder_lab.utils.parallel import map_streams
from disorder_lab.utils.seeding import Seed

ORACLE_COLUMNS = ["model", "N", "seed", "replica", "Z_recursion", "Z_chaos", "rel_error"]
LINDEBERG_COLUMNS = ["N", "family_a", "family_b", "samples", "ks_distance", "critical"]
CONTINUUM_COLUMNS = ["quantity", "k", "value", "stderr"]


# ---------------------------------------------------------------------------
# Oracle equivalence
# ---------------------------------------------------------------------------

def oracle_pair(
    model, psi: DiscreteCoefficients, spec: DisorderSpec, beta: float, h: float, seed: Seed
) -> tuple[float, float]:
    """(recursion, chaos sum) of Z for one environment, free endpoint / point-to-plane.

    For the polymer ``h`` is added on top of the normalization -M(beta).
    """
    N = psi.N
    if isinstance(model, RenewalLaw):
        field = sample_field(spec, LineSites(N), seed)
        eta = eta_transform(field, beta, h)
        z = pinning_partition(model, field, beta, h, N, Endpoint.FREE).value
    else:
        h = h - log_mgf(spec, beta)
        field = sample_field(spec, psi.sites, seed)
        eta = eta_transform(field, beta, h)
        z = polymer_partition(model, field, beta, N, h=h).value
    return z, chaos_oracle(psi, eta)


def _oracle_rows(cfg: ExperimentConfig, N: int) -> list[dict]:
    model = build_model(cfg)
    if isinstance(model, RenewalLaw):
        psi, name = RenewalCoefficients(model, N), "pinning"
    else:
        psi, name = WalkCoefficients(model, N), f"polymer({model.family.value})"
    master = task_seed(cfg, f"N={N}")
    rows = []
    for i in range(cfg.samples):
        z, z_chaos = oracle_pair(model, psi, cfg.disorder, cfg.beta, cfg.h, Seed(master, i))
        rows.append({
            "model": name, "N": N, "seed": master, "replica": i,
            "Z_recursion": z, "Z_chaos": z_chaos, "rel_error": abs(z_chaos - z) / abs(z),
        })
    return rows


def run_chaos_oracle_check(cfg: ExperimentConfig, resume: bool = True) -> ResultTable:
    tasks = [Task(f"N={N}", lambda threads, N=N: _oracle_rows(cfg, N)) for N in cfg.grid_N]
    rows = run_grid(cfg, tasks, resume)
    worst = max(r["rel_error"] for r in rows)
    click.echo(f"  Max relative error: {worst:.3e} over {len(rows)} environments")
    return ResultTable(experiment=cfg.experiment.value, columns=ORACLE_COLUMNS, rows=rows)


# ---------------------------------------------------------------------------
# Lindeberg
# ---------------------------------------------------------------------------

def _lindeberg_rows(cfg: ExperimentConfig, N: int) -> list[dict]:
    model = build_model(cfg)
    seed = Seed(task_seed(cfg, f"N={N}"))
    D = lindeberg_distance(model, cfg.disorder, cfg.disorder_b, N, cfg.samples, seed, cfg.beta_hat, cfg.h_hat)
    return [{
        "N": N, "family_a": cfg.disorder.family.value, "family_b": cfg.disorder_b.family.value,
        "samples": cfg.samples, "ks_distance": D, "critical": ks_critical(cfg.samples, cfg.samples),
    }]


def run_lindeberg(cfg: ExperimentConfig, resume: bool = True) -> ResultTable:
    """KS distance between the laws of Z under two disorder families along the N grid."""
    tasks = [Task(f"N={N}", lambda threads, N=N: _lindeberg_rows(cfg, N)) for N in cfg.grid_N]
    rows = run_grid(cfg, tasks, resume)
    return ResultTable(experiment=cfg.experiment.value, columns=LINDEBERG_COLUMNS, rows=rows)


# ---------------------------------------------------------------------------
# Continuum series
# ---------------------------------------------------------------------------

def continuum_coefficients(cfg: ExperimentConfig) -> ContinuumCoefficients:
    if cfg.mean_interarrival is not None:
        return FiniteMeanContinuum(cfg.mean_interarrival)
    return AlphaContinuum(cfg.renewal.alpha)


def continuum_report(cfg: ExperimentConfig, threads: int = 1) -> list[dict]:
    """Second-moment terms and tail bound, Monte Carlo moments of the mesh series,
    and for a finite mean the comparison with the closed-form sampler."""
    psi = continuum_coefficients(cfg)
    master = task_seed(cfg, "continuum")
    rows: list[dict] = []

    try:
        total, report = chaos_second_moment(psi, cfg.beta_hat, cfg.h_hat, cfg.t, cfg.k_max)
    except DomainError:
        total, report = None, None
    if report is not None:
        rows += [{"quantity": "chaos_component_second_moment", "k": k, "value": v, "stderr": None} for k, v in enumerate(report.terms)]
        rows.append({"quantity": "second_moment_truncated", "k": cfg.k_max, "value": total, "stderr": None})
        rows.append({"quantity": "tail_bound", "k": cfg.k_max, "value": report.tail_bound, "stderr": None})

    def batch(streams: range) -> np.ndarray:
        return simulate_continuum_chaos_batch(psi, cfg.beta_hat, cfg.h_hat, cfg.t, cfg.mesh, cfg.k_max, master, streams)

    Z = map_streams(batch, range(cfg.samples), threads, chunk=256)
    first = moment_summary(MomentAccumulator.from_values(Z))
    second = moment_summary(MomentAccumulator.from_values(Z * Z))
    rows.append({"quantity": "mc_mean", "k": cfg.k_max, "value": first.mean, "stderr": first.mean_stderr})
    rows.append({"quantity": "mc_second_moment", "k": cfg.k_max, "value": second.mean, "stderr": second.mean_stderr})

    if isinstance(psi, FiniteMeanContinuum):
        params = ContinuumPinningParams(
            beta_hat=cfg.beta_hat, h_hat=cfg.h_hat, t=cfg.t, mean_interarrival=psi.m,
        )
        exact = continuum_pinning_samples(params, Seed(master, cfg.samples), cfg.samples)
        m = psi.m
        closed = math.exp(2.0 * cfg.h_hat * cfg.t / m + cfg.beta_hat ** 2 * cfg.t / m ** 2)
        rows.append({"quantity": "closed_form_second_moment", "k": None, "value": closed, "stderr": None})
        rows.append({"quantity": "ks_closed_form", "k": cfg.k_max, "value": ks_statistic(Z, exact), "stderr": None})
    return rows


def run_continuum_chaos(cfg: ExperimentConfig, resume: bool = True) -> ResultTable:
    rows = run_grid(cfg, [Task("continuum", lambda threads: continuum_report(cfg, threads))], resume)
    return ResultTable(experiment=cfg.experiment.value, columns=CONTINUUM_COLUMNS, rows=rows)
