"""Free energies, critical-point scans and the weak-disorder scaling collapse."""

from __future__ import annotations

import math

import click
import numpy as np
from scipy.optimize import brentq

from disorder_lab.config import ExperimentConfig
from disorder_lab.core.disorder import log_mgf
from disorder_lab.core.partition import pinning_weak_scaling
from disorder_lab.core.renewal import RenewalLaw, build_renewal_law
from disorder_lab.errors import ConfigError, DomainError
from disorder_lab.experiments.common import ModelLaw, Task, build_model, run_grid, sample_log_Z, task_seed
from disorder_lab.models import (
    CriticalPointEstimate,
    DisorderSpec,
    Endpoint,
    FreeEnergyEstimate,
    ResultTable,
    SlowlyVarying,
)
from disorder_lab.utils.seeding import task_master

FREE_ENERGY_COLUMNS = ["beta", "h", "N", "samples", "f_hat", "f_raw", "stderr", "pure_oracle"]
CRITICAL_COLUMNS = ["beta", "h_c_hat", "h_lo", "h_hi", "threshold", "N", "samples"]
COLLAPSE_COLUMNS = [
    "delta", "N", "beta", "h", "f_hat", "stderr", "collapsed_value", "collapsed_stderr", "pure_oracle",
]

MIN_FREE_ENERGY_N = 2 ** 8


def pure_free_energy(law: RenewalLaw, h: float) -> float:
    """F(0, h): the root F >= 0 of sum_n K(n) e^{-F n} = e^{-h}, 0 when h <= 0."""
    n = np.arange(1, law.N_max + 1, dtype=float)
    K = law.pmf[1:]

    def g(F: float) -> float:
        # mass beyond the table is placed at N_max
        return math.log(math.fsum(K * np.exp(-F * n)) + law.tail_mass * math.exp(-F * law.N_max)) + h

    if h <= 0.0 or g(0.0) <= 0.0:
        return 0.0
    return brentq(g, 0.0, h + 1.0, xtol=1e-14, rtol=1e-12)


def free_energy_estimate(
    model: ModelLaw,
    spec: DisorderSpec,
    beta: float,
    h: float,
    N: int,
    samples: int,
    master: int,
    threads: int = 1,
) -> FreeEnergyEstimate:
    """(1/N) mean log Z over environments, with h recentered to h - M(beta).

    f_hat is clamped at 0; the unclamped mean is kept as f_raw.
    """
    if N < MIN_FREE_ENERGY_N:
        raise DomainError(f"free-energy estimates need N >= {MIN_FREE_ENERGY_N}, got N={N}")
    h_eff = h - log_mgf(spec, beta)
    log_z = sample_log_Z(model, spec, N, beta, h_eff, master, samples, threads, Endpoint.FREE)
    f = log_z / N
    f_raw = float(np.mean(f))
    stderr = float(np.std(f, ddof=1) / math.sqrt(samples))
    return FreeEnergyEstimate(f_hat=max(f_raw, 0.0), f_raw=f_raw, stderr=stderr, N=N, samples=samples, beta=beta, h=h)


def default_threshold(estimates: list[FreeEnergyEstimate]) -> float:
    """3 standard errors, the largest over the grid."""
    return 3.0 * max(e.stderr for e in estimates)


def critical_point_scan(
    model: ModelLaw,
    spec: DisorderSpec,
    beta: float,
    h_grid: list[float],
    N: int,
    samples: int,
    master: int,
    threshold: float | None = None,
    levels: int = 6,
    threads: int = 1,
) -> CriticalPointEstimate:
    """Bracket h_c(beta) = sup{h : f(beta, h) = 0} on the grid, then bisect ``levels`` times.

    h counts as localized when the unclamped estimate f_raw strictly exceeds
    the threshold, so a zero threshold (beta = 0, where every environment
    gives the same Z) still separates f = 0 from f > 0. All evaluations
    share one set of environments. The grid values are smoothed to their
    running maximum before the first crossing is located.
    """
    if len(h_grid) < 2 or any(b <= a for a, b in zip(h_grid, h_grid[1:])):
        raise ConfigError("h_grid must be strictly increasing with at least two points")

    def estimate(h: float) -> FreeEnergyEstimate:
        return free_energy_estimate(model, spec, beta, h, N, samples, master, threads)

    grid = [estimate(h) for h in h_grid]
    thr = threshold if threshold is not None else default_threshold(grid)
    smoothed = np.maximum.accumulate([e.f_raw for e in grid])
    above = np.flatnonzero(smoothed > thr)
    if above.size == 0 or above[0] == 0:
        raise DomainError(
            f"no sign change of f_hat - {thr:.3g} on h_grid [{h_grid[0]}, {h_grid[-1]}]; widen the grid"
        )
    i = int(above[0])
    lo, hi = h_grid[i - 1], h_grid[i]
    for _ in range(levels):
        mid = 0.5 * (lo + hi)
        if estimate(mid).f_raw > thr:
            hi = mid
        else:
            lo = mid
    return CriticalPointEstimate(beta=beta, h_c_hat=0.5 * (lo + hi), h_lo=lo, h_hi=hi, threshold=thr)


def collapse_parameters(law: RenewalLaw, spec: DisorderSpec, beta_hat: float, h_hat: float, delta: float) -> tuple[float, float]:
    """(beta, h) = (b delta^{alpha - 1/2} L(1/delta), h' delta^alpha L(1/delta)) before recentering."""
    n = 1.0 / delta
    beta, h_centered = pinning_weak_scaling(law, beta_hat, h_hat, int(round(n)), spec)
    return beta, h_centered + log_mgf(spec, beta)


def scaling_collapse(
    alpha: float,
    spec: DisorderSpec,
    beta_hat: float,
    h_hat: float,
    delta_grid: list[float],
    N_per_delta: int,
    samples: int,
    master: int,
    threads: int = 1,
    law: RenewalLaw | None = None,
) -> ResultTable:
    """f(beta_delta, h_delta)/delta along the delta grid, with N = N_per_delta/delta."""
    if not 0.5 < alpha < 1.0:
        raise DomainError(f"scaling collapse needs alpha in (1/2, 1), got {alpha}")
    if not delta_grid:
        raise ConfigError("delta_grid must be nonempty")
    horizon = max(int(round(N_per_delta / d)) for d in delta_grid)
    if law is None or law.N_max < horizon:
        law = build_renewal_law(alpha, SlowlyVarying.CONSTANT, max(horizon, 2))
    rows = [
        collapse_row(law, spec, beta_hat, h_hat, d, N_per_delta, samples,
                     task_master(master, f"scaling-collapse|delta={d!r}"), threads)
        for d in delta_grid
    ]
    return ResultTable(experiment="scaling-collapse", columns=COLLAPSE_COLUMNS, rows=rows)


def collapse_row(
    law: RenewalLaw,
    spec: DisorderSpec,
    beta_hat: float,
    h_hat: float,
    delta: float,
    N_per_delta: int,
    samples: int,
    master: int,
    threads: int = 1,
) -> dict:
    beta, h = collapse_parameters(law, spec, beta_hat, h_hat, delta)
    N = int(round(N_per_delta / delta))
    est = free_energy_estimate(law, spec, beta, h, N, samples, master, threads)
    oracle = pure_free_energy(law, h) / delta if beta_hat == 0.0 else None
    return {
        "delta": delta, "N": N, "beta": beta, "h": h,
        "f_hat": est.f_hat, "stderr": est.stderr,
        "collapsed_value": est.f_hat / delta, "collapsed_stderr": est.stderr / delta,
        "pure_oracle": oracle,
    }


# ---------------------------------------------------------------------------
# Runners
# ---------------------------------------------------------------------------

def run_free_energy(cfg: ExperimentConfig, resume: bool = True) -> ResultTable:
    """f_hat over h_grid x N_grid; one environment set per N shared across h."""
    model = build_model(cfg)
    hs = cfg.h_grid or [cfg.h]
    tasks = []
    for N in cfg.grid_N:
        master = task_seed(cfg, f"N={N}")
        for h in hs:
            def fn(threads: int, N=N, h=h, master=master) -> list[dict]:
                est = free_energy_estimate(model, cfg.disorder, cfg.beta, h, N, cfg.samples, master, threads)
                oracle = pure_free_energy(model, h) if cfg.beta == 0.0 and isinstance(model, RenewalLaw) else None
                return [{**est.model_dump(include={"beta", "h", "N", "samples", "f_hat", "f_raw", "stderr"}),
                         "pure_oracle": oracle}]
            tasks.append(Task(f"N={N}|h={h!r}", fn))
    rows = run_grid(cfg, tasks, resume)
    return ResultTable(experiment=cfg.experiment.value, columns=FREE_ENERGY_COLUMNS, rows=rows)


def run_critical_point(cfg: ExperimentConfig, resume: bool = True) -> ResultTable:
    model = build_model(cfg)

    def task(N: int):
        def fn(threads: int) -> list[dict]:
            est = critical_point_scan(
                model, cfg.disorder, cfg.beta, cfg.h_grid, N, cfg.samples,
                task_seed(cfg, f"N={N}"), cfg.threshold, cfg.levels, threads,
            )
            click.echo(f"  N={N}: h_c in [{est.h_lo:.4g}, {est.h_hi:.4g}]")
            return [{**est.model_dump(), "N": N, "samples": cfg.samples}]
        return Task(f"N={N}", fn)

    rows = run_grid(cfg, [task(N) for N in cfg.grid_N], resume)
    return ResultTable(experiment=cfg.experiment.value, columns=CRITICAL_COLUMNS, rows=rows)


def run_scaling_collapse(cfg: ExperimentConfig, resume: bool = True) -> ResultTable:
    if not cfg.delta_grid:
        raise ConfigError("scaling-collapse needs delta_grid")
    horizon = max(int(round(cfg.N_per_delta / d)) for d in cfg.delta_grid)
    law = build_model(cfg, horizon)
    tasks = [
        Task(f"delta={d!r}", lambda threads, d=d: [collapse_row(
            law, cfg.disorder, cfg.beta_hat, cfg.h_hat, d, cfg.N_per_delta, cfg.samples,
            task_seed(cfg, f"delta={d!r}"), threads,
        )])
        for d in cfg.delta_grid
    ]
    rows = run_grid(cfg, tasks, resume)
    values = [r["collapsed_value"] for r in rows]
    if min(values) > 0:
        click.echo(f"  Collapse spread (max/min): {max(values) / min(values):.3f}")
    return ResultTable(experiment=cfg.experiment.value, columns=COLLAPSE_COLUMNS, rows=rows)
