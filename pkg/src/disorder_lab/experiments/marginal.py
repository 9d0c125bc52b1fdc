"""Marginal relevance: the beta_hat / sqrt(R_N) scaling, its log-normal limit
and the coarse-grained Theta blocks.

At the marginal point (pinning with alpha = 1/2, the 2d simple walk, the 1d
Cauchy-type walk) disorder of strength beta_N = beta_hat / sqrt(R_N) keeps Z
random in the limit: for beta_hat < 1, log Z tends to Normal(-s^2/2, s^2)
with s^2 = log 1/(1 - beta_hat^2); for beta_hat >= 1, Z tends to 0.
"""

from __future__ import annotations

import math

import numpy as np

from disorder_lab.config import ExperimentConfig, ThetaNormalization
from disorder_lab.core.disorder import draw, log_mgf, replica_coupling, sample_lines
from disorder_lab.core.renewal import RenewalLaw, overlap_masses, renewal_mass
from disorder_lab.core.stats import MomentAccumulator, ks_critical, ks_statistic, moment_summary, normal_cdf
from disorder_lab.core.walk import collision_masses, kernel_columns
from disorder_lab.errors import ConfigError, DomainError
from disorder_lab.experiments.common import (
    ModelLaw,
    Task,
    build_model,
    model_label,
    model_overlap,
    run_grid,
    sample_log_Z,
    task_seed,
)
from disorder_lab.models import DisorderFamily, DisorderSpec, LognormalLimit, ResultTable, ThetaBlock, ThetaBlockStats
from disorder_lab.utils.parallel import map_streams
from disorder_lab.utils.seeding import Seed, generator, task_master

SCAN_COLUMNS = [
    "model", "beta_hat", "N", "R_N", "beta_N", "sigma_sq",
    "mean_Z", "mean_Z_stderr", "var_Z", "E_Z2", "E_Z2_stderr", "median_Z",
    "ks_lognormal", "ks_critical", "p_small", "mean_log_Z",
]
THETA_COLUMNS = ["block", "lower", "upper", "exact_variance", "mean", "var", "skew", "kurt", "max_abs_corr"]

SMALL_Z = 0.01
THETA_CHUNK = 64


def limit_lognormal_params(beta_hat: float) -> LognormalLimit:
    """Law of the limit of Z at the marginal scaling."""
    if beta_hat < 0:
        raise DomainError(f"beta_hat must be >= 0, got {beta_hat}")
    if beta_hat >= 1.0:
        return LognormalLimit(beta_hat=beta_hat, degenerate=True)
    return LognormalLimit(beta_hat=beta_hat, sigma_sq=-math.log1p(-beta_hat * beta_hat))


def marginal_beta(beta_hat: float, overlap: float) -> float:
    if overlap <= 0.0:
        raise DomainError(f"overlap R_N must be > 0, got {overlap}")
    return beta_hat / math.sqrt(overlap)


def _ks_to_limit(log_z: np.ndarray, limit: LognormalLimit) -> float | None:
    if limit.degenerate:
        return None
    if limit.sigma_sq == 0.0:
        # sup |F_n - 1{t >= 0}|
        return float(max(np.mean(log_z < 0.0), np.mean(log_z > 0.0)))
    return ks_statistic(log_z, normal_cdf(limit.log_mean, limit.sigma_sq))


# ---------------------------------------------------------------------------
# Scan
# ---------------------------------------------------------------------------

def marginal_point(
    model: ModelLaw,
    spec: DisorderSpec,
    beta_hat: float,
    N: int,
    samples: int,
    master: int,
    threads: int = 1,
    tol: float = 1e-6,
) -> dict:
    """Statistics of Z_{N, beta_N} with beta_N = beta_hat / sqrt(R_N) and h = -M(beta_N)."""
    R = model_overlap(model, N)
    beta = marginal_beta(beta_hat, R)
    h = -log_mgf(spec, beta)
    log_z = sample_log_Z(model, spec, N, beta, h, master, samples, threads, tol=tol)
    Z = np.exp(np.minimum(log_z, 709.0))
    first = moment_summary(MomentAccumulator.from_values(Z))
    second = moment_summary(MomentAccumulator.from_values(Z * Z))
    limit = limit_lognormal_params(beta_hat)
    return {
        "model": model_label(model),
        "beta_hat": beta_hat,
        "N": N,
        "R_N": R,
        "beta_N": beta,
        "sigma_sq": limit.sigma_sq,
        "mean_Z": first.mean,
        "mean_Z_stderr": first.mean_stderr,
        "var_Z": first.variance,
        "E_Z2": second.mean,
        "E_Z2_stderr": second.mean_stderr,
        "median_Z": float(np.median(Z)),
        "ks_lognormal": _ks_to_limit(log_z, limit),
        "ks_critical": ks_critical(samples),
        "p_small": float(np.mean(Z < SMALL_Z)),
        "mean_log_Z": float(np.mean(log_z)),
    }


def _scan_label(beta_hat: float, N: int) -> str:
    return f"beta_hat={beta_hat!r}|N={N}"


def marginal_scan(
    model: ModelLaw,
    spec: DisorderSpec,
    beta_hat_grid: list[float],
    N_grid: list[int],
    samples: int,
    master: int,
    threads: int = 1,
    tol: float = 1e-6,
) -> ResultTable:
    """One row per (beta_hat, N); each grid point has its own stream family."""
    if not beta_hat_grid or not N_grid:
        raise ConfigError("marginal scan needs nonempty beta_hat and N grids")
    rows = [
        marginal_point(
            model, spec, b, N, samples,
            task_master(master, f"marginal-scan|{_scan_label(b, N)}"), threads, tol,
        )
        for b in beta_hat_grid
        for N in N_grid
    ]
    return ResultTable(experiment="marginal-scan", columns=SCAN_COLUMNS, rows=rows)


def run_marginal_scan(cfg: ExperimentConfig, resume: bool = True) -> ResultTable:
    model = build_model(cfg)
    grid = cfg.beta_hat_grid or [cfg.beta_hat]
    tasks = []
    for b in grid:
        for N in cfg.grid_N:
            label = _scan_label(b, N)
            master = task_seed(cfg, label)
            tasks.append(Task(label, lambda threads, b=b, N=N, master=master: [
                marginal_point(model, cfg.disorder, b, N, cfg.samples, master, threads, cfg.tol)
            ]))
    rows = run_grid(cfg, tasks, resume)
    return ResultTable(experiment=cfg.experiment.value, columns=SCAN_COLUMNS, rows=rows)


# ---------------------------------------------------------------------------
# Theta blocks
# ---------------------------------------------------------------------------

def theta_intervals(N: int, M: int) -> list[tuple[int, int]]:
    """Integer time blocks I_i = (N^{(i-1)/M}, N^{i/M}], i = 1..M, as (lower, upper)."""
    if M < 1:
        raise ConfigError(f"M must be >= 1, got {M}")
    edges = [math.floor(N ** (i / M) + 1e-9) for i in range(M + 1)]
    blocks = [(edges[i - 1] + 1, edges[i]) for i in range(1, M + 1)]
    for i, (lo, hi) in enumerate(blocks, start=1):
        if hi < lo:
            raise ConfigError(f"Theta block {i} is empty at N={N}, M={M}; increase N or decrease M")
    return blocks


def _masses(model: ModelLaw, N: int) -> np.ndarray:
    if isinstance(model, RenewalLaw):
        return overlap_masses(model, N)
    return collision_masses(model, N)


def theta_blocks(
    model: ModelLaw,
    spec: DisorderSpec,
    N: int,
    M: int,
    replicas: int,
    master: int,
    beta: float = 0.0,
    normalization: ThetaNormalization | str = ThetaNormalization.OVERLAP,
    threads: int = 1,
    tol: float = 1e-6,
) -> ThetaBlockStats:
    """First-order chaos sums over the blocks I_i, normalized to unit variance.

    Theta_i = norm * sum_{n in I_i} sum_x q_n(x) eta_{(n,x)} (u(n) eta_n for
    pinning) with eta standardized. beta = 0 means the linearized eta = omega;
    Gaussian disorder at beta = 0 draws each layer sum directly as
    Normal(0, c(n)).
    """
    normalization = ThetaNormalization(normalization)
    if N < 2:
        raise ConfigError(f"Theta blocks need N >= 2, got {N}")
    blocks = theta_intervals(N, M)
    c = _masses(model, N)
    if normalization is ThetaNormalization.OVERLAP:
        norm = math.sqrt(M / math.fsum(c[1:]))
    else:
        norm = math.sqrt(M / math.log(N))
    exact = [norm * norm * math.fsum(c[lo:hi + 1]) for lo, hi in blocks]

    direct = spec.family is DisorderFamily.GAUSSIAN and beta == 0.0
    if beta != 0.0:
        shift = log_mgf(spec, beta)
        scale = math.sqrt(math.expm1(replica_coupling(spec, beta)))
    columns = None if direct or isinstance(model, RenewalLaw) else list(kernel_columns(model, N, tol))

    def standardized(omega: np.ndarray) -> np.ndarray:
        if beta == 0.0:
            return omega
        return np.expm1(beta * omega - shift) / scale

    def batch(streams: range) -> np.ndarray:
        S = len(streams)
        if direct:
            layers = np.stack([generator(Seed(master, s)).standard_normal(N) for s in streams]) * np.sqrt(c[1:])
        elif isinstance(model, RenewalLaw):
            layers = standardized(sample_lines(spec, N, master, streams)) * renewal_mass(model, N)[1:]
        else:
            layers = np.empty((S, N))
            for col in columns:
                shape = col.values.shape
                for j, s in enumerate(streams):
                    omega = _draw_layer(spec, Seed(master, s), col.n, shape)
                    layers[j, col.n - 1] = float(np.sum(col.values * standardized(omega)))
        out = np.empty((S, len(blocks)))
        for i, (lo, hi) in enumerate(blocks):
            out[:, i] = layers[:, lo - 1:hi].sum(axis=1)
        return norm * out

    values = map_streams(batch, range(replicas), threads, chunk=THETA_CHUNK).reshape(replicas, len(blocks))
    corr = np.corrcoef(values, rowvar=False) if replicas > 1 else np.eye(len(blocks))
    stats = []
    for i, ((lo, hi), var) in enumerate(zip(blocks, exact)):
        summary = moment_summary(MomentAccumulator.from_values(values[:, i]))
        stats.append(ThetaBlock(
            block=i + 1, lower=lo, upper=hi, exact_variance=var,
            mean=summary.mean, variance=summary.variance,
            skewness=summary.skewness, kurtosis=summary.kurtosis,
        ))
    return ThetaBlockStats(
        N=N, M=M, replicas=replicas, normalization=normalization.value,
        blocks=stats, correlations=np.atleast_2d(corr).tolist(),
    )


def _draw_layer(spec: DisorderSpec, seed: Seed, n: int, shape: tuple[int, ...]) -> np.ndarray:
    # same block layout as a space-time field
    return draw(spec, generator(seed, block=n), shape)


def theta_rows(stats: ThetaBlockStats) -> list[dict]:
    corr = np.asarray(stats.correlations)
    rows = []
    for i, block in enumerate(stats.blocks):
        others = np.delete(corr[i], i) if corr.shape[0] > 1 else np.zeros(0)
        rows.append({
            "block": block.block, "lower": block.lower, "upper": block.upper,
            "exact_variance": block.exact_variance, "mean": block.mean, "var": block.variance,
            "skew": block.skewness, "kurt": block.kurtosis,
            "max_abs_corr": float(np.max(np.abs(others))) if others.size else None,
        })
    return rows


def run_theta_blocks(cfg: ExperimentConfig, resume: bool = True) -> ResultTable:
    model = build_model(cfg)
    label = f"N={cfg.N}|M={cfg.M}"
    master = task_seed(cfg, label)

    def task(threads: int) -> list[dict]:
        stats = theta_blocks(
            model, cfg.disorder, cfg.N, cfg.M, cfg.samples, master,
            cfg.beta, cfg.normalization, threads, cfg.tol,
        )
        return theta_rows(stats)

    rows = run_grid(cfg, [Task(label, task)], resume)
    return ResultTable(experiment=cfg.experiment.value, columns=THETA_COLUMNS, rows=rows)
