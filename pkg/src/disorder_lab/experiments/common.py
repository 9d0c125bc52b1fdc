"""Shared plumbing of the experiment suites: models, seeds, task grids, artifacts."""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable

import click
import numpy as np

from disorder_lab import __version__
from disorder_lab.config import ExperimentConfig, OutputFormat
from disorder_lab.core.partition import polymer_radii, sample_log_partitions
from disorder_lab.core.renewal import RenewalLaw, build_renewal_law, pinning_overlap
from disorder_lab.core.walk import WalkLaw, polymer_overlap, walk_from_spec
from disorder_lab.models import DisorderSpec, Endpoint, Manifest, ModelKind, ResultTable
from disorder_lab.utils.parallel import map_streams, run_tasks
from disorder_lab.utils.seeding import task_master
from disorder_lab.utils.task_cache import TaskCache

ModelLaw = RenewalLaw | WalkLaw

PINNING_CHUNK = 256
POLYMER_CHUNK = 64


# ---------------------------------------------------------------------------
# Models
# ---------------------------------------------------------------------------

def build_model(cfg: ExperimentConfig, horizon: int | None = None) -> ModelLaw:
    """The renewal law or walk named by the config, tabulated far enough for ``horizon``."""
    if cfg.model is ModelKind.POLYMER:
        return walk_from_spec(cfg.walk)
    spec = cfg.renewal
    N_max = max(spec.N_max, horizon or 0, max(cfg.grid_N))
    return build_renewal_law(spec.alpha, spec.L, N_max, spec.kappa)


def model_overlap(model: ModelLaw, N: int, tol: float = 1e-8) -> float:
    """Replica overlap R_N of either model."""
    if isinstance(model, RenewalLaw):
        return pinning_overlap(model, N)
    return polymer_overlap(model, N, tol)


def model_label(model: ModelLaw) -> str:
    if isinstance(model, RenewalLaw):
        return f"pinning(alpha={model.alpha:g})"
    if model.alpha != 2.0:
        return f"polymer({model.family.value}, alpha={model.alpha:g})"
    return f"polymer({model.family.value})"


# ---------------------------------------------------------------------------
# Sampling
# ---------------------------------------------------------------------------

def task_seed(cfg: ExperimentConfig, label: str) -> int:
    """Master key of one grid point: a pure function of the run seed and the label."""
    return task_master(cfg.master_seed, f"{cfg.experiment.value}|{label}")


def sample_log_Z(
    model: ModelLaw,
    spec: DisorderSpec,
    N: int,
    beta: float,
    h: float | None,
    master: int,
    samples: int,
    threads: int = 1,
    endpoint: Endpoint | str = Endpoint.FREE,
    offset: int = 0,
    tol: float = 1e-6,
) -> np.ndarray:
    """log Z of environments ``Seed(master, offset + i)``, i < samples, in replica order."""
    radii = None if isinstance(model, RenewalLaw) else polymer_radii(model, N, tol)
    chunk = PINNING_CHUNK if isinstance(model, RenewalLaw) else POLYMER_CHUNK

    def batch(streams: range) -> np.ndarray:
        return sample_log_partitions(model, spec, N, beta, h, master, streams, endpoint, radii, chunk)

    return map_streams(batch, range(offset, offset + samples), threads, chunk=chunk)


# ---------------------------------------------------------------------------
# Task grids
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Task:
    """One grid point; ``fn(threads)`` returns its result rows."""
    label: str
    fn: Callable[[int], list[dict[str, Any]]]


def run_grid(cfg: ExperimentConfig, tasks: list[Task], resume: bool = True) -> list[dict[str, Any]]:
    """Run every task (reusing cached rows when resuming) and return rows in task order.

    With at least as many pending tasks as threads the tasks themselves run
    in parallel; otherwise they run one by one and each gets all threads
    for its replicas.
    """
    threads = cfg.worker_threads
    click.echo(f"\n--- Experiment: {cfg.experiment.value} ---")
    click.echo(f"  Tasks: {len(tasks)}  Samples: {cfg.samples}  Threads: {threads}")

    cache = TaskCache(cfg.cache_dir if resume else None, cfg.experiment.value)
    config_sig = cfg.signature()
    results: list[list[dict] | None] = [None] * len(tasks)
    pending: list[int] = []
    for i, task in enumerate(tasks):
        cached = cache.load(task.label, config_sig) if cache.enabled else None
        if cached is not None:
            results[i] = cached
        else:
            pending.append(i)
    if len(pending) < len(tasks):
        click.echo(f"  Cache hits: {len(tasks) - len(pending)} (skipping)")

    start = time.time()
    outer = threads if len(pending) >= threads else 1
    inner = 1 if outer > 1 else threads

    def work(i: int) -> list[dict]:
        rows = tasks[i].fn(inner)
        cache.save(tasks[i].label, config_sig, rows)
        return rows

    for i, rows in zip(pending, run_tasks(work, pending, outer, desc=cfg.experiment.value)):
        results[i] = rows
    click.echo(f"  Time: {time.time() - start:.0f}s")
    return [row for rows in results for row in rows or []]


# ---------------------------------------------------------------------------
# Artifacts
# ---------------------------------------------------------------------------

def _cell(value: Any) -> Any:
    if isinstance(value, float):
        return repr(value)
    return "" if value is None else value


def write_rows(path: Path, table: ResultTable, fmt: OutputFormat = OutputFormat.CSV) -> Path:
    """Write a table as CSV or JSON records; floats keep full precision."""
    path.parent.mkdir(parents=True, exist_ok=True)
    if fmt is OutputFormat.JSON:
        with open(path, "w", encoding="utf-8") as f:
            json.dump([{c: row.get(c) for c in table.columns} for row in table.rows], f, indent=2)
    else:
        with open(path, "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(table.columns)
            for row in table.rows:
                writer.writerow([_cell(row.get(c)) for c in table.columns])
    return path


def write_table(cfg: ExperimentConfig, table: ResultTable) -> Path:
    """Write ``<out>/<experiment>.csv`` or ``.json``."""
    cfg.ensure_dirs()
    path = write_rows(cfg.output / f"{table.experiment}.{cfg.format.value}", table, cfg.format)
    click.echo(f"  Saved to {path}")
    return path


def write_manifest(cfg: ExperimentConfig, started: datetime, elapsed: float) -> Path:
    manifest = Manifest(
        config=cfg.model_dump(mode="json"),
        config_hash=cfg.signature(),
        seed=cfg.master_seed,
        version=__version__,
        threads=cfg.worker_threads,
        started=started.astimezone(timezone.utc).isoformat(timespec="seconds"),
        elapsed=elapsed,
    )
    cfg.ensure_dirs()
    path = cfg.output / "manifest.json"
    with open(path, "w", encoding="utf-8") as f:
        json.dump(manifest.model_dump(mode="json"), f, indent=2)
    return path
