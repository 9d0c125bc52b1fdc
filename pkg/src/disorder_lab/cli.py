"""CLI entry point for disorder-lab."""

from __future__ import annotations

import json
import logging
import sys
from functools import wraps
from pathlib import Path

import click
from dotenv import load_dotenv
from pydantic import ValidationError

from disorder_lab.config import ExperimentConfig, load_config
from disorder_lab.errors import LabError

load_dotenv()


def _field_errors(exc: ValidationError) -> list[str]:
    return [f"{'.'.join(str(p) for p in e['loc']) or '<config>'}: {e['msg']}" for e in exc.errors()]


def _exits(fn):
    """Map validation and lab errors to the documented exit codes."""
    @wraps(fn)
    def wrapper(*args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except ValidationError as e:
            for line in _field_errors(e):
                click.echo(f"Invalid config: {line}", err=True)
            sys.exit(2)
        except LabError as e:
            click.echo(f"Error: {e}", err=True)
            sys.exit(e.exit_code)
    return wrapper


def _build_config(
    config: str | None,
    overrides: tuple[str, ...],
    seed: int | None = None,
    threads: int | None = None,
    out: str | None = None,
    fmt: str | None = None,
) -> ExperimentConfig:
    """Load YAML config and merge CLI args (explicit flags win over --set)."""
    sets = list(overrides)
    for key, value in (("master_seed", seed), ("threads", threads), ("output", out), ("format", fmt)):
        if value is not None:
            sets.append(f"{key}={value}")
    return load_config(config, sets)


@click.group()
@click.version_option(package_name="disorder-lab")
def main():
    """disorder-lab: Monte Carlo and exact computations for disordered pinning and polymer models."""
    pass


@main.command()
@click.option("--config", required=True, type=click.Path(exists=True), help="Experiment YAML or a manifest.json.")
@click.option("--seed", default=None, type=click.IntRange(0, 2 ** 64 - 1), help="Master seed.")
@click.option("--threads", default=None, type=click.IntRange(min=1), help="Worker threads.")
@click.option("--out", default=None, help="Output directory.")
@click.option("--format", "fmt", default=None, type=click.Choice(["csv", "json"]), help="Result table format.")
@click.option("--set", "overrides", multiple=True, help="Override a config field, e.g. --set renewal.alpha=0.6")
@click.option("--resume/--no-resume", default=True, help="Reuse cached grid points.")
@click.option("--verbose", "-v", is_flag=True, help="Debug logging.")
@_exits
def run(config: str, seed: int | None, threads: int | None, out: str | None, fmt: str | None,
        overrides: tuple[str, ...], resume: bool, verbose: bool):
    """Run one experiment and write its table and manifest."""
    if verbose:
        logging.basicConfig(level=logging.DEBUG, format="%(name)s %(levelname)s %(message)s")
    cfg = _build_config(config, overrides, seed, threads, out, fmt)
    cfg.ensure_dirs()

    from disorder_lab.experiments import run_experiment

    click.echo("=" * 60)
    click.echo(f"  disorder-lab: {cfg.experiment.value}")
    click.echo("=" * 60)

    table = run_experiment(cfg, resume=resume)

    click.echo("\n" + "=" * 60)
    click.echo(f"  Done: {len(table.rows)} rows in {cfg.output}")
    click.echo("=" * 60)


@main.command()
@click.argument("name")
@click.option("--seed", default=0, type=click.IntRange(0, 2 ** 64 - 1), help="Master seed.")
@click.option("--threads", default=1, type=click.IntRange(min=1), help="Worker threads.")
@click.option("--out", default="./results", help="Output directory.")
@click.option("--quick", is_flag=True, help="Reduced sizes for a smoke run.")
@_exits
def check(name: str, seed: int, threads: int, out: str, quick: bool):
    """Run a built-in acceptance check (exit 4 on failure)."""
    from disorder_lab.experiments.checks import CHECKS, run_check

    if name not in CHECKS:
        raise click.BadParameter(f"choose from {', '.join(CHECKS)}", param_hint="NAME")
    click.echo("=" * 60)
    click.echo(f"  disorder-lab check: {name}")
    click.echo("=" * 60)
    report = run_check(name, master=seed, quick=quick, threads=threads, out=Path(out).resolve())
    click.echo(f"\n  All {len(report.rows)} bounds hold.")


@main.command("show-config")
@click.option("--config", required=True, type=click.Path(exists=True), help="Experiment YAML or a manifest.json.")
@click.option("--set", "overrides", multiple=True, help="Override a config field.")
@_exits
def show_config(config: str, overrides: tuple[str, ...]):
    """Print the validated config with defaults filled in."""
    cfg = _build_config(config, overrides)
    click.echo(json.dumps(cfg.model_dump(mode="json"), indent=2))
    click.echo(f"# signature {cfg.signature()}")


if __name__ == "__main__":
    main()
