"""Built-in acceptance checks.

Each check runs a fixed experiment protocol, records every measured quantity
against its bound and raises AcceptanceError if any bound fails. ``quick``
shrinks sample sizes and grids for smoke runs; the bounds stay the same
except where a smaller sample widens the noise they are built from.
"""

from __future__ import annotations

import math
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import click
import numpy as np

from disorder_lab.config import ExperimentConfig, ExperimentKind
from disorder_lab.core.chaos import (
    chaos_second_moment,
    exact_second_moment,
    lindeberg_distance,
    rescaled_correlation_error,
    simulate_continuum_chaos_batch,
)
from disorder_lab.core.partition import continuum_pinning_samples, pinning_weak_scaling
from disorder_lab.core.renewal import build_renewal_law
from disorder_lab.core.stats import MomentAccumulator, ks_critical, ks_statistic, moment_summary, normal_cdf
from disorder_lab.core.walk import build_walk
from disorder_lab.errors import AcceptanceError
from disorder_lab.experiments.chaos_runs import oracle_pair
from disorder_lab.experiments.common import ModelLaw, sample_log_Z, write_rows
from disorder_lab.experiments.marginal import marginal_point, theta_blocks
from disorder_lab.experiments.scaling import (
    collapse_row,
    critical_point_scan,
    free_energy_estimate,
    pure_free_energy,
)
from disorder_lab.models import (
    ContinuumPinningParams,
    DisorderFamily,
    DisorderSpec,
    ResultTable,
    WalkFamily,
)
from disorder_lab.references.pinning import AlphaContinuum, FiniteMeanContinuum, RenewalCoefficients
from disorder_lab.references.polymer import WalkCoefficients
from disorder_lab.utils.seeding import Seed, task_master

CHECK_COLUMNS = ["check", "quantity", "value", "bound", "passed"]

GAUSSIAN = DisorderSpec(family=DisorderFamily.GAUSSIAN)
RADEMACHER = DisorderSpec(family=DisorderFamily.RADEMACHER)


@dataclass
class CheckReport:
    name: str
    rows: list[dict] = field(default_factory=list)

    def expect(self, quantity: str, value: float | None, bound: str, passed: bool) -> None:
        self.rows.append({
            "check": self.name, "quantity": quantity, "value": value, "bound": bound, "passed": bool(passed),
        })
        mark = "PASS" if passed else "FAIL"
        shown = "-" if value is None else f"{value:.6g}"
        click.echo(f"  [{mark}] {quantity}: {shown} ({bound})")

    @property
    def failures(self) -> list[dict]:
        return [r for r in self.rows if not r["passed"]]

    def table(self) -> ResultTable:
        return ResultTable(experiment=f"check-{self.name}", columns=CHECK_COLUMNS, rows=self.rows)


def violations(values: list[float], slack: float = 0.0) -> int:
    """Number of steps where the sequence rises by more than ``slack``."""
    return sum(1 for a, b in zip(values, values[1:]) if b > a + slack)


def _seed(master: int, check: str, label: str) -> int:
    return task_master(master, f"check-{check}|{label}")


# ---------------------------------------------------------------------------
# Checks
# ---------------------------------------------------------------------------

def check_oracle(report: CheckReport, master: int, quick: bool, threads: int, out: Path) -> None:
    envs = 20 if quick else 100
    cases: list[tuple[str, ModelLaw, object]] = [
        ("pinning alpha=0.75", build_renewal_law(0.75, N_max=64), lambda m: RenewalCoefficients(m, 8 if quick else 12)),
        ("pinning alpha=1.5", build_renewal_law(1.5, N_max=64), lambda m: RenewalCoefficients(m, 8 if quick else 12)),
        ("polymer ssrw-1d", build_walk(WalkFamily.SSRW_1D), lambda m: WalkCoefficients(m, 6 if quick else 10)),
        ("polymer ssrw-2d", build_walk(WalkFamily.SSRW_2D), lambda m: WalkCoefficients(m, 4 if quick else 6)),
    ]
    for name, model, make_psi in cases:
        psi = make_psi(model)
        seed = _seed(master, "oracle", name)
        worst = 0.0
        for i in range(envs):
            z, z_chaos = oracle_pair(model, psi, GAUSSIAN, 0.6, -0.1, Seed(seed, i))
            worst = max(worst, abs(z_chaos - z) / abs(z))
        report.expect(f"{name} N={psi.N} max relative error", worst, "<= 1e-10", worst <= 1e-10)


def check_continuum(report: CheckReport, master: int, quick: bool, threads: int, out: Path) -> None:
    m, beta_hat, h_hat, t = 2.0, 1.0, 0.5, 1.0
    mesh = 2.0 ** (-10 if quick else -12)
    samples = 2000 if quick else 10_000
    psi = FiniteMeanContinuum(m)
    seed = _seed(master, "continuum", "finite-mean")
    Z = simulate_continuum_chaos_batch(psi, beta_hat, h_hat, t, mesh, 12, seed, range(samples))
    exact = continuum_pinning_samples(
        ContinuumPinningParams(beta_hat=beta_hat, h_hat=h_hat, t=t, mean_interarrival=m), Seed(seed, samples), samples
    )
    # exact law of the sampler: log Z ~ Normal((h/m - b^2/(2m^2)) t, b^2 t / m^2)
    limit = normal_cdf((h_hat / m - beta_hat ** 2 / (2 * m * m)) * t, beta_hat ** 2 * t / (m * m))
    D_pair = ks_statistic(Z, exact)
    bound = 0.02 if not quick else ks_critical(samples, samples)
    report.expect("KS(series, closed-form sampler)", D_pair, f"<= {bound:.3g}", D_pair <= bound)
    D_law = ks_statistic(np.log(Z), limit)
    bound = 0.02 if not quick else ks_critical(samples)
    report.expect("KS(log series, exact normal law)", D_law, f"<= {bound:.3g}", D_law <= bound)
    second = moment_summary(MomentAccumulator.from_values(Z * Z))
    closed = math.exp(2 * h_hat * t / m + beta_hat ** 2 * t / m ** 2)
    report.expect(
        "E[Z^2] - closed form", abs(second.mean - closed), f"<= 3 stderr = {3 * second.mean_stderr:.3g}",
        abs(second.mean - closed) <= 3 * second.mean_stderr,
    )
    alpha_psi = AlphaContinuum(0.75)
    quad, _ = chaos_second_moment(alpha_psi, 1.0, 0.0, 1.0, 3, method="quadrature")
    closed_sum, _ = chaos_second_moment(alpha_psi, 1.0, 0.0, 1.0, 3, method="closed")
    rel = abs(quad - closed_sum) / closed_sum
    report.expect("alpha=0.75 quadrature vs closed form, k<=3", rel, "<= 1e-6", rel <= 1e-6)


def check_weak_second_moment(report: CheckReport, master: int, quick: bool, threads: int, out: Path) -> None:
    beta_hat = 2.0
    Ns = [2 ** 6, 2 ** 8, 2 ** 10] if quick else [2 ** 8, 2 ** 10, 2 ** 12]
    samples = 2000 if quick else 10_000
    law = build_renewal_law(0.75, N_max=Ns[-1])
    limit, trunc = chaos_second_moment(AlphaContinuum(0.75), beta_hat, 0.0, 1.0, 3)
    limit += trunc.tail_bound
    gaps, exact_gaps, final = [], [], None
    for N in Ns:
        beta, h = pinning_weak_scaling(law, beta_hat, 0.0, N, GAUSSIAN)
        log_z = sample_log_Z(law, GAUSSIAN, N, beta, h, _seed(master, "weak", f"N={N}"), samples, threads)
        final = moment_summary(MomentAccumulator.from_values(np.exp(2.0 * log_z)))
        gaps.append(abs(final.mean - limit))
        exact_gaps.append(abs(exact_second_moment(law, GAUSSIAN, beta, N) - limit))
        report.expect(f"N={N} empirical E[Z^2]", final.mean, f"limit {limit:.5g}", True)
    report.expect("exact E[Z_N^2] gap violations", violations(exact_gaps), "<= 1", violations(exact_gaps) <= 1)
    report.expect("empirical gap violations", violations(gaps), "<= 1", violations(gaps) <= 1)
    bound = 0.1 * limit + 3.0 * final.mean_stderr
    report.expect("final gap", gaps[-1], f"<= {bound:.4g}", gaps[-1] <= bound)


def check_lindeberg(report: CheckReport, master: int, quick: bool, threads: int, out: Path) -> None:
    Ns = [2 ** k for k in (range(6, 10) if quick else range(6, 13))]
    samples = 2000 if quick else 10_000
    law = build_renewal_law(0.75, N_max=Ns[-1])
    seed = Seed(_seed(master, "lindeberg", "pinning"))
    D = [lindeberg_distance(law, GAUSSIAN, RADEMACHER, N, samples, seed, beta_hat=2.0) for N in Ns]
    for N, d in zip(Ns, D):
        report.expect(f"N={N} KS(gaussian, rademacher)", d, "informational", True)
    # rises within half the two-sample critical value are sampling noise
    slack = 0.5 * ks_critical(samples, samples)
    report.expect("KS trend violations", violations(D, slack), "<= 1", violations(D, slack) <= 1)
    bound = 0.05 if not quick else max(0.05, ks_critical(samples, samples))
    report.expect("final KS", D[-1], f"<= {bound:.3g}", D[-1] <= bound)


def _marginal_models(quick: bool, polymer_Ns: list[int], polymer_samples: int):
    pin_Ns = [2 ** k for k in (range(8, 11) if quick else range(8, 15))]
    return [
        ("pinning alpha=1/2", build_renewal_law(0.5, N_max=pin_Ns[-1]), pin_Ns, 2000 if quick else 10_000),
        ("polymer ssrw-2d", build_walk(WalkFamily.SSRW_2D), polymer_Ns, polymer_samples),
    ]


def check_marginal(report: CheckReport, master: int, quick: bool, threads: int, out: Path) -> None:
    target = 4.0 / 3.0
    polymer_Ns = [2 ** 4, 2 ** 6] if quick else [2 ** 6, 2 ** 8, 2 ** 10]
    for name, model, Ns, samples in _marginal_models(quick, polymer_Ns, 200 if quick else 1000):
        rows = [
            marginal_point(model, GAUSSIAN, 0.5, N, samples, _seed(master, "marginal", f"{name}|N={N}"), threads, 1e-4)
            for N in Ns
        ]
        gaps = [abs(r["E_Z2"] - target) for r in rows]
        report.expect(f"{name} E[Z^2] gap violations", violations(gaps), "<= 1", violations(gaps) <= 1)
        ks = [r["ks_lognormal"] for r in rows]
        slack = 0.5 * ks_critical(samples)
        report.expect(f"{name} KS trend violations", violations(ks, slack), "<= 1", violations(ks, slack) <= 1)
        if name.startswith("polymer"):
            continue
        rel = gaps[-1] / target
        report.expect(f"{name} final E[Z^2] relative gap", rel, "<= 0.15", rel <= 0.15)
        bound = 0.08 if not quick else max(0.08, ks_critical(samples))
        report.expect(f"{name} final KS to log-normal", ks[-1], f"<= {bound:.3g}", ks[-1] <= bound)


def check_transition(report: CheckReport, master: int, quick: bool, threads: int, out: Path) -> None:
    # the 2d polymer costs (2R + 1)^2 N per environment with R ~ 4 sqrt(N), hence fewer samples
    polymer_Ns = [2 ** 4, 2 ** 6] if quick else [2 ** k for k in range(8, 15)]
    for name, model, Ns, samples in _marginal_models(quick, polymer_Ns, 200):
        rows = [
            marginal_point(model, GAUSSIAN, 1.5, N, samples, _seed(master, "transition", f"{name}|N={N}"), threads, 1e-4)
            for N in Ns
        ]
        medians = [r["median_Z"] for r in rows]
        report.expect(f"{name} median rises", violations(medians), "== 0", violations(medians) == 0)
        worst = max(abs(r["mean_Z"] - 1.0) / max(r["mean_Z_stderr"], 1e-300) for r in rows)
        report.expect(f"{name} max |E[Z] - 1| in stderr", worst, "<= 5", worst <= 5.0)
        if not quick:
            p = rows[-1]["p_small"]
            report.expect(f"{name} P(Z < 0.01) at N={Ns[-1]}", p, "> 0.5", p > 0.5)


def check_theta(report: CheckReport, master: int, quick: bool, threads: int, out: Path) -> None:
    N, M, replicas = (2 ** 12, 4, 2000) if quick else (2 ** 16, 8, 10_000)
    stats = theta_blocks(build_walk(WalkFamily.SSRW_2D), GAUSSIAN, N, M, replicas, _seed(master, "theta", "ssrw-2d"),
                         threads=threads)
    for block in stats.blocks:
        rel = abs(block.variance - block.exact_variance) / block.exact_variance
        report.expect(f"block {block.block} variance relative error", rel, "<= 0.10", rel <= 0.10)
        dev = abs(block.kurtosis - 3.0)
        report.expect(f"block {block.block} |kurtosis - 3|", dev, "<= 0.3", dev <= 0.3)
    corr = np.asarray(stats.correlations)
    off = np.abs(corr[~np.eye(M, dtype=bool)])
    bound = 5.0 / math.sqrt(replicas)
    report.expect("max |pairwise correlation|", float(off.max()), f"<= {bound:.3g}", off.max() <= bound)


def check_rescaling(report: CheckReport, master: int, quick: bool, threads: int, out: Path) -> None:
    Ns = [2 ** k for k in (range(8, 12) if quick else range(8, 15))]
    errors = [rescaled_correlation_error(0.75, 1, 1.0 / N) for N in Ns]
    for N, e in zip(Ns, errors):
        report.expect(f"N={N} k=1 L2 error", e, "informational", True)
    report.expect("k=1 error violations", violations(errors), "<= 1", violations(errors) <= 1)


def check_free_energy(report: CheckReport, master: int, quick: bool, threads: int, out: Path) -> None:
    N = 2 ** 10 if quick else 2 ** 12
    law = build_renewal_law(0.75, N_max=N)
    seed = _seed(master, "free-energy", "pure")
    # stderr vanishes at beta = 0; log(N)/N covers the finite-N offset from the limit F
    floor = math.log(N) / N
    for h in (0.1, 0.3, 1.0):
        est = free_energy_estimate(law, GAUSSIAN, 0.0, h, N, 4, seed, threads)
        F = pure_free_energy(law, h)
        tol = 3.0 * est.stderr + floor
        report.expect(f"h={h} |f_hat - F|", abs(est.f_hat - F), f"<= {tol:.3g}", abs(est.f_hat - F) <= tol)
    cp = critical_point_scan(law, GAUSSIAN, 0.0, [-0.5, -0.25, 0.0, 0.25, 0.5], N, 4, seed, threads=threads)
    report.expect("beta=0 critical bracket contains 0", cp.h_hi - cp.h_lo,
                  f"[{cp.h_lo:.3g}, {cp.h_hi:.3g}]", cp.h_lo <= 0.0 <= cp.h_hi)


def check_collapse(report: CheckReport, master: int, quick: bool, threads: int, out: Path) -> None:
    deltas = [2.0 ** -k for k in (range(4, 7) if quick else range(4, 9))]
    samples = 1000 if quick else 10_000
    law = build_renewal_law(0.75, N_max=int(16 / deltas[-1]))
    values = []
    for d in deltas:
        row = collapse_row(law, GAUSSIAN, 1.0, 1.0, d, 16, samples, _seed(master, "collapse", f"delta={d!r}"), threads)
        values.append(row["collapsed_value"])
        report.expect(f"delta={d:g} f/delta", row["collapsed_value"], "> 0", row["collapsed_value"] > 0)
    ratio = max(values) / min(values) if min(values) > 0 else math.inf
    report.expect("collapse max/min", ratio, "<= 2", ratio <= 2.0)


def check_determinism(report: CheckReport, master: int, quick: bool, threads: int, out: Path) -> None:
    from disorder_lab.config import load_config
    from disorder_lab.experiments import run_experiment

    base = {
        "experiment": ExperimentKind.MARGINAL_SCAN.value,
        "renewal": {"alpha": 0.5, "N_max": 512},
        "N_grid": [64, 256],
        "beta_hat_grid": [0.5, 1.5],
        "samples": 300 if quick else 1200,
        "master_seed": master,
    }
    with tempfile.TemporaryDirectory(dir=out) as tmp:
        tables = []
        for t in (1, max(threads, 3)):
            cfg = ExperimentConfig.model_validate({**base, "threads": t, "output": str(Path(tmp) / f"t{t}")})
            tables.append(run_experiment(cfg, resume=False))
        manifest = Path(tmp) / "t1" / "manifest.json"
        replay = load_config(manifest, [f"output={Path(tmp) / 'replay'}", "threads=2"])
        tables.append(run_experiment(replay, resume=False))
    same = tables[0].sorted_rows() == tables[1].sorted_rows()
    report.expect("threads=1 vs threads>1 rows identical", None, "sorted rows equal", same)
    replayed = tables[0].sorted_rows() == tables[2].sorted_rows()
    report.expect("manifest replay rows identical", None, "sorted rows equal", replayed)


CHECKS: dict[str, Callable[[CheckReport, int, bool, int, Path], None]] = {
    "oracle": check_oracle,
    "continuum": check_continuum,
    "weak-second-moment": check_weak_second_moment,
    "lindeberg": check_lindeberg,
    "marginal": check_marginal,
    "transition": check_transition,
    "theta": check_theta,
    "rescaling": check_rescaling,
    "free-energy": check_free_energy,
    "collapse": check_collapse,
    "determinism": check_determinism,
}


def run_check(name: str, master: int = 0, quick: bool = False, threads: int = 1, out: Path = Path("./results")) -> CheckReport:
    """Run one named check and write ``<out>/check-<name>.csv``; raise AcceptanceError on any failed bound."""
    if name not in CHECKS:
        raise AcceptanceError(f"unknown check {name!r}; choose from {', '.join(CHECKS)}")
    out.mkdir(parents=True, exist_ok=True)
    click.echo(f"\n--- Check: {name}{' (quick)' if quick else ''} ---")
    report = CheckReport(name)
    CHECKS[name](report, master, quick, threads, out)
    path = write_rows(out / f"check-{name}.csv", report.table())
    click.echo(f"  Saved to {path}")
    if report.failures:
        failed = "; ".join(r["quantity"] for r in report.failures)
        raise AcceptanceError(f"check {name} failed: {failed}")
    return report
