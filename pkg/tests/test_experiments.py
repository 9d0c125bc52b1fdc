import csv
import json
import math

import numpy as np
import pytest

from disorder_lab.config import ExperimentConfig
from disorder_lab.core.partition import continuum_pinning_samples
from disorder_lab.core.renewal import RenewalLaw, build_renewal_law
from disorder_lab.core.walk import build_walk
from disorder_lab.errors import AcceptanceError, ConfigError, DomainError
from disorder_lab.experiments import run_experiment
from disorder_lab.experiments.checks import CheckReport, check_marginal, check_transition, run_check, violations
from disorder_lab.experiments.marginal import (
    limit_lognormal_params,
    marginal_beta,
    marginal_point,
    marginal_scan,
    theta_blocks,
    theta_intervals,
)
from disorder_lab.experiments.partition_runs import run_overlap, run_partition_z
from disorder_lab.experiments.scaling import (
    critical_point_scan,
    free_energy_estimate,
    pure_free_energy,
    scaling_collapse,
)
from disorder_lab.models import DisorderFamily, DisorderSpec, WalkFamily

GAUSSIAN = DisorderSpec(family=DisorderFamily.GAUSSIAN)
RADEMACHER = DisorderSpec(family=DisorderFamily.RADEMACHER)


def make_cfg(tmp_path, **fields) -> ExperimentConfig:
    return ExperimentConfig.model_validate({"output": str(tmp_path), **fields})


# ---------------------------------------------------------------------------
# Runs and artifacts
# ---------------------------------------------------------------------------

def test_pinning_run_writes_table_and_manifest(tmp_path):
    cfg = make_cfg(
        tmp_path, experiment="pinning-z", N_grid=[16, 32], samples=6,
        beta=0.5, h=-0.125, renewal={"alpha": 0.75, "N_max": 64},
    )
    table = run_experiment(cfg, resume=False)
    assert len(table.rows) == 12
    assert table.column("N") == [16] * 6 + [32] * 6
    for row in table.rows:
        assert row["Z"] == pytest.approx(math.exp(row["log_Z"]))
    assert (tmp_path / "pinning-z.csv").read_text().splitlines()[0].startswith("model,N,beta")
    manifest = json.loads((tmp_path / "manifest.json").read_text())
    assert manifest["config_hash"] == cfg.signature()
    assert manifest["seed"] == 0


def test_json_output_format(tmp_path):
    cfg = make_cfg(tmp_path, experiment="overlap", N_grid=[8, 64], format="json", renewal={"alpha": 0.5, "N_max": 64})
    run_experiment(cfg, resume=False)
    records = json.loads((tmp_path / "overlap.json").read_text())
    assert [r["N"] for r in records] == [8, 64]
    assert records[0]["R_N"] < records[1]["R_N"]


def test_polymer_rows_are_thread_independent(tmp_path):
    fields = dict(experiment="polymer-z", walk={"family": "ssrw-2d"}, N_grid=[8], samples=70, beta=0.4)
    one = run_partition_z(make_cfg(tmp_path / "a", threads=1, **fields), resume=False)
    four = run_partition_z(make_cfg(tmp_path / "b", threads=4, **fields), resume=False)
    assert one.column("log_Z") == four.column("log_Z")
    assert one.rows[0]["h"] == pytest.approx(-0.08)


def test_seed_changes_environments(tmp_path):
    fields = dict(experiment="pinning-z", N_grid=[16], samples=4, beta=0.5, renewal={"N_max": 32})
    a = run_partition_z(make_cfg(tmp_path, master_seed=1, **fields), resume=False)
    b = run_partition_z(make_cfg(tmp_path, master_seed=2, **fields), resume=False)
    assert a.column("log_Z") != b.column("log_Z")


def test_resume_reuses_cached_tasks(tmp_path, capsys):
    cfg = make_cfg(tmp_path, experiment="overlap", N_grid=[16, 32], renewal={"alpha": 0.5, "N_max": 64})
    first = run_overlap(cfg)
    second = run_overlap(cfg)
    assert "Cache hits: 2" in capsys.readouterr().out
    assert first.rows == second.rows


def test_point_to_point_polymer_run(tmp_path):
    cfg = make_cfg(tmp_path, experiment="polymer-z", mode="point-to-point", x=[0], N_grid=[4], samples=3, beta=0.4)
    table = run_partition_z(cfg, resume=False)
    assert table.column("endpoint") == ["point-to-point"] * 3
    with pytest.raises(ConfigError, match="need x"):
        run_partition_z(make_cfg(tmp_path, experiment="polymer-z", mode="point-to-point", N_grid=[4]), resume=False)


def test_overlap_rows_for_polymer(tmp_path):
    cfg = make_cfg(tmp_path, experiment="overlap", model="polymer", walk={"family": "ssrw-2d"}, N_grid=[4, 16])
    table = run_overlap(cfg, resume=False)
    assert table.column("dichotomy_sum") == [None, None]
    assert table.rows[0]["R_N"] < table.rows[1]["R_N"]


def test_chaos_oracle_run(tmp_path):
    cfg = make_cfg(
        tmp_path, experiment="chaos-oracle-check", N_grid=[8], samples=5,
        beta=0.6, h=-0.1, renewal={"alpha": 0.75, "N_max": 32},
    )
    table = run_experiment(cfg, resume=False, write=False)
    assert max(table.column("rel_error")) < 1e-10


def test_lindeberg_run(tmp_path):
    cfg = make_cfg(tmp_path, experiment="lindeberg", N_grid=[32], samples=100, beta_hat=1.0, renewal={"N_max": 64})
    (row,) = run_experiment(cfg, resume=False, write=False).rows
    assert 0.0 <= row["ks_distance"] <= 1.0
    assert row["family_b"] == "rademacher"


def test_continuum_chaos_run(tmp_path):
    cfg = make_cfg(
        tmp_path, experiment="continuum-chaos", mean_interarrival=2.0,
        beta_hat=1.0, h_hat=0.5, mesh=2.0 ** -8, k_max=8, samples=200,
    )
    table = run_experiment(cfg, resume=False, write=False)
    quantities = set(table.column("quantity"))
    assert {"chaos_component_second_moment", "tail_bound", "mc_mean", "closed_form_second_moment", "ks_closed_form"} <= quantities
    closed = next(r["value"] for r in table.rows if r["quantity"] == "closed_form_second_moment")
    assert closed == pytest.approx(math.exp(0.5 + 0.25))


# ---------------------------------------------------------------------------
# Marginal relevance
# ---------------------------------------------------------------------------

def test_limit_lognormal_params():
    limit = limit_lognormal_params(0.5)
    assert limit.sigma_sq == pytest.approx(math.log(4 / 3))
    assert limit.log_mean == pytest.approx(-0.5 * math.log(4 / 3))
    assert limit.second_moment == pytest.approx(4 / 3)
    assert limit_lognormal_params(1.0).degenerate
    assert limit_lognormal_params(1.0).second_moment is None
    with pytest.raises(DomainError):
        limit_lognormal_params(-0.1)


def test_marginal_beta():
    assert marginal_beta(0.5, 4.0) == pytest.approx(0.25)
    with pytest.raises(DomainError):
        marginal_beta(0.5, 0.0)


def test_marginal_point_without_disorder_is_trivial():
    law = build_renewal_law(0.5, N_max=64)
    row = marginal_point(law, GAUSSIAN, 0.0, 64, 20, master=3)
    assert row["mean_Z"] == pytest.approx(1.0)
    assert row["var_Z"] == pytest.approx(0.0, abs=1e-24)
    assert row["ks_lognormal"] == 0.0
    assert row["p_small"] == 0.0


def test_marginal_scan_shapes():
    law = build_renewal_law(0.5, N_max=64)
    table = marginal_scan(law, GAUSSIAN, [0.5, 1.5], [16, 64], 50, master=1)
    assert [(r["beta_hat"], r["N"]) for r in table.rows] == [(0.5, 16), (0.5, 64), (1.5, 16), (1.5, 64)]
    assert table.rows[2]["sigma_sq"] is None
    assert table.rows[2]["ks_lognormal"] is None
    with pytest.raises(ConfigError):
        marginal_scan(law, GAUSSIAN, [], [16], 50, master=1)


def test_theta_intervals():
    assert theta_intervals(16, 4) == [(2, 2), (3, 4), (5, 8), (9, 16)]
    with pytest.raises(ConfigError, match="empty"):
        theta_intervals(4, 8)


def test_theta_blocks_match_exact_variances():
    law = build_renewal_law(0.5, N_max=256)
    stats = theta_blocks(law, GAUSSIAN, 256, 4, 4000, master=1)
    assert len(stats.blocks) == 4
    for block in stats.blocks:
        assert block.variance == pytest.approx(block.exact_variance, rel=0.1)
    corr = np.asarray(stats.correlations)
    off = corr[~np.eye(4, dtype=bool)]
    assert np.max(np.abs(off)) < 5 / math.sqrt(4000)


def test_theta_blocks_nonlinear_polymer():
    walk = build_walk(WalkFamily.SSRW_1D)
    stats = theta_blocks(walk, RADEMACHER, 16, 2, 300, master=2, beta=0.5, normalization="log")
    assert stats.normalization == "log"
    assert [(b.lower, b.upper) for b in stats.blocks] == [(2, 4), (5, 16)]
    assert all(math.isfinite(b.variance) for b in stats.blocks)


# ---------------------------------------------------------------------------
# Free energy and scaling
# ---------------------------------------------------------------------------

def test_pure_free_energy():
    law = build_renewal_law(0.75, N_max=4096)
    assert pure_free_energy(law, -0.3) == 0.0
    assert pure_free_energy(law, 0.0) == 0.0
    values = [pure_free_energy(law, h) for h in (0.1, 0.3, 1.0)]
    assert 0.0 < values[0] < values[1] < values[2] < 1.0
    assert pure_free_energy(RenewalLaw.deterministic(10), 0.7) == pytest.approx(0.7)


def test_free_energy_estimate_without_disorder():
    law = build_renewal_law(0.75, N_max=1024)
    est = free_energy_estimate(law, GAUSSIAN, 0.0, 0.3, 1024, 2, master=0)
    assert est.stderr == 0.0
    assert est.f_hat == pytest.approx(pure_free_energy(law, 0.3), abs=math.log(1024) / 1024)
    negative = free_energy_estimate(law, GAUSSIAN, 0.0, -0.3, 1024, 2, master=0)
    assert negative.f_raw < 0.0
    assert negative.f_hat == 0.0
    with pytest.raises(DomainError):
        free_energy_estimate(law, GAUSSIAN, 0.0, 0.3, 64, 2, master=0)


def test_critical_scan_brackets_the_pure_transition():
    law = build_renewal_law(0.75, N_max=4096)
    est = critical_point_scan(law, GAUSSIAN, 0.0, [-0.5, -0.25, 0.0, 0.25, 0.5], 4096, 4, master=0)
    # every environment gives the same Z at beta = 0, so the threshold is 3 * 0
    assert est.threshold < 1e-12
    assert est.h_lo <= 0.0 <= est.h_hi
    assert est.h_hi - est.h_lo == pytest.approx(0.25 / 2 ** 6)


def test_critical_scan_uses_a_given_threshold():
    law = build_renewal_law(0.75, N_max=1024)
    est = critical_point_scan(law, GAUSSIAN, 0.0, [-0.5, 0.0, 0.5], 1024, 2, master=0, threshold=0.01, levels=0)
    assert est.threshold == 0.01
    assert (est.h_lo, est.h_hi) == (0.0, 0.5)


def test_critical_scan_errors():
    law = build_renewal_law(0.75, N_max=1024)
    with pytest.raises(ConfigError):
        critical_point_scan(law, GAUSSIAN, 0.0, [0.5, 0.0], 1024, 2, master=0)
    with pytest.raises(DomainError, match="widen"):
        critical_point_scan(law, GAUSSIAN, 0.0, [-0.5, -0.25], 1024, 2, master=0)


def test_scaling_collapse_rows():
    table = scaling_collapse(0.75, GAUSSIAN, 1.0, 1.0, [1 / 16], 16, 20, master=5)
    (row,) = table.rows
    assert row["N"] == 256
    assert row["collapsed_value"] == pytest.approx(16 * row["f_hat"])
    assert row["pure_oracle"] is None
    with pytest.raises(DomainError):
        scaling_collapse(0.4, GAUSSIAN, 1.0, 1.0, [1 / 16], 16, 20, master=5)


def test_scaling_collapse_needs_deltas(tmp_path):
    cfg = make_cfg(tmp_path, experiment="scaling-collapse")
    with pytest.raises(ConfigError, match="delta_grid"):
        run_experiment(cfg, resume=False, write=False)


# ---------------------------------------------------------------------------
# Checks
# ---------------------------------------------------------------------------

def test_violations():
    assert violations([3.0, 2.0, 2.5, 1.0]) == 1
    assert violations([3.0, 2.0, 2.5, 1.0], slack=0.6) == 0
    assert violations([]) == 0


def test_check_report_collects_failures():
    report = CheckReport("demo")
    report.expect("a", 1.0, "<= 2", True)
    report.expect("b", None, "informational", False)
    assert [r["quantity"] for r in report.failures] == ["b"]
    assert report.table().experiment == "check-demo"


def test_unknown_check(tmp_path):
    with pytest.raises(AcceptanceError, match="unknown check"):
        run_check("nope", out=tmp_path)


def test_continuum_check_fails_when_the_closed_form_law_differs(tmp_path, monkeypatch):
    def doubled(params, seed, count):
        return 2.0 * continuum_pinning_samples(params, seed, count)

    monkeypatch.setattr("disorder_lab.experiments.checks.continuum_pinning_samples", doubled)
    with pytest.raises(AcceptanceError, match="closed-form sampler"):
        run_check("continuum", quick=True, out=tmp_path)
    with open(tmp_path / "check-continuum.csv", newline="") as f:
        passed = {r["quantity"]: r["passed"] for r in csv.DictReader(f)}
    assert passed["KS(series, closed-form sampler)"] == "False"



@pytest.fixture
def recorded_marginal_points(monkeypatch):
    calls = []

    def fake(model, spec, beta_hat, N, samples, master, threads=1, tol=1e-6):
        calls.append((type(model).__name__, N))
        return {
            "E_Z2": 4 / 3 + 1 / N, "ks_lognormal": 0.01 + 1 / N, "median_Z": 1 / N,
            "mean_Z": 1.0, "mean_Z_stderr": 0.1, "p_small": 0.9,
        }

    monkeypatch.setattr("disorder_lab.experiments.checks.marginal_point", fake)
    return calls


def test_full_transition_check_runs_both_models_on_the_whole_grid(tmp_path, recorded_marginal_points):
    report = CheckReport("transition")
    check_transition(report, 0, False, 1, tmp_path)
    grid = [2 ** k for k in range(8, 15)]
    assert [N for kind, N in recorded_marginal_points if kind == "WalkLaw"] == grid
    assert [N for kind, N in recorded_marginal_points if kind == "RenewalLaw"] == grid
    quantities = {r["quantity"] for r in report.rows}
    assert "polymer ssrw-2d P(Z < 0.01) at N=16384" in quantities
    assert "pinning alpha=1/2 P(Z < 0.01) at N=16384" in quantities
    assert not report.failures


def test_full_marginal_check_tracks_the_polymer_trend(tmp_path, recorded_marginal_points):
    report = CheckReport("marginal")
    check_marginal(report, 0, False, 1, tmp_path)
    assert [N for kind, N in recorded_marginal_points if kind == "WalkLaw"] == [2 ** 6, 2 ** 8, 2 ** 10]
    quantities = {r["quantity"] for r in report.rows}
    assert "polymer ssrw-2d KS trend violations" in quantities
    assert "polymer ssrw-2d final KS to log-normal" not in quantities
    assert not report.failures

@pytest.mark.slow
@pytest.mark.parametrize("name", ["oracle", "rescaling", "free-energy", "determinism"])
def test_quick_checks_pass(tmp_path, name):
    report = run_check(name, quick=True, threads=2, out=tmp_path)
    assert not report.failures
    assert (tmp_path / f"check-{name}.csv").exists()
