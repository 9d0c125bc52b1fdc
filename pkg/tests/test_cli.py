import json

import pytest
import yaml
from click.testing import CliRunner

from disorder_lab.cli import main


@pytest.fixture
def runner():
    return CliRunner()


@pytest.fixture
def overlap_config(tmp_path):
    path = tmp_path / "overlap.yaml"
    path.write_text(yaml.safe_dump({
        "experiment": "overlap",
        "N_grid": [8, 32],
        "renewal": {"alpha": 0.5, "N_max": 64},
    }))
    return path


def test_show_config_fills_defaults(runner, overlap_config):
    result = runner.invoke(main, ["show-config", "--config", str(overlap_config), "--set", "renewal.alpha=0.6"])
    assert result.exit_code == 0, result.output
    body, signature = result.output.rsplit("# signature", 1)
    cfg = json.loads(body)
    assert cfg["renewal"]["alpha"] == 0.6
    assert cfg["endpoint"] == "free"
    assert len(signature.strip()) == 16


def test_run_writes_results(runner, overlap_config, tmp_path):
    out = tmp_path / "out"
    result = runner.invoke(main, ["run", "--config", str(overlap_config), "--out", str(out), "--seed", "3", "--no-resume"])
    assert result.exit_code == 0, result.output
    assert "Done: 2 rows" in result.output
    assert (out / "overlap.csv").exists()
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"] == 3


def test_run_json_format(runner, overlap_config, tmp_path):
    out = tmp_path / "out"
    result = runner.invoke(main, ["run", "--config", str(overlap_config), "--out", str(out), "--format", "json"])
    assert result.exit_code == 0, result.output
    assert len(json.loads((out / "overlap.json").read_text())) == 2


def test_invalid_config_exits_2(runner, overlap_config):
    result = runner.invoke(main, ["show-config", "--config", str(overlap_config), "--set", "N_grid=[0]"])
    assert result.exit_code == 2
    assert "Invalid config" in result.output


def test_unknown_field_names_its_path(runner, overlap_config):
    result = runner.invoke(main, ["show-config", "--config", str(overlap_config), "--set", "renewal.bogus=1"])
    assert result.exit_code == 2
    assert "renewal.bogus" in result.output


def test_malformed_override_exits_2(runner, overlap_config):
    result = runner.invoke(main, ["show-config", "--config", str(overlap_config), "--set", "alpha"])
    assert result.exit_code == 2
    assert "key=value" in result.output


def test_domain_error_exit_code(runner, tmp_path):
    path = tmp_path / "collapse.yaml"
    path.write_text(yaml.safe_dump({"experiment": "scaling-collapse"}))
    result = runner.invoke(main, ["run", "--config", str(path), "--out", str(tmp_path / "out")])
    assert result.exit_code == 2
    assert "delta_grid" in result.output


def test_unknown_check_is_a_usage_error(runner):
    result = runner.invoke(main, ["check", "nope"])
    assert result.exit_code == 2
    assert "choose from" in result.output


def test_check_runs_quick(runner, tmp_path):
    result = runner.invoke(main, ["check", "rescaling", "--quick", "--out", str(tmp_path)])
    assert result.exit_code == 0, result.output
    assert "bounds hold" in result.output
    assert (tmp_path / "check-rescaling.csv").exists()
