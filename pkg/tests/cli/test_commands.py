"""
Tests for CLI commands.

Tests the Typer-based command-line interface commands.
"""

import json
from pathlib import Path

import pytest
from pytest import MonkeyPatch
from typer.testing import CliRunner

from pycellsleep.cli import commands
from pycellsleep.core.verification import VerificationRow
from pycellsleep.main import app

runner = CliRunner()

SMALL_CONFIG = """
[scenario]
n_sbs = 2
n_ue = 5

[clustering]
update_interval = 4

[run]
strategy = "learning-spectral"
slots = 10
seeds = [0]
workers = 1

[sweep]
n_ue = [4]
strategies = ["classical", "learning-noclusters"]
"""


@pytest.fixture
def config_file(tmp_path: Path) -> Path:
    path = tmp_path / "run.toml"
    path.write_text(SMALL_CONFIG, encoding="utf-8")
    return path


def test_no_command_shows_help() -> None:
    """
    Test that invoking without a command prints the usage.
    """
    result = runner.invoke(app, [])
    assert "Usage" in result.output
    assert "simulate" in result.output


def test_simulate(config_file: Path, tmp_path: Path) -> None:
    """
    Test the simulate command on a small configured scenario.

    Verifies the metrics table and the output files.
    """
    out = tmp_path / "out"
    result = runner.invoke(
        app, ["simulate", "--config", str(config_file), "--out", str(out)]
    )
    assert result.exit_code == 0, result.output
    assert "Simulation Results: learning-spectral" in result.stdout
    assert (out / "runs.csv").exists()
    assert (out / "similarity.csv").exists()
    assert not (out / "trace.csv").exists()
    summary = json.loads((out / "summary.json").read_text(encoding="utf-8"))
    assert summary["groups"][0]["strategy"] == "learning-spectral"


def test_simulate_options(config_file: Path, tmp_path: Path) -> None:
    """
    Test that command-line options override the configured run.
    """
    out = tmp_path / "out"
    result = runner.invoke(
        app,
        [
            "-v",
            "simulate",
            "-c",
            str(config_file),
            "-o",
            str(out),
            "--strategy",
            "random-onoff",
            "--slots",
            "6",
            "--seed",
            "3",
            "--trace",
        ],
    )
    assert result.exit_code == 0, result.output
    assert "Simulation Results: random-onoff" in result.stdout
    lines = (out / "trace.csv").read_text(encoding="utf-8").splitlines()
    assert len(lines) == 7


def test_simulate_invalid_strategy(config_file: Path) -> None:
    """
    Test that an unknown strategy is rejected by the option parser.
    """
    result = runner.invoke(
        app, ["simulate", "-c", str(config_file), "--strategy", "always-off"]
    )
    assert result.exit_code != 0


def test_simulate_invalid_config(tmp_path: Path) -> None:
    """
    Test that an invalid configuration exits with code 1.
    """
    path = tmp_path / "bad.toml"
    path.write_text("[run]\nslots = 0\n", encoding="utf-8")
    result = runner.invoke(app, ["simulate", "-c", str(path)])
    assert result.exit_code == 1
    assert "Invalid input" in result.output


def test_simulate_missing_config(tmp_path: Path) -> None:
    """
    Test that a missing configuration file exits with code 2.
    """
    result = runner.invoke(
        app, ["simulate", "-c", str(tmp_path / "absent.toml")]
    )
    assert result.exit_code == 2
    assert "absent.toml" in result.output


def test_sweep(config_file: Path, tmp_path: Path) -> None:
    """
    Test the sweep command with a single worker.
    """
    out = tmp_path / "sweep"
    result = runner.invoke(
        app,
        ["sweep", "-c", str(config_file), "-o", str(out), "--workers", "1"],
    )
    assert result.exit_code == 0, result.output
    assert "Sweep Summary" in result.stdout
    rows = (out / "runs.csv").read_text(encoding="utf-8").splitlines()
    assert len(rows) == 3


def test_sweep_negative_workers(config_file: Path, tmp_path: Path) -> None:
    """
    Test that a negative worker count exits with code 1.
    """
    result = runner.invoke(
        app, ["sweep", "-c", str(config_file), "-o", str(tmp_path), "-w", "-1"]
    )
    assert result.exit_code == 1


def test_verify_passes(monkeypatch: MonkeyPatch) -> None:
    """
    Test that the verify command exits cleanly when every check passes.
    """
    rows = [VerificationRow("similarity-embedding", "10 sets", 0.0, 1e-9, True)]
    monkeypatch.setattr(commands, "run_verify", lambda seed, horizon: rows)
    result = runner.invoke(app, ["verify"])
    assert result.exit_code == 0, result.output
    assert "similarity-embedding" in result.stdout


def test_verify_failure_exit_code(monkeypatch: MonkeyPatch) -> None:
    """
    Test that a failed check exits with code 5.
    """
    rows = [
        VerificationRow("cce-limit", "dominant actions", 0.0, 0.0, True),
        VerificationRow("empirical-stationary", "2x2", 0.2, 0.05, False),
    ]
    monkeypatch.setattr(commands, "run_verify", lambda seed, horizon: rows)
    result = runner.invoke(app, ["verify", "--horizon", "100"])
    assert result.exit_code == 5
    assert "Verification failed: empirical-stationary" in result.output


def test_verify_short_horizon() -> None:
    """
    Test that a horizon below two slots exits with code 1.
    """
    result = runner.invoke(app, ["verify", "--horizon", "1"])
    assert result.exit_code == 1
    assert "horizon" in result.output
