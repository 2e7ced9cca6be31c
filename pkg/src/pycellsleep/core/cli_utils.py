"""
CLI utility functions for pycellsleep.

Contains business logic and error handling functions used by the CLI.
"""

import logging
from collections.abc import Iterator
from contextlib import contextmanager
from dataclasses import replace
from pathlib import Path
from typing import Any, NamedTuple, NoReturn

import numpy as np
import typer
from rich.console import Console
from rich.logging import RichHandler
from rich.progress import (
    BarColumn,
    MofNCompleteColumn,
    Progress,
    TextColumn,
    TimeElapsedColumn,
)
from rich.table import Table

from .config import Config, load_config
from .errors import (
    ConfigurationError,
    NumericalFailureError,
    ScenarioGenerationError,
)
from .harness import (
    ExperimentResult,
    MetricsRecord,
    TraceWriter,
    run_experiment,
    run_strategy,
    scenario_for,
    sweep_cells,
    write_outputs,
)
from .simulation import SlotRecord, Strategy
from .similarity import write_similarity_csv
from .verification import DEFAULT_HORIZON, VerificationRow, run_verification

logger = logging.getLogger(__name__)

PACKAGE_LOGGER = "pycellsleep"

EXIT_INVALID_INPUT = 1
EXIT_FILE_NOT_FOUND = 2
EXIT_GENERAL_ERROR = 3
EXIT_NUMERICAL_FAILURE = 4
EXIT_VERIFICATION_FAILED = 5


class SimulateResult(NamedTuple):
    """Result of the ``simulate`` command."""

    metrics: MetricsRecord
    out_dir: Path

    @property
    def off_percent(self) -> float:
        """Share of SBS-slots spent OFF, in percent."""
        return 100.0 * self.metrics.off_fraction


def configure_logging(verbosity: int) -> None:
    """
    Route package log records to a rich handler on stderr.

    :param verbosity: 0 for WARNING, 1 for INFO, 2 or more for DEBUG
    """
    level = [logging.WARNING, logging.INFO, logging.DEBUG][min(verbosity, 2)]
    package_logger = logging.getLogger(PACKAGE_LOGGER)
    for handler in list(package_logger.handlers):
        if isinstance(handler, RichHandler):
            package_logger.removeHandler(handler)
    package_logger.addHandler(
        RichHandler(console=Console(stderr=True), show_path=False)
    )
    package_logger.setLevel(level)


def _progress() -> Progress:
    return Progress(
        TextColumn("[progress.description]{task.description}"),
        BarColumn(),
        MofNCompleteColumn(),
        TimeElapsedColumn(),
        console=Console(stderr=True),
        transient=True,
    )


@contextmanager
def cli_errors(filename: str | None = None) -> Iterator[None]:
    """
    Convert library exceptions into CLI exit codes.

    :param filename: File named in the not-found message when the exception
        does not carry one
    :raises typer.Exit: 1 invalid input, 2 file not found, 3 unexpected
        error, 4 numerical failure
    """
    try:
        yield
    except typer.Exit:
        raise
    except FileNotFoundError as exc:
        handle_file_not_found_error(str(exc.filename or filename), exc)
    except NumericalFailureError as exc:
        handle_numerical_failure(exc)
    except (ConfigurationError, ScenarioGenerationError, ValueError) as exc:
        handle_invalid_input(exc)
    except Exception as exc:  # Catch any unexpected errors
        handle_general_error(exc)


def read_config(config_path: str | None) -> Config:
    """
    Load the configuration file, or the packaged defaults.

    :param config_path: TOML file, or None for the defaults
    :returns: The configuration
    :raises typer.Exit: If the file is missing or invalid
    """
    with cli_errors(config_path):
        config = load_config(config_path)
    return config


def run_simulate(
    config: Config,
    out: str,
    strategy: Strategy | None = None,
    slots: int | None = None,
    seed: int | None = None,
    trace: bool = False,
    show_progress: bool = True,
) -> SimulateResult:
    """
    Simulate one strategy on one scenario and write the output files.

    :param config: Configuration
    :param out: Output directory
    :param strategy: Strategy (configured one if None)
    :param slots: Number of slots (configured value if None)
    :param seed: Seed (first configured seed if None)
    :param trace: Also write the per-slot ``trace.csv``
    :param show_progress: Show a progress bar on stderr
    :returns: Metrics of the run and the output directory
    :raises typer.Exit: On invalid input or numerical failure
    """
    with cli_errors():
        strategy = strategy or config.run.strategy
        slots = config.run.slots if slots is None else slots
        seed = config.run.seeds[0] if seed is None else seed
        if slots < 1:
            raise ConfigurationError("slots must be >= 1")
        out_dir = Path(out)
        out_dir.mkdir(parents=True, exist_ok=True)
        scenario = scenario_for(config, seed)
        settings = config.simulation_settings(strategy)
        rng = np.random.default_rng([seed, 1])

        with _progress() as progress, _trace_file(out_dir, trace) as stream:
            task = progress.add_task(
                strategy.value, total=slots, visible=show_progress
            )
            writer = TraceWriter(stream, scenario.n_bs) if stream else None

            def on_slot(record: SlotRecord) -> None:
                if writer is not None:
                    writer(record)
                progress.advance(task)

            metrics, result = run_strategy(
                scenario, settings, slots, rng, seed, on_slot
            )

        clustering = config.clustering
        metrics = replace(
            metrics,
            epsilon_d_m=clustering.epsilon_d_m,
            theta=clustering.theta,
            chi_w_per_m=clustering.chi_w_per_m,
        )
        write_outputs([metrics], out_dir)
        write_similarity_csv(result.final_state.graph, out_dir / "similarity.csv")
    return SimulateResult(metrics, out_dir)


@contextmanager
def _trace_file(out_dir: Path, enabled: bool) -> Iterator[Any]:
    if not enabled:
        yield None
        return
    with open(out_dir / "trace.csv", "w", newline="", encoding="utf-8") as f:
        yield f


def run_sweep(
    config: Config, out: str, workers: int | None = None
) -> ExperimentResult:
    """
    Run the configured sweep and write the output files.

    :param config: Configuration with run and sweep sections
    :param out: Output directory
    :param workers: Worker processes (configured value if None)
    :returns: The experiment result
    :raises typer.Exit: On invalid input or unexpected errors
    """
    with cli_errors():
        if workers is not None and workers < 0:
            raise ConfigurationError("workers must be >= 0")
        total = len(sweep_cells(config))
        with _progress() as progress:
            task = progress.add_task("sweep", total=total)
            result = run_experiment(
                config,
                out,
                workers,
                on_done=lambda _: progress.advance(task),
            )
        if result.failed:
            typer.echo(
                f"{result.failed} of {len(result.records)} run(s) failed; "
                f"see {Path(out) / 'runs.csv'}",
                err=True,
            )
    return result


def run_verify(
    seed: int = 0, horizon: int = DEFAULT_HORIZON
) -> list[VerificationRow]:
    """
    Run the verification suite.

    :param seed: Seed of the suite
    :param horizon: Slots of the empirical learning check
    :returns: Verification rows
    :raises typer.Exit: On numerical failure or unexpected errors
    """
    with cli_errors():
        if horizon < 2:
            raise ConfigurationError("horizon must be >= 2")
        with _progress() as progress:
            task = progress.add_task("verify", total=None)
            rows = run_verification(
                seed,
                horizon,
                on_check=lambda name: progress.update(task, description=name),
            )
    return rows


def _fmt(value: float | None) -> str:
    return "-" if value is None else f"{value:.6e}"


def output_simulation_results(result: SimulateResult) -> None:
    """
    Print the metrics of one run as a table.

    :param result: Result of the ``simulate`` command
    """
    m = result.metrics
    console = Console()
    table = Table(title=f"Simulation Results: {m.strategy}")
    table.add_column("Metric", style="cyan")
    table.add_column("Value", justify="right", style="green")
    for name, value in [
        ("Base stations", str(m.n_bs)),
        ("UEs", str(m.n_ue)),
        ("Slots", str(m.slots)),
        ("Average cost per BS", _fmt(m.avg_cost_per_bs)),
        ("Average energy per BS [W]", _fmt(m.avg_energy_per_bs)),
        ("Average load per BS", _fmt(m.avg_load_per_bs)),
        ("SBSs OFF [%]", f"{result.off_percent:.2f}"),
        ("Unserved UEs [%]", f"{100.0 * m.unserved_fraction:.2f}"),
        ("Network cost", _fmt(m.network_cost)),
        ("Average expected flows", _fmt(m.avg_expected_flows)),
        ("Clusters (mean)", f"{m.mean_clusters:.2f}"),
        ("Cluster size (mean)", f"{m.mean_cluster_size:.2f}"),
    ]:
        table.add_row(name, value)
    console.print(table)
    console.print(f"Output written to {result.out_dir}")


def output_sweep_summary(summary: dict[str, Any]) -> None:
    """
    Print per-strategy means and reductions of a sweep as a table.

    :param summary: Summary returned by the experiment
    """
    console = Console()
    table = Table(title="Sweep Summary")
    table.add_column("Strategy", style="cyan")
    table.add_column("UEs", justify="right", style="cyan")
    table.add_column("Runs", justify="right")
    table.add_column("Cost / BS", justify="right", style="green")
    table.add_column("Std", justify="right", style="yellow")
    table.add_column("Energy / BS [W]", justify="right", style="green")
    table.add_column("OFF [%]", justify="right", style="green")
    table.add_column("Cost reduction [%]", justify="right", style="magenta")
    for group in summary["groups"]:
        stats = group["metrics"]
        off = stats["off_fraction"]["mean"]
        reduction = group.get("reduction_vs_classical_percent", {}).get("cost")
        table.add_row(
            group["strategy"],
            str(group["n_ue"]),
            f"{group['runs']}" + (f" ({group['failed']} failed)" if group["failed"] else ""),
            _fmt(stats["avg_cost_per_bs"]["mean"]),
            _fmt(stats["avg_cost_per_bs"]["std"]),
            _fmt(stats["avg_energy_per_bs"]["mean"]),
            "-" if off is None else f"{100.0 * off:.2f}",
            "-" if reduction is None else f"{reduction:.2f}",
        )
    console.print(table)


def output_verification_results(rows: list[VerificationRow]) -> None:
    """
    Print the verification table.

    :param rows: Verification rows
    """
    console = Console()
    table = Table(title="Verification")
    table.add_column("Check", style="cyan")
    table.add_column("Instance")
    table.add_column("Measured", justify="right", style="yellow")
    table.add_column("Threshold", justify="right", style="yellow")
    table.add_column("Result", justify="center")
    for row in rows:
        table.add_row(
            row.check,
            row.instance,
            f"{row.measured:.6e}",
            f"{row.threshold:.6e}",
            "[green]PASS[/green]" if row.passed else "[red]FAIL[/red]",
        )
    console.print(table)


def check_verification(rows: list[VerificationRow]) -> None:
    """
    Exit with a failure code unless every verification row passed.

    :param rows: Verification rows
    :raises typer.Exit: Exit code 5 if any check failed
    """
    failed = [row.check for row in rows if not row.passed]
    if failed:
        handle_verification_failure(failed)


def handle_file_not_found_error(
    filename: str, exc: FileNotFoundError
) -> NoReturn:
    """
    Handle file not found errors.

    :param filename: The filename that was not found
    :param exc: The original exception
    :raises typer.Exit: Always raises exit code 2
    """
    typer.echo(f"Failed to open file '{filename}'", err=True)
    raise typer.Exit(EXIT_FILE_NOT_FOUND) from exc


def handle_invalid_input(exc: Exception) -> NoReturn:
    """
    Handle invalid arguments and configurations.

    :param exc: The original exception
    :raises typer.Exit: Always raises exit code 1
    """
    typer.echo(f"Invalid input: {exc}", err=True)
    raise typer.Exit(EXIT_INVALID_INPUT) from exc


def handle_numerical_failure(exc: NumericalFailureError) -> NoReturn:
    """
    Handle a numerical routine that did not converge.

    :param exc: The original exception
    :raises typer.Exit: Always raises exit code 4
    """
    typer.echo(f"Numerical failure: {exc}", err=True)
    raise typer.Exit(EXIT_NUMERICAL_FAILURE) from exc


def handle_verification_failure(failed: list[str]) -> NoReturn:
    """
    Handle failed verification checks.

    :param failed: Names of the failed checks
    :raises typer.Exit: Always raises exit code 5
    """
    typer.echo(f"Verification failed: {', '.join(failed)}", err=True)
    raise typer.Exit(EXIT_VERIFICATION_FAILED)


def handle_general_error(exc: Exception) -> NoReturn:
    """
    Handle general errors.

    :param exc: The exception that occurred
    :raises typer.Exit: Always raises exit code 3
    """
    typer.echo(f"Error: {exc}", err=True)
    raise typer.Exit(EXIT_GENERAL_ERROR) from None
