"""
CLI commands for pycellsleep.

Defines the Typer application and command handlers for the CLI interface.
"""

import typer

from .. import __version__ as version
from ..core.cli_utils import (
    check_verification,
    configure_logging,
    output_simulation_results,
    output_sweep_summary,
    output_verification_results,
    read_config,
    run_simulate,
    run_sweep,
    run_verify,
)
from ..core.simulation import Strategy
from ..core.verification import DEFAULT_HORIZON

HELP_OPTIONS = ["-h", "-?", "--help"]

DEFAULT_OUT_DIR = "results"

# CLI option definitions
CONFIG_OPTION = typer.Option(
    None,
    "--config",
    "-c",
    help="TOML configuration file (packaged defaults if omitted)",
)
OUT_OPTION = typer.Option(
    DEFAULT_OUT_DIR, "--out", "-o", help="Output directory for result files"
)

app = typer.Typer(
    name="pycellsleep",
    help="""
    [bold cyan]Dynamic clustering and ON/OFF switching of small cells[/bold cyan]
    """,
    add_completion=True,
    rich_markup_mode="rich",
    no_args_is_help=True,
    pretty_exceptions_enable=True,
)

app.help_option_names = HELP_OPTIONS  # type: ignore


def version_callback(value: bool) -> None:
    if value:
        typer.echo(f"pycellsleep version: {version}")
        raise typer.Exit()


@app.callback()
def main(
    verbose: int = typer.Option(
        0,
        "--verbose",
        "-v",
        count=True,
        help="Log INFO (-v) or DEBUG (-vv) messages to stderr",
    ),
    version: bool = typer.Option(
        None, "--version", callback=version_callback, is_eager=True
    ),
) -> None:
    """
    Simulate clustered small-cell networks that learn to sleep.

    :param verbose: Verbosity level
    :param version: Show version and exit
    """
    configure_logging(verbose)


@app.command()
def simulate(
    config: str | None = CONFIG_OPTION,
    strategy: Strategy | None = typer.Option(
        None, "--strategy", "-s", help="Strategy (configured one if omitted)"
    ),
    slots: int | None = typer.Option(
        None, "--slots", "-t", help="Number of slots T"
    ),
    seed: int | None = typer.Option(
        None, "--seed", help="Seed (first configured seed if omitted)"
    ),
    out: str = OUT_OPTION,
    trace: bool = typer.Option(
        False, "--trace", help="Write the per-slot trace.csv"
    ),
) -> None:
    """
    Run one strategy on one scenario.

    Writes runs.csv, summary.json, cdf_energy.csv, cdf_load.csv,
    clusters.csv and similarity.csv (and trace.csv with --trace) to the
    output directory and prints the run's metrics.

    :param config: Configuration file
    :param strategy: Strategy to run
    :param slots: Number of slots
    :param seed: Seed of the scenario and the run
    :param out: Output directory
    :param trace: Write the per-slot trace
    """
    cfg = read_config(config)
    result = run_simulate(cfg, out, strategy, slots, seed, trace)
    output_simulation_results(result)


@app.command()
def sweep(
    config: str | None = CONFIG_OPTION,
    out: str = OUT_OPTION,
    workers: int | None = typer.Option(
        None,
        "--workers",
        "-w",
        help="Worker processes (0 uses every CPU; configured value if omitted)",
    ),
) -> None:
    """
    Run the configured sweep: axes x strategies x seeds.

    :param config: Configuration file
    :param out: Output directory
    :param workers: Number of worker processes
    """
    cfg = read_config(config)
    result = run_sweep(cfg, out, workers)
    output_sweep_summary(result.summary)


@app.command()
def verify(
    seed: int = typer.Option(0, "--seed", help="Seed of the suite"),
    horizon: int = typer.Option(
        DEFAULT_HORIZON,
        "--horizon",
        help="Slots of the empirical learning check",
    ),
) -> None:
    """
    Run the pass/fail verification suite.

    Exits with code 5 if any check fails.

    :param seed: Seed of the suite
    :param horizon: Slots of the empirical learning check
    """
    rows = run_verify(seed, horizon)
    output_verification_results(rows)
    check_verification(rows)
