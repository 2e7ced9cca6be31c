"""
Entry point of the ``pycellsleep`` command.

Rewrites help aliases and runs the Typer app.
"""

import sys

from .cli.commands import app

HELP_ALIASES = ("-h", "-?")


def process_argv(argv: list[str] | None = None) -> list[str]:
    """
    Replace the help aliases '-h' and '-?' by '--help', in place.

    :param argv: Argument list to rewrite (``sys.argv`` if None)
    :returns: The rewritten list
    """
    args = sys.argv if argv is None else argv
    args[:] = ["--help" if arg in HELP_ALIASES else arg for arg in args]
    return args


def main() -> None:
    """Run the command line."""
    process_argv()
    app(prog_name="pycellsleep")


if __name__ == "__main__":
    main()
