"""
pycellsleep: dynamic clustering and ON/OFF switching of small cells.

This package simulates a macro cell underlaid with small base stations that
form clusters by load and distance similarity and learn, per cluster, which
members to switch OFF so that a weighted sum of energy and load is minimised.
"""

import importlib.metadata
import importlib.resources
from pathlib import Path

__version__ = importlib.metadata.version("pycellsleep")

DEFAULTS_FILE = "table1.toml"


def get_data_file(filename: str = DEFAULTS_FILE) -> Path:
    """
    Locate a file shipped in ``pycellsleep/data``.

    :param filename: Name of the data file; the default configuration if
        omitted
    :returns: Path to the data file
    :raises FileNotFoundError: If the package does not ship the file

    Examples
    --------
    >>> import tomllib
    >>> from pycellsleep import get_data_file
    >>> with open(get_data_file(), 'rb') as f:
    ...     defaults = tomllib.load(f)
    >>> defaults['learning']['kappa']
    10.0
    """
    path = Path(str(importlib.resources.files("pycellsleep.data") / filename))
    if not path.is_file():
        raise FileNotFoundError(2, "No such packaged data file", str(path))
    return path
