"""
Exception types raised by pycellsleep.

Situations the simulator treats as part of normal operation (overloaded
base stations, unserved users, empty scheduling problems) are reported in
return values and never raised.
"""


class PyCellSleepError(Exception):
    """Base class for all pycellsleep errors."""


class InvalidGeometryError(PyCellSleepError, ValueError):
    """A distance or position violates the geometric model."""


class InvalidStateError(PyCellSleepError, ValueError):
    """An operation was asked to act on a base station in the wrong state."""


class InvalidArgumentError(PyCellSleepError, ValueError):
    """An argument is outside the range an operation accepts."""


class ConfigurationError(PyCellSleepError, ValueError):
    """A configuration file or object is malformed or inconsistent."""


class ScenarioGenerationError(PyCellSleepError, RuntimeError):
    """Random placement could not satisfy the minimum-distance rules."""


class NumericalFailureError(PyCellSleepError, ArithmeticError):
    """An iterative numerical method failed to converge."""

    def __init__(self, message: str, residual: float, sweeps: int) -> None:
        super().__init__(f"{message} (residual={residual:.3e}, sweeps={sweeps})")
        self.residual = residual
        self.sweeps = sweeps
