"""
Decaying learning-rate schedules of the form 1 / t^phi.
"""

from dataclasses import dataclass


@dataclass(frozen=True)
class DecayingRate:
    """
    Learning rate t -> 1 / t^exponent for t >= 1.

    Exponents in (0.5, 1] give a divergent sum and a convergent sum of
    squares, the usual stochastic-approximation conditions. Exponent 0 is
    accepted as the constant schedule 1 (full replacement).
    """

    exponent: float

    def __post_init__(self) -> None:
        if not (self.exponent == 0.0 or 0.5 < self.exponent <= 1.0):
            raise ValueError(
                "learning-rate exponent must lie in (0.5, 1] "
                f"(or be 0 for a constant rate), got {self.exponent}"
            )

    def __call__(self, t: int) -> float:
        if t < 1:
            raise ValueError(f"slot index must be >= 1, got {t}")
        return float(t ** -self.exponent)
