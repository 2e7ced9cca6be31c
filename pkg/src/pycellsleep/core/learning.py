"""
Regret-based learning of cluster ON/OFF actions.

Every cluster is a player whose actions are joint (power, ON/OFF)
configurations of its members. A player keeps utility estimates, regret
estimates and a mixed strategy, updated on three decaying timescales; the
strategy tracks the Boltzmann-Gibbs distribution of the positive regrets.
"""

import itertools
import logging
from collections.abc import Iterator, Sequence
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.special import softmax

from .errors import InvalidArgumentError
from .schedules import DecayingRate

logger = logging.getLogger(__name__)

DEFAULT_KAPPA = 10.0
DEFAULT_POWER_LEVELS = 1
ALLOWED_POWER_LEVELS = (1, 2, 4)

# Caps applied to clusters with more than LARGE_CLUSTER members.
LARGE_CLUSTER = 6
MAX_OFF_MEMBERS = 3
MAX_ACTIONS = 64


class ExponentAssignment(Enum):
    """How the exponents 0.6, 0.7, 0.8 map onto the three learning rates."""

    TABLE = "table"
    ORDERED = "ordered"


@dataclass(frozen=True)
class LearningRates:
    """Schedules of the utility, regret and strategy updates."""

    utility: DecayingRate = field(default_factory=lambda: DecayingRate(0.6))
    regret: DecayingRate = field(default_factory=lambda: DecayingRate(0.7))
    strategy: DecayingRate = field(default_factory=lambda: DecayingRate(0.8))

    @classmethod
    def from_assignment(cls, assignment: ExponentAssignment) -> "LearningRates":
        """
        Rates for one of the two exponent assignments.

        ``TABLE`` gives the utility estimate the slowest-decaying rate (0.6),
        ``ORDERED`` gives it the fastest (0.8) so that the utility rate
        vanishes relative to the other two.

        :param assignment: Exponent assignment
        :returns: The schedules
        """
        if assignment is ExponentAssignment.TABLE:
            return cls(DecayingRate(0.6), DecayingRate(0.7), DecayingRate(0.8))
        return cls(DecayingRate(0.8), DecayingRate(0.7), DecayingRate(0.6))

    @classmethod
    def constant(cls) -> "LearningRates":
        """All rates equal to 1 (full replacement), used for hand checks."""
        return cls(DecayingRate(0.0), DecayingRate(0.0), DecayingRate(0.0))


@dataclass(frozen=True)
class ActionSpace:
    """
    Ordered actions of one cluster.

    Action j sets member ``members[k]`` to transmit power ``powers[j, k]``
    with indicator ``indicators[j, k]``; OFF members carry power 0.
    """

    members: tuple[int, ...]
    powers: NDArray[np.float64]
    indicators: NDArray[np.int_]

    def __post_init__(self) -> None:
        if self.powers.shape != self.indicators.shape:
            raise InvalidArgumentError("powers and indicators must align")
        if self.powers.shape[1] != len(self.members):
            raise InvalidArgumentError("one column per member is required")
        if np.any((self.indicators == 0) & (self.powers != 0)):
            raise InvalidArgumentError("OFF members must carry power 0")

    def __len__(self) -> int:
        return int(self.powers.shape[0])

    def action(self, j: int) -> tuple[tuple[float, int], ...]:
        """Action j as a tuple of (power, indicator) per member."""
        return tuple(
            (float(p), int(i))
            for p, i in zip(self.powers[j], self.indicators[j], strict=True)
        )

    def apply(
        self,
        j: int,
        powers: NDArray[np.float64],
        indicators: NDArray[np.int_],
    ) -> None:
        """Write action j into network-wide power and indicator arrays."""
        idx = list(self.members)
        powers[idx] = self.powers[j]
        indicators[idx] = self.indicators[j]

    @classmethod
    def all_on(
        cls, members: Sequence[int], max_power: ArrayLike
    ) -> "ActionSpace":
        """Single-action space keeping every member ON at full power."""
        members = tuple(sorted(members))
        p = np.asarray(max_power, dtype=float)[list(members)]
        return cls(members, p[np.newaxis, :], np.ones((1, len(members)), int))


def build_action_space(
    members: Sequence[int],
    max_power: ArrayLike,
    controllable: ArrayLike,
    power_levels: int = DEFAULT_POWER_LEVELS,
    max_cluster_size: int = 4,
) -> ActionSpace:
    """
    Enumerate the actions of a cluster.

    Each controllable member may be OFF or ON at one of ``power_levels``
    levels l * P^Max / L; other members are always ON. Clusters larger than
    ``max_cluster_size`` use a single level. Clusters with more than six
    members may switch at most three members OFF at once, and keep at most
    64 actions (fewest OFF members first).

    :param members: Member ids
    :param max_power: P^Max of every base station
    :param controllable: Whether every base station may switch OFF
    :param power_levels: Number of ON power levels L (1, 2 or 4)
    :param max_cluster_size: Size above which only one level is used
    :returns: The action space, in a stable order
    """
    if power_levels not in ALLOWED_POWER_LEVELS:
        raise InvalidArgumentError(
            f"power levels must be one of {ALLOWED_POWER_LEVELS}, "
            f"got {power_levels}"
        )
    members = tuple(sorted(int(b) for b in members))
    p_max = np.asarray(max_power, dtype=float)
    can_sleep = np.asarray(controllable, dtype=bool)
    levels = 1 if len(members) > max_cluster_size else power_levels

    on_options = [
        [(p_max[b] * ell / levels, 1) for ell in range(1, levels + 1)]
        for b in members
    ]
    if len(members) > LARGE_CLUSTER:
        actions = list(
            itertools.islice(
                _fewest_off_first(members, on_options, can_sleep), MAX_ACTIONS
            )
        )
        logger.debug(
            "cluster %s: action space capped at %d", members, len(actions)
        )
    else:
        actions = list(
            itertools.product(
                *(
                    ([(0.0, 0)] if can_sleep[b] else []) + on
                    for b, on in zip(members, on_options, strict=True)
                )
            )
        )

    powers = np.array([[p for p, _ in a] for a in actions], dtype=float)
    indicators = np.array([[i for _, i in a] for a in actions], dtype=int)
    return ActionSpace(members, powers, indicators)


def _fewest_off_first(
    members: tuple[int, ...],
    on_options: list[list[tuple[float, int]]],
    can_sleep: NDArray[np.bool_],
) -> Iterator[tuple[tuple[float, int], ...]]:
    """Actions with at most MAX_OFF_MEMBERS members OFF, by OFF count."""
    sleepers = [k for k, b in enumerate(members) if can_sleep[b]]
    for r in range(MAX_OFF_MEMBERS + 1):
        for off in itertools.combinations(sleepers, r):
            yield from itertools.product(
                *(
                    [(0.0, 0)] if k in off else on
                    for k, on in enumerate(on_options)
                )
            )


@dataclass(frozen=True)
class LearnerState:
    """Estimates and mixed strategy of one cluster."""

    utilities: NDArray[np.float64]
    regrets: NDArray[np.float64]
    strategy: NDArray[np.float64]
    kappa: float = DEFAULT_KAPPA
    last_utility: float = 0.0

    @classmethod
    def initial(cls, n_actions: int, kappa: float = DEFAULT_KAPPA) -> "LearnerState":
        """Zero estimates and a uniform strategy."""
        if n_actions < 1:
            raise InvalidArgumentError("a player needs at least one action")
        if kappa <= 0:
            raise InvalidArgumentError(f"kappa must be positive, got {kappa}")
        return cls(
            np.zeros(n_actions),
            np.zeros(n_actions),
            np.full(n_actions, 1.0 / n_actions),
            kappa,
        )

    @property
    def n_actions(self) -> int:
        return int(self.strategy.size)


def bg_distribution(regrets: ArrayLike, kappa: float) -> NDArray[np.float64]:
    """
    Boltzmann-Gibbs distribution of the positive regrets.

    :param regrets: Regret estimates
    :param kappa: Temperature parameter, > 0
    :returns: exp(kappa * r+) normalized
    """
    if kappa <= 0:
        raise InvalidArgumentError(f"kappa must be positive, got {kappa}")
    positive = np.maximum(np.asarray(regrets, dtype=float), 0.0)
    return np.asarray(softmax(kappa * positive))


def sample_action(strategy: ArrayLike, rng: np.random.Generator) -> int:
    """
    Draw an action index from a mixed strategy by inverse-CDF sampling.

    :param strategy: Probability vector
    :param rng: Random generator
    :returns: Sampled index
    """
    pi = np.asarray(strategy, dtype=float)
    cdf = np.cumsum(pi)
    j = int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))
    last = int(np.flatnonzero(pi > 0)[-1])
    return min(j, last)


def update_learner(
    state: LearnerState,
    played: int,
    utility: float,
    t: int,
    rates: LearningRates,
) -> LearnerState:
    """
    One learning step after playing action ``played`` in slot ``t``.

    The regret update uses the utility estimates and the realized utility of
    the previous slot; the strategy moves towards the Boltzmann-Gibbs
    distribution of the previous regrets.

    :param state: Learner before the update
    :param played: Index of the action played in slot t
    :param utility: Realized utility u(t)
    :param t: Slot index, t >= 1
    :param rates: Learning-rate schedules
    :returns: The updated learner
    """
    if not 0 <= played < state.n_actions:
        raise InvalidArgumentError(f"action index {played} out of range")
    tau, iota, eps = rates.utility(t), rates.regret(t), rates.strategy(t)

    target = bg_distribution(state.regrets, state.kappa)
    regrets = state.regrets + iota * (
        state.utilities - state.last_utility - state.regrets
    )
    utilities = state.utilities.copy()
    utilities[played] += tau * (utility - utilities[played])
    strategy = state.strategy + eps * (target - state.strategy)
    strategy = np.maximum(strategy, 0.0)
    strategy /= strategy.sum()
    return replace(
        state,
        utilities=utilities,
        regrets=regrets,
        strategy=strategy,
        last_utility=float(utility),
    )


def cluster_utility(
    costs: ArrayLike, members: Sequence[int], penalty: float = 0.0
) -> float:
    """
    Utility of a cluster: the negated sum of its members' costs.

    :param costs: Cost of every base station
    :param members: Member ids
    :param penalty: Extra cost charged to the cluster (unserved UEs)
    :returns: -(sum of member costs + penalty)
    """
    values = np.asarray(costs, dtype=float)
    return -float(values[list(members)].sum() + penalty)
