"""
Equilibrium diagnostics on small finite games.

The functions here work on exact ensemble quantities computed from a full
utility tensor: the Gibbs stationary distribution over joint actions, its
limit as the temperature parameter grows, monotonicity in kappa, the
epsilon-coarse-correlated-equilibrium check, and a Monte-Carlo comparison
between learners playing the game and their stationary distribution.
"""

import itertools
import logging
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.optimize import brentq
from scipy.special import softmax

from .errors import InvalidArgumentError, NumericalFailureError
from .learning import (
    LearnerState,
    LearningRates,
    bg_distribution,
    sample_action,
    update_learner,
)

logger = logging.getLogger(__name__)

MAX_JOINT_ACTIONS = 4096

# Regrets within this distance of the maximum count as optimal.
OPTIMUM_TOLERANCE = 1e-12

# Total-variation distance under which play matches a reference.
TV_TOLERANCE = 0.05


@dataclass(frozen=True)
class FiniteGame:
    """
    A finite game given by its full utility tensor.

    ``utilities[a_1, ..., a_n, i]`` is the utility of player i under the
    joint action (a_1, ..., a_n).
    """

    utilities: NDArray[np.float64]

    def __post_init__(self) -> None:
        u = self.utilities
        if u.ndim < 2 or u.shape[-1] != u.ndim - 1:
            raise InvalidArgumentError(
                "utility tensor must have shape (*action_counts, n_players)"
            )
        if int(np.prod(u.shape[:-1])) > MAX_JOINT_ACTIONS:
            raise InvalidArgumentError(
                f"at most {MAX_JOINT_ACTIONS} joint actions are supported"
            )
        if not np.all(np.isfinite(u)):
            raise InvalidArgumentError("utilities must be finite")

    @classmethod
    def from_function(
        cls,
        action_counts: tuple[int, ...],
        payoff: Callable[[tuple[int, ...]], ArrayLike],
    ) -> "FiniteGame":
        """Tabulate ``payoff(joint_action) -> utilities per player``."""
        u = np.zeros((*action_counts, len(action_counts)))
        for joint in itertools.product(*(range(n) for n in action_counts)):
            u[joint] = payoff(joint)
        return cls(u)

    @classmethod
    def separable(cls, own_utilities: list[ArrayLike]) -> "FiniteGame":
        """Game in which each player's utility depends on its own action."""
        tables = [np.asarray(u, dtype=float) for u in own_utilities]
        counts = tuple(t.size for t in tables)
        return cls.from_function(
            counts, lambda joint: [t[a] for t, a in zip(tables, joint)]
        )

    @property
    def n_players(self) -> int:
        return int(self.utilities.shape[-1])

    @property
    def action_counts(self) -> tuple[int, ...]:
        return tuple(int(n) for n in self.utilities.shape[:-1])

    @property
    def system_utility(self) -> NDArray[np.float64]:
        """Sum of all players' utilities for every joint action."""
        return np.asarray(self.utilities.sum(axis=-1))

    @property
    def utility_range(self) -> float:
        return float(self.utilities.max() - self.utilities.min())


def joint_regrets(
    game: FiniteGame, reference: ArrayLike | None = None
) -> NDArray[np.float64]:
    """
    Ensemble regret of every joint action: system utility minus a reference.

    The reference (the uniform average by default) shifts all regrets
    equally and leaves the Gibbs distribution unchanged.

    :param game: Finite game
    :param reference: Joint distribution whose expected system utility is
        subtracted
    :returns: Regrets with shape ``game.action_counts``
    """
    total = game.system_utility
    weights = (
        np.full(total.shape, 1.0 / total.size)
        if reference is None
        else np.asarray(reference, dtype=float)
    )
    return np.asarray(total - np.sum(weights * total))


def stationary_distribution(regrets: ArrayLike, kappa: float) -> NDArray[np.float64]:
    """
    Gibbs distribution exp(kappa * regret) over joint actions.

    :param regrets: Regret of every joint action (any shape)
    :param kappa: Temperature parameter, > 0
    :returns: Probabilities with the shape of ``regrets``
    """
    if kappa <= 0:
        raise InvalidArgumentError(f"kappa must be positive, got {kappa}")
    r = np.asarray(regrets, dtype=float)
    return np.asarray(softmax(kappa * r.ravel()).reshape(r.shape))


def optimal_set(regrets: ArrayLike) -> NDArray[np.bool_]:
    """Mask of the joint actions with maximal regret."""
    r = np.asarray(regrets, dtype=float)
    return np.asarray(r >= r.max() - OPTIMUM_TOLERANCE)


def limit_distribution(regrets: ArrayLike) -> NDArray[np.float64]:
    """Limit of the Gibbs distribution as kappa grows: uniform on the optima."""
    best = optimal_set(regrets)
    return np.asarray(best / best.sum())


@dataclass(frozen=True)
class MonotonicityReport:
    """Outcome of a kappa-monotonicity check."""

    kappas: tuple[float, ...]
    optimum_mass: tuple[float, ...]
    expected_utility: tuple[float, ...]
    violation: tuple[str, float, float] | None = None

    @property
    def holds(self) -> bool:
        return self.violation is None


def check_kappa_monotonicity(
    game: FiniteGame,
    kappas: ArrayLike,
    tolerance: float = 1e-12,
) -> MonotonicityReport:
    """
    Check that optimal-action probabilities and the expected system utility
    do not decrease along an ascending kappa grid.

    :param game: Finite game
    :param kappas: Ascending grid with at least three points
    :param tolerance: Allowed numerical decrease
    :returns: Report with the first violation, if any
    """
    grid = np.asarray(kappas, dtype=float)
    if grid.size < 3 or np.any(np.diff(grid) <= 0):
        raise InvalidArgumentError("kappa grid must be ascending with >= 3 points")
    regrets = joint_regrets(game)
    best = optimal_set(regrets)
    total = game.system_utility

    masses: list[NDArray[np.float64]] = []
    expected: list[float] = []
    for kappa in grid:
        pi = stationary_distribution(regrets, kappa)
        masses.append(pi[best])
        expected.append(float(np.sum(pi * total)))

    violation = None
    for k in range(1, grid.size):
        if np.any(masses[k] < masses[k - 1] - tolerance):
            violation = ("optimum-mass", float(grid[k - 1]), float(grid[k]))
            break
        if expected[k] < expected[k - 1] - tolerance:
            violation = ("expected-utility", float(grid[k - 1]), float(grid[k]))
            break
    if violation is not None:
        logger.warning("kappa monotonicity violated: %s", violation)
    return MonotonicityReport(
        tuple(grid.tolist()),
        tuple(float(m.sum()) for m in masses),
        tuple(expected),
        violation,
    )


def expected_system_utility(game: FiniteGame, kappa: float) -> float:
    """E[system utility] under the Gibbs distribution at ``kappa``."""
    pi = stationary_distribution(joint_regrets(game), kappa)
    return float(np.sum(pi * game.system_utility))


def kappa_for_threshold(
    game: FiniteGame,
    threshold: float,
    kappa_low: float = 1e-6,
    kappa_high: float = 1e6,
) -> float:
    """
    Smallest kappa (to bracketing precision) with expected system utility
    strictly above ``threshold``.

    :param game: Finite game
    :param threshold: Target below the limit expected utility
    :param kappa_low: Lower end of the search bracket
    :param kappa_high: Upper end of the search bracket
    :returns: A finite kappa meeting the threshold
    :raises InvalidArgumentError: If the threshold is not reachable inside
        the bracket
    """

    def gap(kappa: float) -> float:
        return expected_system_utility(game, kappa) - threshold

    if gap(kappa_low) > 0:
        return kappa_low
    if gap(kappa_high) <= 0:
        raise InvalidArgumentError(
            f"threshold {threshold} not reached for kappa <= {kappa_high}"
        )
    kappa = float(brentq(gap, kappa_low, kappa_high, xtol=1e-12))
    while gap(kappa) <= 0:
        kappa *= 1.0 + 1e-6
    return kappa


@dataclass(frozen=True)
class IdentityCheck:
    """Relative errors of the two kappa-derivative identities."""

    probability_error: float
    variance_error: float

    def holds(self, tolerance: float = 1e-6) -> bool:
        return max(self.probability_error, self.variance_error) <= tolerance


def check_derivative_identities(
    regrets: ArrayLike, kappa: float, step: float = 1e-4
) -> IdentityCheck:
    """
    Compare central finite differences in kappa with the closed forms
    d pi_a / d kappa = pi_a (r_a - E[r]) and d E[r] / d kappa = Var[r].

    Errors are relative to the largest magnitude of the closed form.

    :param regrets: Regret of every joint action
    :param kappa: Point of evaluation (> step)
    :param step: Finite-difference step
    :returns: Relative errors of both identities
    """
    r = np.asarray(regrets, dtype=float).ravel()
    pi = stationary_distribution(r, kappa)
    mean = float(pi @ r)
    variance = float(pi @ (r - mean) ** 2)
    analytic = pi * (r - mean)

    upper = stationary_distribution(r, kappa + step)
    lower = stationary_distribution(r, kappa - step)
    numeric = (upper - lower) / (2.0 * step)
    numeric_mean = float((upper @ r - lower @ r) / (2.0 * step))

    scale = max(float(np.abs(analytic).max()), np.finfo(float).tiny)
    probability_error = float(np.abs(numeric - analytic).max() / scale)
    variance_error = abs(numeric_mean - variance) / max(
        variance, np.finfo(float).tiny
    )
    if variance == 0.0 and numeric_mean == 0.0:
        variance_error = 0.0
    if not np.any(analytic) and not np.any(numeric):
        probability_error = 0.0
    return IdentityCheck(probability_error, variance_error)


@dataclass(frozen=True)
class CCEReport:
    """Worst unilateral deviation gain against a joint distribution."""

    holds: bool
    worst_deviation: float
    per_player: tuple[float, ...]


def deviation_gains(game: FiniteGame, joint: ArrayLike) -> list[NDArray[np.float64]]:
    """
    Gain of every fixed deviation of every player against ``joint``.

    :param game: Finite game
    :param joint: Distribution over joint actions, shape ``action_counts``
    :returns: Per player, the gain of each of its actions
    """
    pi = np.asarray(joint, dtype=float)
    if pi.shape != game.action_counts:
        raise InvalidArgumentError("joint distribution shape mismatch")
    gains = []
    for i in range(game.n_players):
        u_i = np.moveaxis(game.utilities[..., i], i, 0)
        others = pi.sum(axis=i)
        deviation = np.tensordot(u_i, others, axes=others.ndim)
        current = float(np.sum(game.utilities[..., i] * pi))
        gains.append(np.asarray(deviation - current))
    return gains


def check_epsilon_cce(
    game: FiniteGame, joint: ArrayLike, epsilon: float
) -> CCEReport:
    """
    Whether ``joint`` is an epsilon-coarse correlated equilibrium.

    :param game: Finite game
    :param joint: Distribution over joint actions
    :param epsilon: Allowed deviation gain, >= 0
    :returns: Report with the worst deviation gain
    """
    if epsilon < 0:
        raise InvalidArgumentError("epsilon must be non-negative")
    per_player = tuple(float(g.max()) for g in deviation_gains(game, joint))
    worst = max(per_player)
    return CCEReport(worst <= epsilon + 1e-12, worst, per_player)


def utility_gap(game: FiniteGame, kappa: float) -> NDArray[np.float64]:
    """
    Per-player expected-utility gap between the kappa limit and kappa.

    :param game: Finite game
    :param kappa: Temperature parameter
    :returns: E_limit[U_i] - E_kappa[U_i] for every player
    """
    regrets = joint_regrets(game)
    limit = limit_distribution(regrets)
    finite = stationary_distribution(regrets, kappa)
    axes = tuple(range(game.n_players))
    return np.asarray(
        np.sum(game.utilities * (limit - finite)[..., np.newaxis], axis=axes)
    )


def _product(marginals: list[NDArray[np.float64]]) -> NDArray[np.float64]:
    joint = marginals[0]
    for m in marginals[1:]:
        joint = np.multiply.outer(joint, m)
    return np.asarray(joint)


def learned_stationary_distribution(
    game: FiniteGame,
    kappa: float,
    damping: float = 0.2,
    tol: float = 1e-13,
    max_iters: int = 100_000,
) -> NDArray[np.float64]:
    """
    Product-form fixed point of the learning dynamics.

    Each player's strategy equals the Boltzmann-Gibbs distribution of its
    positive ensemble regrets U_i(j, pi_-i) - E_pi[u_i]. The fixed point is
    found by damped iteration.

    :param game: Finite game
    :param kappa: Temperature parameter
    :param damping: Step of the damped iteration, in (0, 1]
    :param tol: Convergence threshold on the max strategy change
    :param max_iters: Iteration limit
    :returns: Joint distribution (product of the marginals)
    :raises NumericalFailureError: If the iteration does not converge
    """
    marginals = [np.full(n, 1.0 / n) for n in game.action_counts]
    change = np.inf
    for iteration in range(1, max_iters + 1):
        joint = _product(marginals)
        gains = deviation_gains(game, joint)
        change = 0.0
        for i, regret in enumerate(gains):
            target = bg_distribution(regret, kappa)
            updated = (1.0 - damping) * marginals[i] + damping * target
            change = max(change, float(np.abs(updated - marginals[i]).max()))
            marginals[i] = updated / updated.sum()
        if change < tol:
            logger.debug("learned fixed point after %d iterations", iteration)
            return _product(marginals)
    raise NumericalFailureError(
        "learned stationary distribution did not converge", change, max_iters
    )


def total_variation(p: ArrayLike, q: ArrayLike) -> float:
    """Total-variation distance between two distributions."""
    return 0.5 * float(np.abs(np.asarray(p) - np.asarray(q)).sum())


@dataclass(frozen=True)
class EmpiricalReport:
    """
    Empirical joint-action frequencies against two references.

    ``tv_distance`` is measured against the Gibbs distribution of the joint
    regrets; ``product_tv_distance`` against the product-form fixed point of
    the per-player learners. A large gap between the two is the failure of
    the product form on that game.
    """

    tv_distance: float
    empirical: NDArray[np.float64]
    stationary: NDArray[np.float64]
    horizon: int
    strategies: tuple[NDArray[np.float64], ...] = field(default=())
    product_form: NDArray[np.float64] | None = None
    product_tv_distance: float = float("nan")


def empirical_vs_stationary(
    game: FiniteGame,
    kappa: float,
    horizon: int,
    rng: np.random.Generator,
    rates: LearningRates | None = None,
) -> EmpiricalReport:
    """
    Let one learner per player play the game and compare the joint-action
    frequencies of the second half of the run with the Gibbs stationary
    distribution of the joint regrets, and with the learned product form.

    :param game: Finite game with history-independent utilities
    :param kappa: Temperature parameter of the learners
    :param horizon: Number of slots T
    :param rng: Random generator
    :param rates: Learning-rate schedules (default exponents if None)
    :returns: Report with both total-variation distances
    """
    if horizon < 2:
        raise InvalidArgumentError("horizon must be >= 2")
    rates = rates or LearningRates()
    learners = [LearnerState.initial(n, kappa) for n in game.action_counts]
    counts = np.zeros(game.action_counts)
    start = horizon - horizon // 2
    for t in range(1, horizon + 1):
        joint = tuple(sample_action(s.strategy, rng) for s in learners)
        payoff = game.utilities[joint]
        learners = [
            update_learner(s, a, float(payoff[i]), t, rates)
            for i, (s, a) in enumerate(zip(learners, joint, strict=True))
        ]
        if t > start:
            counts[joint] += 1
    empirical = counts / counts.sum()
    stationary = stationary_distribution(joint_regrets(game), kappa)
    tv = total_variation(empirical, stationary)
    product = learned_stationary_distribution(game, kappa)
    product_tv = total_variation(empirical, product)
    logger.info(
        "empirical vs stationary: TV = %.4f (product form %.4f) over %d slots",
        tv,
        product_tv,
        horizon,
    )
    if tv > TV_TOLERANCE >= product_tv:
        logger.warning(
            "play matches the product form but not the joint Gibbs "
            "distribution (TV %.4f)",
            tv,
        )
    return EmpiricalReport(
        tv,
        empirical,
        stationary,
        horizon,
        tuple(s.strategy for s in learners),
        product,
        product_tv,
    )
