"""
Pass/fail verification suite behind the ``verify`` command.

Each check builds small synthetic instances, measures one quantity and
compares it with a threshold. Rows are returned in a fixed order; a run is
successful when every row passes.
"""

import logging
from collections.abc import Callable
from typing import NamedTuple

import numpy as np
from scipy.linalg import eigvalsh

from .clustering import (
    ClusterSet,
    eigengap_k,
    jacobi_eigh,
    laplacian,
    spectral_cluster,
)
from .coordination import (
    ScheduleProblem,
    assignment_objective,
    round_assignment,
    solve_relaxed,
)
from .diagnostics import (
    TV_TOLERANCE,
    FiniteGame,
    check_derivative_identities,
    check_epsilon_cce,
    check_kappa_monotonicity,
    empirical_vs_stationary,
    expected_system_utility,
    joint_regrets,
    kappa_for_threshold,
    limit_distribution,
    optimal_set,
    stationary_distribution,
    utility_gap,
)
from .similarity import (
    SimilarityParameters,
    build_similarity_graph,
    embedding_similarity,
    signed_embedding,
)

logger = logging.getLogger(__name__)

KAPPA_GRID = (0.1, 0.3, 1.0, 3.0, 10.0, 30.0, 100.0)
DEFAULT_HORIZON = 200_000


class VerificationRow(NamedTuple):
    """One line of the verification table."""

    check: str
    instance: str
    measured: float
    threshold: float
    passed: bool


def random_disc_points(
    n: int, radius: float, rng: np.random.Generator
) -> np.ndarray:
    """Uniform points in a disc centred at the origin."""
    r = radius * np.sqrt(rng.random(n))
    phi = 2.0 * np.pi * rng.random(n)
    return np.column_stack([r * np.cos(phi), r * np.sin(phi)])


def verify_embedding_identity(
    rng: np.random.Generator, instances: int = 100, n_bs: int = 10
) -> VerificationRow:
    """Joint similarity equals the signed-embedding kernel on every edge."""
    worst = 0.0
    for _ in range(instances):
        params = SimilarityParameters(theta=float(rng.random()))
        positions = random_disc_points(n_bs, 500.0, rng)
        loads = rng.random(n_bs)
        graph = build_similarity_graph(positions, loads, params)
        zeta = signed_embedding(positions, loads, params)
        for b, j in zip(*np.nonzero(graph.adjacency), strict=True):
            expected = embedding_similarity(zeta[b], zeta[j])
            worst = max(worst, abs(graph.joint[b, j] - expected) / expected)
    return VerificationRow(
        "similarity-embedding",
        f"{instances} x {n_bs} BS",
        worst,
        1e-12,
        worst < 1e-12,
    )


def brute_force_schedule(costs: np.ndarray) -> float:
    """Optimum of the integer scheduling problem by full enumeration."""
    rows, cols = costs.shape
    grids = np.indices((rows,) * cols).reshape(cols, -1).T
    return float(costs[grids, np.arange(cols)].sum(axis=1).min())


def verify_schedule_optimality(
    rng: np.random.Generator, instances: int = 200
) -> VerificationRow:
    """Rounded relaxed scheduling matches the exhaustive optimum."""
    worst = 0.0
    for _ in range(instances):
        rows = int(rng.integers(1, 5))
        cols = int(rng.integers(1, 9))
        costs = rng.random((rows, cols))
        problem = ScheduleProblem(
            frozenset(range(rows)), tuple(range(rows)), tuple(range(cols)), costs
        )
        rounded = assignment_objective(
            costs, round_assignment(solve_relaxed(problem)).z
        )
        worst = max(worst, abs(rounded - brute_force_schedule(costs)))
    return VerificationRow(
        "schedule-optimality", f"{instances} <= 4x8", worst, 1e-12, worst <= 1e-12
    )


def planted_groups(
    rng: np.random.Generator, sizes: tuple[int, ...] = (3, 3, 4)
) -> tuple[np.ndarray, list[frozenset[int]]]:
    """Tight groups of base stations far beyond the neighbourhood range."""
    centers = [(0.0, 0.0), (1500.0, 0.0), (0.0, 1500.0), (1500.0, 1500.0)]
    positions = []
    groups = []
    start = 0
    for center, size in zip(centers, sizes, strict=False):
        positions.append(random_disc_points(size, 30.0, rng) + center)
        groups.append(frozenset(range(start, start + size)))
        start += size
    return np.vstack(positions), groups


def verify_spectral_recovery(
    rng: np.random.Generator, seeds: int = 50
) -> list[VerificationRow]:
    """Planted three-group geometry: eigengap, recovery and eigenvalues."""
    recovered = 0
    eig_error = 0.0
    params = SimilarityParameters()
    for _ in range(seeds):
        positions, groups = planted_groups(rng)
        loads = np.full(len(positions), 0.5)
        graph = build_similarity_graph(positions, loads, params)
        values, _ = jacobi_eigh(laplacian(graph.joint))
        eig_error = max(
            eig_error,
            float(np.abs(values - eigvalsh(laplacian(graph.joint))).max()),
        )
        clusters: ClusterSet = spectral_cluster(graph.joint, rng)
        if eigengap_k(values) == 3 and set(clusters.clusters) == set(groups):
            recovered += 1
    return [
        VerificationRow(
            "spectral-recovery", f"{seeds} seeds", recovered, seeds, recovered == seeds
        ),
        VerificationRow(
            "jacobi-eigenvalues", "vs scipy eigvalsh", eig_error, 1e-8, eig_error < 1e-8
        ),
    ]


def coordination_game() -> FiniteGame:
    """Two players, two actions, two optimal joint actions with gap 1."""
    return FiniteGame.from_function(
        (2, 2), lambda joint: [0.5, 0.5] if joint[0] == joint[1] else [0.0, 0.0]
    )


def verify_kappa_limit() -> list[VerificationRow]:
    """Mass on the optimal set at large kappa, split evenly."""
    game = coordination_game()
    regrets = joint_regrets(game)
    pi = stationary_distribution(regrets, 1e4)
    best = optimal_set(regrets)
    mass = float(pi[best].sum())
    split = float(np.abs(pi[best] - 0.5).max())
    limit_utility = float(np.sum(limit_distribution(regrets) * game.system_utility))
    threshold = 0.9 * limit_utility - 0.01
    reached = expected_system_utility(game, kappa_for_threshold(game, threshold))
    return [
        VerificationRow("kappa-limit-mass", "|A*| = 2", mass, 0.999, mass >= 0.999),
        VerificationRow("kappa-limit-split", "|A*| = 2", split, 1e-3, split <= 1e-3),
        VerificationRow(
            "finite-kappa-threshold",
            "0.9 x limit utility",
            reached,
            threshold,
            reached > threshold,
        ),
    ]


def random_game(rng: np.random.Generator) -> FiniteGame:
    """Random game with up to 3 players and up to 4 actions each."""
    n_players = int(rng.integers(1, 4))
    counts = tuple(int(rng.integers(1, 5)) for _ in range(n_players))
    return FiniteGame(rng.random((*counts, n_players)))


def verify_kappa_monotonicity(
    rng: np.random.Generator, games: int = 20
) -> list[VerificationRow]:
    """Monotone optimal mass and expected utility; derivative identities."""
    violations = 0
    identity_error = 0.0
    for _ in range(games):
        game = random_game(rng)
        if not check_kappa_monotonicity(game, KAPPA_GRID).holds:
            violations += 1
        for kappa in (0.3, 1.0):
            check = check_derivative_identities(joint_regrets(game), kappa)
            identity_error = max(
                identity_error, check.probability_error, check.variance_error
            )
    return [
        VerificationRow(
            "kappa-monotonicity", f"{games} games", violations, 0, violations == 0
        ),
        VerificationRow(
            "derivative-identities",
            f"{games} games",
            identity_error,
            1e-6,
            identity_error <= 1e-6,
        ),
    ]


def dominant_game() -> FiniteGame:
    """Two players, two actions each, action 0 strictly dominant."""
    return FiniteGame.separable([[0.0, -1.0], [-0.25, -1.25]])


def verify_learning(
    rng: np.random.Generator, horizon: int = DEFAULT_HORIZON, kappa: float = 10.0
) -> list[VerificationRow]:
    """
    Empirical play against the joint Gibbs distribution and against the
    product-form fixed point of the learners, and CCE checks.

    On the dominant-action game the learners settle on the product form,
    which differs from the joint Gibbs distribution; the first row then
    fails and reports the measured distance.
    """
    game = dominant_game()
    report = empirical_vs_stationary(game, kappa, horizon, rng)
    reference = check_epsilon_cce(game, report.stationary, 0.0).worst_deviation
    bound = reference + 2.0 * report.tv_distance * game.utility_range
    learned = check_epsilon_cce(game, report.empirical, bound)
    limit = check_epsilon_cce(game, limit_distribution(joint_regrets(game)), 0.0)
    gap = float(np.max(utility_gap(game, kappa)))
    return [
        VerificationRow(
            "empirical-stationary",
            f"2x2, kappa={kappa:g}, T={horizon}",
            report.tv_distance,
            TV_TOLERANCE,
            report.tv_distance < TV_TOLERANCE,
        ),
        VerificationRow(
            "empirical-product-form",
            f"2x2, kappa={kappa:g}, T={horizon}",
            report.product_tv_distance,
            TV_TOLERANCE,
            report.product_tv_distance < TV_TOLERANCE,
        ),
        VerificationRow(
            "cce-learned", "empirical play", learned.worst_deviation, bound, learned.holds
        ),
        VerificationRow(
            "cce-limit", "dominant actions", limit.worst_deviation, 0.0, limit.holds
        ),
        VerificationRow(
            "utility-gap", f"kappa={kappa:g}", gap, game.utility_range, gap >= 0
        ),
    ]


def run_verification(
    seed: int = 0,
    horizon: int = DEFAULT_HORIZON,
    on_check: Callable[[str], None] | None = None,
) -> list[VerificationRow]:
    """
    Run the full verification suite.

    :param seed: Seed of the random generator shared by all checks
    :param horizon: Slots of the empirical learning check
    :param on_check: Called with the name of each check before it runs
    :returns: Verification rows in a fixed order
    """
    rng = np.random.default_rng(seed)
    checks: list[tuple[str, Callable[[], list[VerificationRow]]]] = [
        ("similarity", lambda: [verify_embedding_identity(rng)]),
        ("scheduling", lambda: [verify_schedule_optimality(rng)]),
        ("spectral", lambda: verify_spectral_recovery(rng)),
        ("kappa-limit", verify_kappa_limit),
        ("kappa-monotonicity", lambda: verify_kappa_monotonicity(rng)),
        ("learning", lambda: verify_learning(rng, horizon)),
    ]
    rows: list[VerificationRow] = []
    for name, check in checks:
        if on_check is not None:
            on_check(name)
        new_rows = check()
        for row in new_rows:
            level = logging.INFO if row.passed else logging.WARNING
            logger.log(level, "%s (%s): %.3e", row.check, row.instance, row.measured)
        rows.extend(new_rows)
    return rows
