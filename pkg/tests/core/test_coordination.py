"""
Tests for intra-cluster scheduling and coordination overhead.
"""

import numpy as np
import pytest
from conftest import cost_matrix_strategy
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import linprog

from pycellsleep.core.coordination import (
    INFEASIBLE_COST,
    ScheduleProblem,
    assignment_objective,
    build_cost_matrix,
    overhead_cost,
    overhead_vector,
    round_assignment,
    schedule_cluster,
    solve_relaxed,
)
from pycellsleep.core.errors import InvalidArgumentError
from pycellsleep.core.verification import brute_force_schedule


def _problem(costs: np.ndarray) -> ScheduleProblem:
    rows, cols = costs.shape
    return ScheduleProblem(
        frozenset(range(rows)), tuple(range(rows)), tuple(range(cols)), costs
    )


def test_two_by_two_example() -> None:
    costs = np.array([[0.2, 0.5], [0.4, 0.1]])
    z = solve_relaxed(_problem(costs))
    assert z.tolist() == [[1.0, 0.0], [0.0, 1.0]]
    assert assignment_objective(costs, z) == pytest.approx(0.3)
    assignment = round_assignment(z)
    assert assignment.server_of() == {0: 0, 1: 1}


def test_equal_costs_split_evenly() -> None:
    costs = np.array([[0.3], [0.3]])
    z = solve_relaxed(_problem(costs))
    assert z[:, 0].tolist() == [0.5, 0.5]
    assert round_assignment(z).server_of() == {0: 0}


def test_single_server_takes_everything() -> None:
    costs = np.array([[0.1, 0.7, 0.3]])
    z = solve_relaxed(_problem(costs))
    assert z.tolist() == [[1.0, 1.0, 1.0]]


def test_round_assignment_maps_ids() -> None:
    z = np.array([[0.0, 1.0], [1.0, 0.0]])
    assignment = round_assignment(z, servers=(4, 9), ues=(12, 30))
    assert assignment.server_of() == {12: 9, 30: 4}
    assert assignment.z.sum(axis=0).tolist() == [1, 1]


@settings(max_examples=200)
@given(cost_matrix_strategy())
def test_rounding_matches_brute_force(costs: np.ndarray) -> None:
    z = round_assignment(solve_relaxed(_problem(costs))).z
    assert z.sum(axis=0).tolist() == [1] * costs.shape[1]
    assert assignment_objective(costs, z) == pytest.approx(
        brute_force_schedule(costs), abs=1e-10
    )


@settings(max_examples=50)
@given(cost_matrix_strategy())
def test_relaxation_matches_linprog(costs: np.ndarray) -> None:
    rows, cols = costs.shape
    # One equality per UE: the column of z sums to one.
    a_eq = np.zeros((cols, rows * cols))
    for m in range(cols):
        a_eq[m, m::cols] = 1.0
    reference = linprog(
        costs.ravel(),
        A_eq=a_eq,
        b_eq=np.ones(cols),
        bounds=(0.0, 1.0),
        method="highs",
    )
    assert reference.success
    z = solve_relaxed(_problem(costs))
    assert assignment_objective(costs, z) == pytest.approx(reference.fun, abs=1e-9)


def test_cost_matrix_marks_unreachable_pairs() -> None:
    rates = np.array([[1e6, 0.0, 2e6], [0.0, 0.0, 0.0], [4e6, 0.0, 1e6]])
    influx = np.full(3, 180e3)
    problem = build_cost_matrix(
        {0, 1, 2}, [0, 1], np.array([1, 0, 1]), rates, influx
    )
    assert problem.servers == (0, 2)
    assert problem.ues == (0, 1)
    assert problem.costs[:, 0] == pytest.approx([0.18, 0.045])
    assert problem.costs[:, 1].tolist() == [INFEASIBLE_COST, INFEASIBLE_COST]


def test_all_off_cluster_has_no_servers() -> None:
    problem = build_cost_matrix(
        {1, 2}, [0, 1], np.array([1, 0, 0]), np.ones((3, 2)), np.ones(2)
    )
    assert problem.is_empty
    assert problem.costs.shape == (0, 2)
    assert (
        schedule_cluster(
            {1, 2}, [0, 1], np.array([1, 0, 0]), np.ones((3, 2)), np.ones(2)
        )
        == {}
    )


def test_schedule_cluster_offloads_to_faster_member() -> None:
    rates = np.array([[1e6, 1e6], [5e6, 0.5e6]])
    servers = schedule_cluster(
        {0, 1}, [0, 1], np.array([1, 1]), rates, np.full(2, 180e3)
    )
    assert servers == {0: 1, 1: 0}


def test_problem_validation() -> None:
    with pytest.raises(InvalidArgumentError):
        ScheduleProblem(frozenset({0}), (0,), (0, 1), np.zeros((1, 3)))
    with pytest.raises(InvalidArgumentError):
        ScheduleProblem(frozenset({0}), (0,), (0,), np.array([[-1.0]]))
    with pytest.raises(InvalidArgumentError):
        ScheduleProblem(frozenset({0}), (5,), (0,), np.zeros((1, 1)))


def test_overhead_cost_values() -> None:
    assert overhead_cost(3, 250.0, 3e-3) == pytest.approx(1.5)
    assert overhead_cost(1, 250.0, 3e-3) == 0.0
    assert overhead_cost(5, 250.0, 0.0) == 0.0
    assert overhead_cost(np.array([1, 2]), 100.0, 0.01) == pytest.approx(
        [0.0, 1.0]
    )
    with pytest.raises(InvalidArgumentError):
        overhead_cost(0, 250.0, 3e-3)


def test_overhead_vector_charges_clustered_members() -> None:
    sizes = np.array([3, 3, 2, 1])
    labels = np.array([0, 0, 1, 2])
    indicators = np.array([1, 0, 1, 1])
    overheads = overhead_vector(sizes, labels, indicators, 250.0, 3e-3)
    assert overheads == pytest.approx([1.5, 1.5, 0.0, 0.0])
    on_only = overhead_vector(
        sizes, labels, indicators, 250.0, 3e-3, on_only=True
    )
    assert on_only == pytest.approx([1.5, 0.0, 0.0, 0.0])


@settings(max_examples=30)
@given(st.integers(min_value=0, max_value=2**32 - 1))
def test_clusters_are_scheduled_independently(seed: int) -> None:
    rng = np.random.default_rng(seed)
    rates = rng.uniform(1e5, 1e7, (6, 8))
    influx = np.full(8, 180e3)
    indicators = np.ones(6, dtype=int)
    first, second = [0, 1, 2], [3, 4, 5]
    first_ues, second_ues = [0, 1, 2, 3], [4, 5, 6, 7]
    expected = schedule_cluster(first, first_ues, indicators, rates, influx)

    other_rates = rates.copy()
    other_rates[3:] = rng.uniform(1e5, 1e7, (3, 8))
    other_indicators = indicators.copy()
    other_indicators[3:] = rng.integers(0, 2, 3)
    schedule_cluster(second, second_ues, other_indicators, other_rates, influx)

    assert schedule_cluster(
        first, first_ues, other_indicators, other_rates, influx
    ) == expected
    assert set(expected) == set(first_ues)
    assert set(expected.values()) <= set(first)


@settings(max_examples=30)
@given(
    st.lists(st.integers(min_value=1, max_value=8), min_size=5, max_size=5),
    st.floats(min_value=0.0, max_value=1e-2),
    st.floats(min_value=0.0, max_value=10.0),
    st.floats(min_value=0.0, max_value=500.0),
)
def test_overhead_is_linear_in_chi(
    sizes: list[int], chi: float, factor: float, neighborhood_range: float
) -> None:
    labels = np.array([0, 0, 1, 2, 2])
    indicators = np.array([1, 0, 1, 1, 1])
    neighborhood_sizes = np.array(sizes)
    base = overhead_vector(
        neighborhood_sizes, labels, indicators, neighborhood_range, chi
    )
    scaled = overhead_vector(
        neighborhood_sizes, labels, indicators, neighborhood_range, factor * chi
    )
    assert scaled == pytest.approx(factor * base, rel=1e-12, abs=1e-15)
    assert base[2] == 0.0
    assert np.all(base >= 0.0)
    per_bs = overhead_vector(
        neighborhood_sizes,
        labels,
        indicators,
        neighborhood_range,
        np.array([chi, 0.0, chi, chi, 2.0 * chi]),
    )
    assert per_bs[1] == 0.0
    assert per_bs[4] == pytest.approx(2.0 * base[4], rel=1e-12, abs=1e-15)
