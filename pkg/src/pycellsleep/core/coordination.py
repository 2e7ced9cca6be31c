"""
Intra-cluster UE scheduling and coordination overhead.

Within a cluster, the UEs anchored to any member may be offloaded to any ON
member. The assignment minimizing the total estimated load is an integer
program whose constraints (one server per UE) decouple per UE, so its linear
relaxation is solved in closed form: every UE puts its whole mass on its
cheapest server, ties split equally. Rounding then takes the per-UE argmax.

Clustered base stations pay a coordination overhead proportional to the
number of neighbours they talk to.
"""

import logging
from collections.abc import Collection, Sequence
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import InvalidArgumentError

logger = logging.getLogger(__name__)

# Marks a (base station, UE) pair that cannot be served.
INFEASIBLE_COST = 1e3

_TIE_TOLERANCE = 1e-12


@dataclass(frozen=True)
class ScheduleProblem:
    """
    Scheduling problem of one cluster.

    Rows of ``costs`` are the ON members in ``servers`` order, columns the
    anchored UEs in ``ues`` order.
    """

    cluster: frozenset[int]
    servers: tuple[int, ...]
    ues: tuple[int, ...]
    costs: NDArray[np.float64]

    def __post_init__(self) -> None:
        if self.costs.shape != (len(self.servers), len(self.ues)):
            raise InvalidArgumentError(
                f"cost matrix shape {self.costs.shape} does not match "
                f"{len(self.servers)} server(s) x {len(self.ues)} UE(s)"
            )
        if np.any(self.costs < 0):
            raise InvalidArgumentError("scheduling costs must be non-negative")
        if not set(self.servers) <= self.cluster:
            raise InvalidArgumentError("servers must be cluster members")

    @property
    def is_empty(self) -> bool:
        """True when no member is ON (all anchored UEs are unserved)."""
        return len(self.servers) == 0


@dataclass(frozen=True)
class Assignment:
    """Binary assignment of UEs (columns) to servers (rows)."""

    z: NDArray[np.int_]
    servers: tuple[int, ...]
    ues: tuple[int, ...]

    def server_of(self) -> dict[int, int]:
        """Map from UE id to its serving base-station id."""
        rows = np.argmax(self.z, axis=0)
        return {ue: self.servers[int(r)] for ue, r in zip(self.ues, rows)}


def build_cost_matrix(
    cluster: Collection[int],
    anchored_ues: Sequence[int],
    indicators: ArrayLike,
    rates: NDArray[np.float64],
    traffic_influx: NDArray[np.float64],
) -> ScheduleProblem:
    """
    Estimated per-pair loads eta_m / R_b(x_m) inside one cluster.

    :param cluster: Member ids of the cluster
    :param anchored_ues: UEs anchored to any member
    :param indicators: ON/OFF indicator of every base station
    :param rates: Rate matrix under the current action, shape (|B|, |M|),
        computed with intra-cluster interference excluded
    :param traffic_influx: Influx of every UE in bits/s
    :returns: The problem; it has no rows when every member is OFF
    """
    members = frozenset(int(b) for b in cluster)
    on = np.asarray(indicators)
    servers = tuple(b for b in sorted(members) if on[b] == 1)
    ues = tuple(int(m) for m in anchored_ues)
    if not servers or not ues:
        return ScheduleProblem(
            members, servers, ues, np.zeros((len(servers), len(ues)))
        )
    sub_rates = rates[np.ix_(servers, ues)]
    feasible = sub_rates > 0
    costs = np.where(
        feasible,
        traffic_influx[list(ues)][np.newaxis, :]
        / np.where(feasible, sub_rates, 1.0),
        INFEASIBLE_COST,
    )
    return ScheduleProblem(members, servers, ues, costs)


def solve_relaxed(problem: ScheduleProblem) -> NDArray[np.float64]:
    """
    Optimal solution of the relaxed scheduling LP.

    min sum(costs * z) s.t. every column of z sums to 1 and 0 <= z <= 1.
    The constraints decouple per UE, so each column puts its mass on its
    minimum-cost rows, split equally among ties.

    :param problem: Scheduling problem
    :returns: Fractional z with the shape of ``problem.costs``
    """
    costs = problem.costs
    if costs.size == 0:
        return np.zeros_like(costs)
    best = costs.min(axis=0)
    ties = np.isclose(costs, best[np.newaxis, :], rtol=0.0, atol=_TIE_TOLERANCE)
    return np.asarray(ties / ties.sum(axis=0, keepdims=True))


def round_assignment(
    z_relaxed: ArrayLike,
    servers: Sequence[int] = (),
    ues: Sequence[int] = (),
) -> Assignment:
    """
    Round a fractional assignment to the per-UE argmax, ties to the lowest id.

    :param z_relaxed: Fractional assignment with unit column sums
    :param servers: Server ids of the rows (defaults to 0..rows-1)
    :param ues: UE ids of the columns (defaults to 0..cols-1)
    :returns: Binary assignment with exactly one server per UE
    """
    z = np.asarray(z_relaxed, dtype=float)
    rows, cols = z.shape
    servers = tuple(servers) or tuple(range(rows))
    ues = tuple(ues) or tuple(range(cols))
    binary = np.zeros((rows, cols), dtype=int)
    if rows and cols:
        binary[np.argmax(z, axis=0), np.arange(cols)] = 1
    return Assignment(binary, servers, ues)


def assignment_objective(costs: ArrayLike, z: ArrayLike) -> float:
    """Total estimated load sum(costs * z)."""
    return float(np.sum(np.asarray(costs) * np.asarray(z)))


def schedule_cluster(
    cluster: Collection[int],
    anchored_ues: Sequence[int],
    indicators: ArrayLike,
    rates: NDArray[np.float64],
    traffic_influx: NDArray[np.float64],
) -> dict[int, int]:
    """
    Schedule the anchored UEs of one cluster.

    :returns: Map from UE id to serving base station; UEs of a cluster whose
        members are all OFF are absent (unserved)
    """
    problem = build_cost_matrix(
        cluster, anchored_ues, indicators, rates, traffic_influx
    )
    if problem.is_empty or not problem.ues:
        return {}
    assignment = round_assignment(
        solve_relaxed(problem), problem.servers, problem.ues
    )
    logger.debug(
        "cluster %s: assignment %s", sorted(problem.cluster), assignment.server_of()
    )
    return assignment.server_of()


def overhead_cost(
    neighborhood_size: int | ArrayLike,
    neighborhood_range: float,
    chi: float | ArrayLike,
) -> float | NDArray[np.float64]:
    """
    Coordination overhead delta P^Base = chi * (|N_b| - 1) * epsilon_d.

    :param neighborhood_size: Self-inclusive neighbourhood size |N_b| (>= 1)
    :param neighborhood_range: epsilon_d in metres
    :param chi: Overhead per metre in W/m, scalar or per base station
    :returns: Overhead in watts (array for array input)
    :raises InvalidArgumentError: If a neighbourhood size is below 1
    """
    sizes = np.asarray(neighborhood_size, dtype=float)
    if np.any(sizes < 1):
        raise InvalidArgumentError("neighbourhood size must be >= 1")
    result = np.asarray(chi, dtype=float) * (sizes - 1.0) * neighborhood_range
    return float(result) if result.ndim == 0 else np.asarray(result)


def overhead_vector(
    neighborhood_sizes: NDArray[np.int_],
    cluster_labels: NDArray[np.int_],
    indicators: NDArray[np.int_],
    neighborhood_range: float,
    chi: float | ArrayLike,
    on_only: bool = False,
) -> NDArray[np.float64]:
    """
    Overhead charged to every base station in the current slot.

    Only members of clusters with at least two members pay; with
    ``on_only`` set, OFF members are exempt.

    :param neighborhood_sizes: |N_b| per base station
    :param cluster_labels: Cluster index per base station
    :param indicators: ON/OFF indicator per base station
    :param neighborhood_range: epsilon_d in metres
    :param chi: Overhead per metre in W/m, scalar or per base station
    :param on_only: Charge ON members only
    :returns: Overhead per base station in watts
    """
    sizes = np.bincount(cluster_labels)[cluster_labels]
    charged = sizes >= 2
    if on_only:
        charged &= indicators == 1
    per_bs = np.asarray(
        overhead_cost(neighborhood_sizes, neighborhood_range, chi), dtype=float
    )
    return np.where(charged, per_bs, 0.0)
