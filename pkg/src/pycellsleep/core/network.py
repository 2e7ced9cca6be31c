"""
Physical model of a small-cell downlink network.

This module holds the static scenario description (base stations, users and
channel constants), the per-slot base-station state, and the functions that
turn them into channel gains, user data rates, fractional transfer times
(time loads), power consumption and cost.

Scalar functions follow the per-base-station formulas directly; the
``*_matrix``/``*_vector`` variants evaluate the same formulas for every base
station and user at once and are what the simulator uses.
"""

import math
from collections.abc import Collection, Sequence
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import InvalidGeometryError, InvalidStateError

PATH_LOSS_SLOPE_DB = 37.6

# Rates below this are treated as "cannot serve".
MIN_RATE_BPS = 1e-9


class BSKind(Enum):
    MBS = "mbs"
    SBS = "sbs"


PATH_LOSS_INTERCEPT_DB = {BSKind.MBS: 128.1, BSKind.SBS: 140.7}


def dbm_to_watts(dbm: float) -> float:
    """
    Convert a power level from dBm to watts.

    :param dbm: Power in dBm
    :returns: Power in watts, 10^((dBm - 30) / 10)
    """
    return float(10.0 ** ((dbm - 30.0) / 10.0))


def watts_to_dbm(watts: float) -> float:
    """
    Convert a power level from watts to dBm.

    :param watts: Positive power in watts
    :returns: Power in dBm
    """
    return float(10.0 * math.log10(watts) + 30.0)


@dataclass(frozen=True)
class BaseStationSpec:
    """Static description of one base station."""

    id: int
    kind: BSKind
    position: tuple[float, float]
    max_power: float
    base_power: float
    amplifier_efficiency: float
    sleep_fraction: float
    overhead_sensitivity: float = 0.0

    def __post_init__(self) -> None:
        if not 0.0 < self.amplifier_efficiency < 1.0:
            raise ValueError(
                f"BS {self.id}: amplifier efficiency must lie in (0, 1), "
                f"got {self.amplifier_efficiency}"
            )
        if not 0.0 < self.sleep_fraction < 1.0:
            raise ValueError(
                f"BS {self.id}: sleep fraction must lie in (0, 1), "
                f"got {self.sleep_fraction}"
            )
        if self.max_power <= 0 or self.base_power <= 0:
            raise ValueError(
                f"BS {self.id}: maximum and base power must be positive"
            )
        if self.overhead_sensitivity < 0:
            raise ValueError(
                f"BS {self.id}: overhead sensitivity must be non-negative"
            )

    @property
    def full_load_power(self) -> float:
        """Power drawn when ON at full load and maximum power.

        This is the normalization used by the cost function.

        :returns: P^Max / efficiency + P^Base in watts
        """
        return self.max_power / self.amplifier_efficiency + self.base_power


@dataclass(frozen=True)
class UserSpec:
    """Static description of one user equipment (UE)."""

    id: int
    position: tuple[float, float]
    traffic_influx: float

    def __post_init__(self) -> None:
        if self.traffic_influx <= 0:
            raise ValueError(
                f"UE {self.id}: traffic influx must be positive, "
                f"got {self.traffic_influx}"
            )


@dataclass(frozen=True)
class NetworkScenario:
    """
    Static network description: base stations, users and channel constants.

    Base-station and user ids must equal their position in ``bs_list`` and
    ``ue_list``; every array exposed by the scenario is indexed by id.
    """

    bs_list: tuple[BaseStationSpec, ...]
    ue_list: tuple[UserSpec, ...]
    bandwidth: float = 10e6
    noise_density_dbm_hz: float = -174.0
    load_exponent: float = 1.0
    energy_weight: float = 0.5
    load_weight: float = 0.5
    preferred_load: float = 0.5
    cluster_update_interval: int = 100
    rng_seed: int = 0
    carrier_frequency: float = 2e9
    mbs_controllable: bool = False

    def __post_init__(self) -> None:
        if [bs.id for bs in self.bs_list] != list(range(len(self.bs_list))):
            raise ValueError("base-station ids must be 0, 1, ..., |B|-1")
        if [ue.id for ue in self.ue_list] != list(range(len(self.ue_list))):
            raise ValueError("UE ids must be 0, 1, ..., |M|-1")
        if not self.bs_list:
            raise ValueError("a scenario needs at least one base station")
        if self.energy_weight < 0 or self.load_weight < 0:
            raise ValueError("cost weights must be non-negative")
        if self.energy_weight + self.load_weight <= 0:
            raise ValueError("at least one cost weight must be positive")
        if not 0.0 <= self.preferred_load <= 1.0:
            raise ValueError("preferred load must lie in [0, 1]")
        if self.cluster_update_interval < 1:
            raise ValueError("cluster update interval must be >= 1 slot")
        if self.bandwidth <= 0:
            raise ValueError("bandwidth must be positive")

    @property
    def n_bs(self) -> int:
        return len(self.bs_list)

    @property
    def n_ue(self) -> int:
        return len(self.ue_list)

    @property
    def noise_power(self) -> float:
        """Total noise power N0 * bandwidth in watts."""
        return dbm_to_watts(self.noise_density_dbm_hz) * self.bandwidth

    @cached_property
    def bs_positions(self) -> NDArray[np.float64]:
        return np.array([bs.position for bs in self.bs_list], dtype=float)

    @cached_property
    def ue_positions(self) -> NDArray[np.float64]:
        return np.array(
            [ue.position for ue in self.ue_list], dtype=float
        ).reshape(-1, 2)

    @cached_property
    def kinds(self) -> tuple[BSKind, ...]:
        return tuple(bs.kind for bs in self.bs_list)

    @cached_property
    def is_macro(self) -> NDArray[np.bool_]:
        return np.array([bs.kind is BSKind.MBS for bs in self.bs_list])

    @cached_property
    def controllable(self) -> NDArray[np.bool_]:
        """Mask of base stations allowed to switch OFF."""
        if self.mbs_controllable:
            return np.ones(self.n_bs, dtype=bool)
        return ~self.is_macro

    @cached_property
    def max_power(self) -> NDArray[np.float64]:
        return np.array([bs.max_power for bs in self.bs_list])

    @cached_property
    def base_power(self) -> NDArray[np.float64]:
        return np.array([bs.base_power for bs in self.bs_list])

    @cached_property
    def amplifier_efficiency(self) -> NDArray[np.float64]:
        return np.array([bs.amplifier_efficiency for bs in self.bs_list])

    @cached_property
    def sleep_fraction(self) -> NDArray[np.float64]:
        return np.array([bs.sleep_fraction for bs in self.bs_list])

    @cached_property
    def overhead_sensitivity(self) -> NDArray[np.float64]:
        return np.array([bs.overhead_sensitivity for bs in self.bs_list])

    @cached_property
    def full_load_power(self) -> NDArray[np.float64]:
        return np.array([bs.full_load_power for bs in self.bs_list])

    @cached_property
    def traffic_influx(self) -> NDArray[np.float64]:
        return np.array([ue.traffic_influx for ue in self.ue_list])

    @cached_property
    def distances(self) -> NDArray[np.float64]:
        """BS-to-UE distances in metres, shape (|B|, |M|)."""
        delta = (
            self.bs_positions[:, np.newaxis, :]
            - self.ue_positions[np.newaxis, :, :]
        )
        return np.asarray(np.hypot(delta[..., 0], delta[..., 1]))

    @cached_property
    def gains(self) -> NDArray[np.float64]:
        """Linear channel gains h_b(x), shape (|B|, |M|)."""
        return gain_matrix(self.kinds, self.distances)


@dataclass(frozen=True)
class BaseStationState:
    """Dynamic state of one base station during a slot."""

    power: float
    indicator: int
    load: float = 0.0
    load_estimate: float = 0.0
    served_ues: frozenset[int] = field(default_factory=frozenset)
    overload: bool = False

    def __post_init__(self) -> None:
        if self.indicator not in (0, 1):
            raise ValueError("indicator must be 0 or 1")
        if self.power < 0:
            raise ValueError("transmit power must be non-negative")
        if not 0.0 <= self.load <= 1.0:
            raise ValueError("stored load must be clamped to [0, 1]")
        if self.indicator == 0 and self.served_ues:
            raise InvalidStateError("an OFF base station cannot serve UEs")


def path_loss(kind: BSKind, distance: float) -> float:
    """
    Path loss between a base station and a UE.

    :param kind: Base-station kind (MBS or SBS)
    :param distance: Distance in metres
    :returns: Attenuation in dB, intercept + 37.6 log10(d_km)
    :raises InvalidGeometryError: If the distance is not positive
    """
    if not distance > 0:
        raise InvalidGeometryError(
            f"distance must be positive, got {distance}"
        )
    return PATH_LOSS_INTERCEPT_DB[kind] + PATH_LOSS_SLOPE_DB * math.log10(
        distance / 1000.0
    )


def channel_gain(kind: BSKind, distance: float) -> float:
    """
    Linear channel gain h = 10^(-PL/10).

    :param kind: Base-station kind
    :param distance: Distance in metres
    :returns: Linear gain
    """
    return float(10.0 ** (-path_loss(kind, distance) / 10.0))


def gain_matrix(
    kinds: Sequence[BSKind], distances: NDArray[np.float64]
) -> NDArray[np.float64]:
    """
    Linear channel gains for every (BS, UE) pair.

    :param kinds: Kind of each base station (row of ``distances``)
    :param distances: Distances in metres, shape (|B|, |M|)
    :returns: Gains with the same shape as ``distances``
    :raises InvalidGeometryError: If any distance is not positive
    """
    if distances.size and not np.all(distances > 0):
        raise InvalidGeometryError("all BS-UE distances must be positive")
    intercept = np.array([PATH_LOSS_INTERCEPT_DB[k] for k in kinds])
    loss_db = intercept[:, np.newaxis] + PATH_LOSS_SLOPE_DB * np.log10(
        distances / 1000.0
    )
    return np.asarray(10.0 ** (-loss_db / 10.0))


def shannon_rate(
    bandwidth: float,
    signal_power: float,
    interference_power: float,
    noise_power: float,
) -> float:
    """
    Shannon rate of a link with interference treated as noise.

    :param bandwidth: Bandwidth in Hz
    :param signal_power: Received signal power in watts
    :param interference_power: Received interference power in watts
    :param noise_power: Noise power in watts
    :returns: Rate in bits/s
    """
    sinr = signal_power / (interference_power + noise_power)
    return float(bandwidth * math.log2(1.0 + sinr))


def ue_rate(
    scenario: NetworkScenario,
    ue: int,
    serving: int,
    powers: ArrayLike,
    indicators: ArrayLike,
    cluster_members: Collection[int],
    lagged_effective_powers: ArrayLike,
) -> float:
    """
    Data rate of one UE served by one base station.

    Interference comes from every base station outside the serving base
    station's cluster, weighted by its effective power P^Work * I in the
    previous slot. Members of the serving cluster are orthogonal.

    :param scenario: Network scenario
    :param ue: UE id
    :param serving: Serving base-station id
    :param powers: Transmit power of every base station in watts
    :param indicators: ON/OFF indicator of every base station
    :param cluster_members: Ids in the serving base station's cluster
    :param lagged_effective_powers: P^Work * I of every base station in the
        previous slot
    :returns: Rate in bits/s
    :raises InvalidStateError: If the serving base station is OFF
    """
    indicator = np.asarray(indicators)
    if indicator[serving] != 1:
        raise InvalidStateError(f"serving BS {serving} is OFF")
    lagged = np.asarray(lagged_effective_powers, dtype=float)
    gains = scenario.gains[:, ue]
    excluded = set(cluster_members) | {serving}
    interference = sum(
        float(lagged[b] * gains[b])
        for b in range(scenario.n_bs)
        if b not in excluded
    )
    signal = float(np.asarray(powers, dtype=float)[serving] * gains[serving])
    return shannon_rate(
        scenario.bandwidth, signal, interference, scenario.noise_power
    )


def rate_matrix(
    scenario: NetworkScenario,
    powers: NDArray[np.float64],
    indicators: NDArray[np.int_],
    labels: NDArray[np.int_],
    lagged_effective_powers: NDArray[np.float64],
) -> NDArray[np.float64]:
    """
    Rate every UE would get from every base station.

    Entry (b, m) is the rate of UE m if served by b under the current action,
    with interference from outside b's cluster only. OFF base stations get a
    row of zeros.

    :param scenario: Network scenario
    :param powers: Transmit powers, shape (|B|,)
    :param indicators: ON/OFF indicators, shape (|B|,)
    :param labels: Cluster label of every base station, shape (|B|,)
    :param lagged_effective_powers: Previous-slot P^Work * I, shape (|B|,)
    :returns: Rates in bits/s, shape (|B|, |M|)
    """
    gains = scenario.gains
    foreign = (labels[:, np.newaxis] != labels[np.newaxis, :]).astype(float)
    interference = foreign @ (lagged_effective_powers[:, np.newaxis] * gains)
    signal = (powers * indicators)[:, np.newaxis] * gains
    sinr = signal / (interference + scenario.noise_power)
    return np.asarray(scenario.bandwidth * np.log2(1.0 + sinr))


def bs_load(
    traffic_influx: ArrayLike, rates: ArrayLike
) -> tuple[float, bool]:
    """
    Fractional transfer time of a base station over its served UEs.

    A UE with zero rate cannot be served in finite time; it contributes a
    load of 1 and marks the base station as overloaded.

    :param traffic_influx: Influx rate of each served UE in bits/s
    :param rates: Rate of each served UE in bits/s
    :returns: Tuple of (load clamped to [0, 1], overload flag)
    """
    influx = np.asarray(traffic_influx, dtype=float)
    rate = np.asarray(rates, dtype=float)
    servable = rate > MIN_RATE_BPS
    per_ue = np.where(servable, influx / np.where(servable, rate, 1.0), 1.0)
    raw = float(per_ue.sum())
    overload = raw > 1.0 or not bool(servable.all())
    return min(raw, 1.0), overload


def load_vector(
    servers: NDArray[np.int_],
    traffic_influx: NDArray[np.float64],
    rates: NDArray[np.float64],
    n_bs: int,
) -> tuple[NDArray[np.float64], NDArray[np.bool_]]:
    """
    Loads of all base stations given the serving base station of each UE.

    :param servers: Serving base station per UE, -1 for unserved UEs
    :param traffic_influx: Influx per UE in bits/s
    :param rates: Rate matrix from :func:`rate_matrix`
    :param n_bs: Number of base stations
    :returns: Tuple of (loads clamped to [0, 1], overload flags)
    """
    served = np.flatnonzero(servers >= 0)
    owners = servers[served]
    rate = rates[owners, served]
    servable = rate > MIN_RATE_BPS
    per_ue = np.where(
        servable, traffic_influx[served] / np.where(servable, rate, 1.0), 1.0
    )
    raw = np.bincount(owners, weights=per_ue, minlength=n_bs)
    starved = np.bincount(owners[~servable], minlength=n_bs) > 0
    return np.minimum(raw, 1.0), (raw > 1.0) | starved


def bs_power(
    spec: BaseStationSpec, state: BaseStationState, overhead: float = 0.0
) -> float:
    """
    Total power consumption of a base station.

    :param spec: Static base-station description
    :param state: Slot state; its load must already be computed
    :param overhead: Coordination overhead delta P^Base in watts (zero for
        unclustered base stations)
    :returns: P^Total in watts
    """
    if state.indicator == 0:
        return spec.sleep_fraction * spec.base_power + overhead
    working = state.load * state.power
    return (
        working / spec.amplifier_efficiency + spec.base_power + overhead
    )


def power_vector(
    scenario: NetworkScenario,
    powers: NDArray[np.float64],
    indicators: NDArray[np.int_],
    loads: NDArray[np.float64],
    overheads: NDArray[np.float64],
) -> NDArray[np.float64]:
    """
    Total power consumption of every base station.

    :param scenario: Network scenario
    :param powers: Transmit powers
    :param indicators: ON/OFF indicators
    :param loads: Clamped loads
    :param overheads: Coordination overhead per base station
    :returns: P^Total per base station in watts
    """
    on_power = (
        loads * powers / scenario.amplifier_efficiency + scenario.base_power
    )
    off_power = scenario.sleep_fraction * scenario.base_power
    return np.where(indicators == 1, on_power, off_power) + overheads


def bs_cost(
    spec: BaseStationSpec,
    total_power: float,
    load: float,
    energy_weight: float,
    load_weight: float,
) -> float:
    """
    Cost of a base station: weighted normalized energy plus weighted load.

    :param spec: Static base-station description
    :param total_power: P^Total in watts
    :param load: Clamped load
    :param energy_weight: Weight lambda of the energy term
    :param load_weight: Weight mu of the load term
    :returns: Dimensionless cost
    """
    return (
        energy_weight * total_power / spec.full_load_power
        + load_weight * load
    )


def cost_vector(
    scenario: NetworkScenario,
    total_powers: NDArray[np.float64],
    loads: NDArray[np.float64],
) -> NDArray[np.float64]:
    """
    Cost of every base station.

    :param scenario: Network scenario (supplies weights and normalization)
    :param total_powers: P^Total per base station
    :param loads: Clamped loads
    :returns: Cost per base station
    """
    return (
        scenario.energy_weight * total_powers / scenario.full_load_power
        + scenario.load_weight * loads
    )


def cluster_cost(costs: ArrayLike, members: Collection[int]) -> float:
    """
    Aggregated cost of the members of one cluster.

    :param costs: Cost of every base station
    :param members: Ids in the cluster
    :returns: Sum of member costs
    """
    values = np.asarray(costs, dtype=float)
    return float(values[list(members)].sum())


def network_cost(costs: ArrayLike) -> float:
    """Objective of the network: the sum of all base-station costs."""
    return float(np.sum(costs))


def expected_flows(load: ArrayLike) -> NDArray[np.float64]:
    """
    Average number of flows rho / (1 - rho) at each base station.

    The value is proportional to the expected delay and is infinite for a
    fully loaded base station.

    :param load: Load(s) in [0, 1]
    :returns: Expected number of flows
    """
    rho = np.asarray(load, dtype=float)
    with np.errstate(divide="ignore"):
        return np.where(rho < 1.0, rho / np.where(rho < 1.0, 1.0 - rho, 1.0), np.inf)
