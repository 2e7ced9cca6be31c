"""
Tests for the physical network model.
"""

import math

import numpy as np
import pytest
from conftest import (
    INFLUX,
    SBS_BASE_POWER,
    SBS_MAX_POWER,
    make_bs,
    make_scenario,
)
from hypothesis import given, settings
from hypothesis import strategies as st

from pycellsleep.core.errors import InvalidGeometryError, InvalidStateError
from pycellsleep.core.network import (
    BaseStationState,
    BSKind,
    NetworkScenario,
    UserSpec,
    bs_cost,
    bs_load,
    bs_power,
    channel_gain,
    cluster_cost,
    cost_vector,
    dbm_to_watts,
    expected_flows,
    load_vector,
    network_cost,
    path_loss,
    power_vector,
    rate_matrix,
    shannon_rate,
    ue_rate,
    watts_to_dbm,
)


@pytest.mark.parametrize(
    ("kind", "distance", "expected"),
    [
        (BSKind.MBS, 1000.0, 128.1),
        (BSKind.MBS, 100.0, 90.5),
        (BSKind.SBS, 100.0, 103.1),
    ],
)
def test_path_loss_values(kind: BSKind, distance: float, expected: float) -> None:
    assert path_loss(kind, distance) == pytest.approx(expected, abs=1e-9)


@pytest.mark.parametrize("distance", [0.0, -5.0])
def test_path_loss_rejects_non_positive_distance(distance: float) -> None:
    with pytest.raises(InvalidGeometryError):
        path_loss(BSKind.SBS, distance)


def test_channel_gain_is_linear_path_loss() -> None:
    assert channel_gain(BSKind.MBS, 1000.0) == pytest.approx(10 ** -12.81)


def test_power_conversions() -> None:
    assert dbm_to_watts(30.0) == pytest.approx(1.0)
    assert dbm_to_watts(46.0) == pytest.approx(39.81, rel=1e-3)
    assert dbm_to_watts(33.0) == pytest.approx(1.995, rel=1e-3)
    assert watts_to_dbm(1.0) == pytest.approx(30.0)


@given(st.floats(min_value=-50.0, max_value=80.0))
def test_dbm_watts_inverse(dbm: float) -> None:
    assert watts_to_dbm(dbm_to_watts(dbm)) == pytest.approx(dbm, abs=1e-9)


def test_shannon_rate_at_unit_snr_equals_bandwidth() -> None:
    assert shannon_rate(10e6, 1e-9, 0.0, 1e-9) == pytest.approx(10e6)


def test_shannon_rate_zero_power() -> None:
    assert shannon_rate(10e6, 0.0, 1e-10, 1e-9) == 0.0


def test_ue_rate_matches_hand_evaluation() -> None:
    scenario = make_scenario([(200.0, 0.0)], [(150.0, 50.0)])
    powers = scenario.max_power
    indicators = np.array([1, 1])
    lagged = np.array([5.0, 0.3])
    gains = scenario.gains[:, 0]

    # SBS 1 serves, the MBS is a foreign interferer.
    signal = powers[1] * gains[1]
    interference = lagged[0] * gains[0]
    expected = 10e6 * math.log2(
        1.0 + signal / (interference + scenario.noise_power)
    )
    rate = ue_rate(scenario, 0, 1, powers, indicators, {1}, lagged)
    assert rate == pytest.approx(expected, rel=1e-12)

    # Same cluster: no interference at all.
    rate_clustered = ue_rate(scenario, 0, 1, powers, indicators, {0, 1}, lagged)
    assert rate_clustered == pytest.approx(
        10e6 * math.log2(1.0 + signal / scenario.noise_power), rel=1e-12
    )


def test_ue_rate_off_server_raises() -> None:
    scenario = make_scenario([(200.0, 0.0)], [(150.0, 50.0)])
    with pytest.raises(InvalidStateError):
        ue_rate(
            scenario,
            0,
            1,
            scenario.max_power,
            np.array([1, 0]),
            {1},
            np.zeros(2),
        )


def test_rate_matrix_agrees_with_scalar_rates() -> None:
    scenario = make_scenario(
        [(200.0, 0.0), (-150.0, 120.0), (0.0, -300.0)],
        [(150.0, 50.0), (-100.0, 100.0), (20.0, -250.0), (300.0, 300.0)],
    )
    powers = scenario.max_power.copy()
    indicators = np.array([1, 1, 0, 1])
    powers[2] = 0.0
    labels = np.array([0, 1, 1, 2])
    lagged = np.array([10.0, 0.4, 0.0, 0.7])
    rates = rate_matrix(scenario, powers, indicators, labels, lagged)
    assert rates.shape == (4, 4)
    assert np.all(rates[2] == 0.0)
    for b in (0, 1, 3):
        members = set(np.flatnonzero(labels == labels[b]).tolist())
        for m in range(scenario.n_ue):
            assert rates[b, m] == pytest.approx(
                ue_rate(scenario, m, b, powers, indicators, members, lagged),
                rel=1e-12,
            )


def test_bs_load_examples() -> None:
    assert bs_load([INFLUX], [1e6]) == (pytest.approx(0.18), False)
    assert bs_load([], []) == (0.0, False)
    assert bs_load([0.7, 0.6], [1.0, 1.0]) == (1.0, True)


def test_bs_load_zero_rate_overloads() -> None:
    load, overload = bs_load([INFLUX], [0.0])
    assert load == 1.0
    assert overload


def test_load_vector() -> None:
    rates = np.array([[1e6, 2e6, 0.0], [0.0, 0.0, 0.0]])
    servers = np.array([0, 0, -1])
    loads, overload = load_vector(
        servers, np.full(3, INFLUX), rates, n_bs=2
    )
    assert loads == pytest.approx([0.18 + 0.09, 0.0])
    assert not overload.any()

    loads, overload = load_vector(
        np.array([0, 0, 0]), np.full(3, INFLUX), rates, n_bs=2
    )
    assert loads[0] == 1.0
    assert overload.tolist() == [True, False]


def test_bs_power_off_sbs() -> None:
    spec = make_bs(1, BSKind.SBS, (100.0, 0.0))
    state = BaseStationState(power=0.0, indicator=0)
    assert bs_power(spec, state) == pytest.approx(0.5 * 1.995, rel=1e-3)


def test_bs_power_on() -> None:
    spec = make_bs(1, BSKind.SBS, (100.0, 0.0))
    idle = BaseStationState(power=SBS_MAX_POWER, indicator=1, load=0.0)
    assert bs_power(spec, idle) == pytest.approx(SBS_BASE_POWER)
    full = BaseStationState(power=SBS_MAX_POWER, indicator=1, load=1.0)
    assert bs_power(spec, full) == pytest.approx(
        SBS_MAX_POWER / 0.0542 + SBS_BASE_POWER
    )
    assert bs_power(spec, full, overhead=1.5) == pytest.approx(
        spec.full_load_power + 1.5
    )


def test_power_vector_matches_bs_power() -> None:
    scenario = make_scenario([(200.0, 0.0), (0.0, 200.0)], [])
    powers = scenario.max_power * np.array([1, 0, 1])
    indicators = np.array([1, 0, 1])
    loads = np.array([0.3, 0.0, 0.8])
    overheads = np.array([0.0, 0.5, 0.5])
    totals = power_vector(scenario, powers, indicators, loads, overheads)
    for b, spec in enumerate(scenario.bs_list):
        state = BaseStationState(
            power=float(powers[b]), indicator=int(indicators[b]), load=loads[b]
        )
        assert totals[b] == pytest.approx(bs_power(spec, state, overheads[b]))


def test_bs_cost_off_sbs() -> None:
    spec = make_bs(1, BSKind.SBS, (100.0, 0.0))
    off_power = 0.5 * SBS_BASE_POWER
    assert bs_cost(spec, off_power, 0.0, 0.5, 0.5) == pytest.approx(
        0.0245, abs=5e-4
    )


def test_bs_cost_weight_collapse() -> None:
    spec = make_bs(1, BSKind.SBS, (100.0, 0.0))
    assert bs_cost(spec, 3.0, 0.37, 0.0, 1.0) == pytest.approx(0.37)
    assert bs_cost(spec, spec.full_load_power, 1.0, 1.0, 0.0) == pytest.approx(
        1.0
    )


def test_cost_vector_and_aggregates() -> None:
    scenario = make_scenario([(200.0, 0.0)], [])
    totals = np.array([500.0, 1.0])
    loads = np.array([0.5, 0.0])
    costs = cost_vector(scenario, totals, loads)
    for b, spec in enumerate(scenario.bs_list):
        assert costs[b] == pytest.approx(
            bs_cost(spec, totals[b], loads[b], 0.5, 0.5)
        )
    assert network_cost(costs) == pytest.approx(costs.sum())
    assert cluster_cost(costs, [1]) == pytest.approx(costs[1])


def test_expected_flows() -> None:
    flows = expected_flows([0.0, 0.5, 1.0])
    assert flows[0] == 0.0
    assert flows[1] == pytest.approx(1.0)
    assert math.isinf(flows[2])


def test_off_state_cannot_serve() -> None:
    with pytest.raises(InvalidStateError):
        BaseStationState(power=0.0, indicator=0, served_ues=frozenset({3}))


def test_scenario_validation() -> None:
    bs = make_bs(0, BSKind.MBS, (0.0, 0.0))
    with pytest.raises(ValueError):
        NetworkScenario((), ())
    with pytest.raises(ValueError):
        NetworkScenario((make_bs(1, BSKind.SBS, (1.0, 1.0)),), ())
    with pytest.raises(ValueError):
        NetworkScenario((bs,), (), energy_weight=0.0, load_weight=0.0)
    with pytest.raises(ValueError):
        UserSpec(0, (1.0, 1.0), 0.0)


def test_scenario_arrays() -> None:
    scenario = make_scenario([(200.0, 0.0)], [(100.0, 0.0)])
    assert scenario.n_bs == 2
    assert scenario.n_ue == 1
    assert scenario.is_macro.tolist() == [True, False]
    assert scenario.controllable.tolist() == [False, True]
    assert scenario.distances[:, 0] == pytest.approx([100.0, 100.0])
    assert scenario.gains[0, 0] == pytest.approx(channel_gain(BSKind.MBS, 100.0))
    assert scenario.noise_power == pytest.approx(10 ** -20.4 * 10e6)


@settings(max_examples=30)
@given(
    st.sampled_from([BSKind.MBS, BSKind.SBS]),
    st.floats(min_value=0.0, max_value=1.0),
    st.floats(min_value=0.0, max_value=1.0),
    st.floats(min_value=0.0, max_value=1.0),
    st.floats(min_value=0.0, max_value=1.0),
)
def test_bs_power_monotone_in_power_and_load(
    kind: BSKind, p1: float, p2: float, rho1: float, rho2: float
) -> None:
    spec = make_bs(0, kind, (0.0, 0.0))
    low_p, high_p = sorted((p1 * spec.max_power, p2 * spec.max_power))
    low_rho, high_rho = sorted((rho1, rho2))

    def total(power: float, load: float) -> float:
        return bs_power(spec, BaseStationState(power=power, indicator=1, load=load))

    assert total(low_p, high_rho) <= total(high_p, high_rho)
    assert total(high_p, low_rho) <= total(high_p, high_rho)
    off = bs_power(spec, BaseStationState(power=0.0, indicator=0))
    assert off <= total(low_p, low_rho)


@settings(max_examples=30)
@given(
    st.lists(
        st.floats(min_value=0.0, max_value=20.0), min_size=4, max_size=4
    ),
    st.integers(min_value=0, max_value=3),
    st.floats(min_value=0.01, max_value=20.0),
)
def test_added_interferer_never_raises_rates(
    lagged: list[float], interferer: int, extra: float
) -> None:
    scenario = make_scenario(
        [(200.0, 0.0), (-150.0, 120.0), (0.0, -300.0)],
        [(150.0, 50.0), (-100.0, 100.0), (20.0, -250.0), (300.0, 300.0)],
    )
    powers = scenario.max_power.copy()
    indicators = np.ones(4, dtype=int)
    labels = np.array([0, 1, 1, 2])
    before = np.array(lagged)
    after = before.copy()
    after[interferer] += extra
    rates = rate_matrix(scenario, powers, indicators, labels, before)
    louder = rate_matrix(scenario, powers, indicators, labels, after)

    foreign = labels != labels[interferer]
    assert np.all(louder[foreign] <= rates[foreign])
    assert louder[~foreign] == pytest.approx(rates[~foreign], rel=1e-12)


@settings(max_examples=30)
@given(
    st.floats(min_value=0.05, max_value=1.0),
    st.floats(min_value=1.001, max_value=4.0),
)
def test_load_decreases_with_own_transmit_power(
    fraction: float, factor: float
) -> None:
    scenario = make_scenario(
        [(200.0, 0.0)], [(180.0, 10.0), (230.0, -20.0), (150.0, 60.0)]
    )
    servers = np.ones(scenario.n_ue, dtype=int)
    indicators = np.ones(2, dtype=int)
    labels = np.array([0, 1])
    lagged = np.array([0.01, 0.0])

    def sbs_load(power: float) -> float:
        powers = scenario.max_power.copy()
        powers[1] = power
        rates = rate_matrix(scenario, powers, indicators, labels, lagged)
        loads, overload = load_vector(
            servers, scenario.traffic_influx, rates, scenario.n_bs
        )
        assert not overload.any()
        return float(loads[1])

    base = fraction * SBS_MAX_POWER
    assert sbs_load(base * factor) < sbs_load(base)
