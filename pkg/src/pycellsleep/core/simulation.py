"""
Slot-by-slot simulation of dynamic clustering and ON/OFF switching.

Each slot: clusters sample actions, base stations advertise their load
estimates and UEs associate, clusters schedule their anchored UEs, loads,
powers, costs and utilities are measured, learners and load estimates are
updated, and every N slots the clusters are re-formed.

The classical (always ON) and random ON/OFF baselines run through the same
loop with the action-sampling step replaced.
"""

import logging
from collections.abc import Callable
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
from numpy.typing import NDArray

from .association import (
    DEFAULT_LOAD_EXPONENT,
    UNSERVED,
    LoadEstimator,
    associate_ues,
    nominal_anchors,
)
from .clustering import (
    DEFAULT_KMEANS_MAX_ITERS,
    DEFAULT_MAX_CLUSTER_SIZE,
    DEFAULT_P2P_ROUNDS,
    ClusterMethod,
    ClusterSet,
    form_clusters,
)
from .coordination import overhead_vector, schedule_cluster
from .errors import InvalidArgumentError
from .learning import (
    DEFAULT_KAPPA,
    DEFAULT_POWER_LEVELS,
    ActionSpace,
    LearnerState,
    LearningRates,
    build_action_space,
    cluster_utility,
    sample_action,
    update_learner,
)
from .network import (
    NetworkScenario,
    cost_vector,
    load_vector,
    network_cost,
    power_vector,
    rate_matrix,
)
from .schedules import DecayingRate
from .similarity import SimilarityGraph, SimilarityParameters

logger = logging.getLogger(__name__)


class Strategy(Enum):
    CLASSICAL = "classical"
    RANDOM = "random-onoff"
    LEARNING_NOCLUSTERS = "learning-noclusters"
    LEARNING_KMEANS = "learning-kmeans"
    LEARNING_SPECTRAL = "learning-spectral"
    LEARNING_P2P = "learning-p2p"

    @property
    def is_learning(self) -> bool:
        return self.value.startswith("learning")

    @property
    def cluster_method(self) -> ClusterMethod:
        return _CLUSTER_METHODS.get(self, ClusterMethod.NONE)


_CLUSTER_METHODS = {
    Strategy.LEARNING_KMEANS: ClusterMethod.KMEANS,
    Strategy.LEARNING_SPECTRAL: ClusterMethod.SPECTRAL,
    Strategy.LEARNING_P2P: ClusterMethod.P2P,
}


@dataclass(frozen=True)
class SimulationSettings:
    """Knobs of one simulation run besides the scenario itself."""

    strategy: Strategy = Strategy.LEARNING_NOCLUSTERS
    similarity: SimilarityParameters = field(default_factory=SimilarityParameters)
    overhead_on_only: bool = False
    max_cluster_size: int = DEFAULT_MAX_CLUSTER_SIZE
    p2p_rounds: int = DEFAULT_P2P_ROUNDS
    kmeans_k: int | None = None
    kmeans_max_iters: int = DEFAULT_KMEANS_MAX_ITERS
    kappa: float = DEFAULT_KAPPA
    rates: LearningRates = field(default_factory=LearningRates)
    power_levels: int = DEFAULT_POWER_LEVELS
    load_estimate_exponent: float = DEFAULT_LOAD_EXPONENT
    random_on_probability: float = 0.5

    def __post_init__(self) -> None:
        if self.kappa <= 0:
            raise InvalidArgumentError("kappa must be positive")
        if not 0.0 <= self.random_on_probability <= 1.0:
            raise InvalidArgumentError("ON probability must lie in [0, 1]")
        if self.max_cluster_size < 1:
            raise InvalidArgumentError("max cluster size must be >= 1")


@dataclass(frozen=True)
class SlotRecord:
    """Measurements of one slot."""

    t: int
    actions: tuple[int, ...]
    utilities: tuple[float, ...]
    indicators: NDArray[np.int_]
    loads: NDArray[np.float64]
    total_powers: NDArray[np.float64]
    costs: NDArray[np.float64]
    overload: NDArray[np.bool_]
    unserved: int
    n_clusters: int
    mean_cluster_size: float
    reclustered: bool = False

    @property
    def network_cost(self) -> float:
        return network_cost(self.costs)


@dataclass(frozen=True)
class WorldState:
    """
    Everything carried from one slot to the next.

    ``t`` is the index of the next slot to run (starting at 1). The random
    generator is shared between states of the same run.
    """

    t: int
    clusters: ClusterSet
    graph: SimilarityGraph
    action_spaces: tuple[ActionSpace, ...]
    learners: tuple[LearnerState, ...]
    load_estimates: NDArray[np.float64]
    lagged_effective_powers: NDArray[np.float64]
    rng: np.random.Generator


def _learners_for(
    clusters: ClusterSet,
    scenario: NetworkScenario,
    settings: SimulationSettings,
) -> tuple[tuple[ActionSpace, ...], tuple[LearnerState, ...]]:
    """Fresh action spaces and learners: zero estimates, uniform strategies."""
    spaces = []
    learners = []
    for members in clusters.clusters:
        if settings.strategy.is_learning:
            space = build_action_space(
                sorted(members),
                scenario.max_power,
                scenario.controllable,
                settings.power_levels,
                settings.max_cluster_size,
            )
            learner = LearnerState.initial(len(space), settings.kappa)
        else:
            space = ActionSpace.all_on(sorted(members), scenario.max_power)
            learner = LearnerState.initial(1, settings.kappa)
        spaces.append(space)
        learners.append(learner)
    return tuple(spaces), tuple(learners)


def initialize(
    scenario: NetworkScenario,
    settings: SimulationSettings,
    rng: np.random.Generator,
) -> WorldState:
    """
    Initial world state: estimates at the preferred load, first clusters.

    :param scenario: Network scenario
    :param settings: Run settings
    :param rng: Random generator of the run
    :returns: State ready for slot 1
    """
    rho_hat = np.full(scenario.n_bs, scenario.preferred_load)
    method = settings.strategy.cluster_method
    clusters, graph = form_clusters(
        method,
        scenario.bs_positions,
        rho_hat,
        settings.similarity,
        rng,
        k=settings.kmeans_k,
        max_cluster_size=settings.max_cluster_size,
        p2p_rounds=settings.p2p_rounds,
        kmeans_max_iters=settings.kmeans_max_iters,
        epoch=0,
    )
    spaces, learners = _learners_for(clusters, scenario, settings)
    return WorldState(
        t=1,
        clusters=clusters,
        graph=graph,
        action_spaces=spaces,
        learners=learners,
        load_estimates=rho_hat,
        lagged_effective_powers=scenario.preferred_load * scenario.max_power,
        rng=rng,
    )


def _choose_actions(
    state: WorldState,
    scenario: NetworkScenario,
    settings: SimulationSettings,
) -> tuple[tuple[int, ...], NDArray[np.float64], NDArray[np.int_]]:
    powers = scenario.max_power.copy()
    indicators = np.ones(scenario.n_bs, dtype=int)
    match settings.strategy:
        case Strategy.CLASSICAL:
            return tuple(0 for _ in state.learners), powers, indicators
        case Strategy.RANDOM:
            coin = state.rng.random(scenario.n_bs) < settings.random_on_probability
            indicators = np.where(scenario.controllable, coin, True).astype(int)
            return tuple(0 for _ in state.learners), powers * indicators, indicators
    actions = []
    for space, learner in zip(state.action_spaces, state.learners, strict=True):
        j = sample_action(learner.strategy, state.rng)
        space.apply(j, powers, indicators)
        actions.append(j)
    return tuple(actions), powers, indicators


def run_slot(
    state: WorldState,
    scenario: NetworkScenario,
    settings: SimulationSettings,
) -> tuple[WorldState, SlotRecord]:
    """
    Run slot ``state.t``.

    :param state: World state before the slot
    :param scenario: Network scenario
    :param settings: Run settings
    :returns: Tuple of (state for the next slot, measurements of this slot)
    :raises NumericalFailureError: If re-clustering fails to converge
    """
    t = state.t
    actions, powers, indicators = _choose_actions(state, scenario, settings)
    labels = state.clusters.labels(scenario.n_bs)

    anchors = associate_ues(
        scenario.gains,
        powers,
        indicators,
        state.load_estimates,
        scenario.load_exponent,
    )
    rates = rate_matrix(
        scenario, powers, indicators, labels, state.lagged_effective_powers
    )

    servers = anchors.copy()
    for members in state.clusters.clusters:
        if len(members) < 2:
            continue
        anchored = np.flatnonzero(np.isin(anchors, list(members)))
        for ue, bs in schedule_cluster(
            members, anchored.tolist(), indicators, rates, scenario.traffic_influx
        ).items():
            servers[ue] = bs

    loads, overload = load_vector(
        servers, scenario.traffic_influx, rates, scenario.n_bs
    )
    overheads = overhead_vector(
        state.graph.neighborhood_sizes,
        labels,
        indicators,
        settings.similarity.neighborhood_range,
        scenario.overhead_sensitivity,
        settings.overhead_on_only,
    )
    total_powers = power_vector(scenario, powers, indicators, loads, overheads)
    costs = cost_vector(scenario, total_powers, loads)

    unserved_mask = servers == UNSERVED
    unserved = int(unserved_mask.sum())
    penalties = scenario.load_weight * np.bincount(
        nominal_anchors(scenario.gains, scenario.max_power)[unserved_mask],
        minlength=scenario.n_bs,
    )
    if unserved:
        logger.warning("slot %d: %d UE(s) unserved", t, unserved)
    if overload.any():
        logger.debug("slot %d: overloaded BS %s", t, np.flatnonzero(overload))

    utilities = tuple(
        cluster_utility(costs, sorted(members), float(penalties[list(members)].sum()))
        for members in state.clusters.clusters
    )
    learners = state.learners
    if settings.strategy.is_learning:
        learners = tuple(
            update_learner(learner, j, u, t, settings.rates)
            for learner, j, u in zip(learners, actions, utilities, strict=True)
        )

    estimator = LoadEstimator(
        state.load_estimates.copy(),
        DecayingRate(settings.load_estimate_exponent),
    )
    rho_hat = estimator.update(loads, t)

    next_state = replace(
        state,
        t=t + 1,
        learners=learners,
        load_estimates=rho_hat,
        lagged_effective_powers=loads * powers * indicators,
    )
    reclustered = False
    method = settings.strategy.cluster_method
    if method is not ClusterMethod.NONE and t % scenario.cluster_update_interval == 0:
        next_state = recluster(next_state, scenario, settings, epoch=t)
        reclustered = True

    record = SlotRecord(
        t=t,
        actions=actions,
        utilities=utilities,
        indicators=indicators,
        loads=loads,
        total_powers=total_powers,
        costs=costs,
        overload=overload,
        unserved=unserved,
        n_clusters=len(state.clusters.clusters),
        mean_cluster_size=scenario.n_bs / len(state.clusters.clusters),
        reclustered=reclustered,
    )
    logger.debug(
        "slot %d: actions %s, network cost %.4f", t, actions, record.network_cost
    )
    return next_state, record


def recluster(
    state: WorldState,
    scenario: NetworkScenario,
    settings: SimulationSettings,
    epoch: int,
) -> WorldState:
    """
    Re-form clusters from the current load estimates.

    Every cluster starts afresh over a new action space, also when its
    membership did not change.
    """
    clusters, graph = form_clusters(
        settings.strategy.cluster_method,
        scenario.bs_positions,
        state.load_estimates,
        settings.similarity,
        state.rng,
        k=settings.kmeans_k,
        max_cluster_size=settings.max_cluster_size,
        p2p_rounds=settings.p2p_rounds,
        kmeans_max_iters=settings.kmeans_max_iters,
        epoch=epoch,
    )
    spaces, learners = _learners_for(clusters, scenario, settings)
    return replace(
        state,
        clusters=clusters,
        graph=graph,
        action_spaces=spaces,
        learners=learners,
    )


@dataclass
class SimulationResult:
    """Slot records of a run, plus the final state."""

    records: list[SlotRecord]
    final_state: WorldState

    @property
    def network_costs(self) -> NDArray[np.float64]:
        return np.array([r.network_cost for r in self.records])


def run_simulation(
    scenario: NetworkScenario,
    settings: SimulationSettings,
    slots: int,
    rng: np.random.Generator,
    on_slot: Callable[[SlotRecord], None] | None = None,
    keep_records: bool = True,
) -> SimulationResult:
    """
    Run ``slots`` slots from the initial state.

    :param scenario: Network scenario
    :param settings: Run settings
    :param slots: Number of slots T >= 1
    :param rng: Random generator of the run
    :param on_slot: Called with every slot record (progress, tracing)
    :param keep_records: Keep the slot records on the result; long runs
        aggregate through ``on_slot`` instead
    :returns: The slot records (if kept) and the final state
    """
    if slots < 1:
        raise InvalidArgumentError(f"slots must be >= 1, got {slots}")
    logger.info(
        "running %s for %d slots (%d BS, %d UE)",
        settings.strategy.value,
        slots,
        scenario.n_bs,
        scenario.n_ue,
    )
    state = initialize(scenario, settings, rng)
    records = []
    for _ in range(slots):
        state, record = run_slot(state, scenario, settings)
        if keep_records:
            records.append(record)
        if on_slot is not None:
            on_slot(record)
    return SimulationResult(records, state)

