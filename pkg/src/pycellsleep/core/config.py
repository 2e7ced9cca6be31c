"""
Run configuration.

A configuration is one TOML document. Keys missing from a user file fall
back to the packaged defaults (``data/table1.toml``); unknown sections or
keys are rejected. Powers are given in dBm and converted to watts once, here.
"""

import logging
import tomllib
from collections.abc import Mapping
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any

from .. import get_data_file
from .errors import ConfigurationError
from .learning import (
    ALLOWED_POWER_LEVELS,
    ExponentAssignment,
    LearningRates,
)
from .network import BSKind, dbm_to_watts
from .schedules import DecayingRate
from .simulation import SimulationSettings, Strategy
from .similarity import SimilarityParameters

logger = logging.getLogger(__name__)

# Keys accepted in a section although absent from the defaults.
_OPTIONAL_KEYS = {
    "clustering": {"kmeans_k", "chi_w_per_m", "chi_dbm_per_m"},
    "scenario": {"base_station", "user"},
    "sweep": {"epsilon_d_m", "theta", "chi_w_per_m"},
}


@dataclass(frozen=True)
class TierConfig:
    """Power model of one base-station tier (macro or small)."""

    max_power_dbm: float
    base_power_dbm: float
    amplifier_efficiency: float
    sleep_fraction: float

    def __post_init__(self) -> None:
        if not 0.0 < self.amplifier_efficiency < 1.0:
            raise ConfigurationError("amplifier_efficiency must lie in (0, 1)")
        if not 0.0 < self.sleep_fraction < 1.0:
            raise ConfigurationError("sleep_fraction must lie in (0, 1)")

    @property
    def max_power(self) -> float:
        return dbm_to_watts(self.max_power_dbm)

    @property
    def base_power(self) -> float:
        return dbm_to_watts(self.base_power_dbm)


@dataclass(frozen=True)
class NetworkConfig:
    bandwidth_hz: float
    carrier_frequency_hz: float
    noise_density_dbm_hz: float
    traffic_influx_bps: float
    load_exponent: float
    energy_weight: float
    load_weight: float
    preferred_load: float
    mbs_controllable: bool

    def __post_init__(self) -> None:
        if self.bandwidth_hz <= 0 or self.traffic_influx_bps <= 0:
            raise ConfigurationError("bandwidth and traffic influx must be > 0")
        if self.load_exponent < 0:
            raise ConfigurationError("load_exponent must be >= 0")
        if min(self.energy_weight, self.load_weight) < 0 or (
            self.energy_weight + self.load_weight <= 0
        ):
            raise ConfigurationError(
                "cost weights must be >= 0 with a positive sum"
            )
        if not 0.0 <= self.preferred_load <= 1.0:
            raise ConfigurationError("preferred_load must lie in [0, 1]")


@dataclass(frozen=True)
class GeometryConfig:
    """Deployment disc and minimum separation distances."""

    area_radius_m: float
    min_mbs_sbs_m: float
    min_mbs_ue_m: float
    min_sbs_sbs_m: float
    min_sbs_ue_m: float
    max_attempts: int

    def __post_init__(self) -> None:
        largest = max(
            self.min_mbs_sbs_m,
            self.min_mbs_ue_m,
            self.min_sbs_sbs_m,
            self.min_sbs_ue_m,
        )
        if self.area_radius_m <= largest:
            raise ConfigurationError(
                "area_radius_m must exceed every minimum distance"
            )
        if self.max_attempts < 1:
            raise ConfigurationError("max_attempts must be >= 1")


@dataclass(frozen=True)
class ClusteringConfig:
    epsilon_d_m: float
    sigma_d_m: float
    sigma_l: float
    theta: float
    chi_w_per_m: float
    max_cluster_size: int
    p2p_rounds: int
    kmeans_max_iters: int
    update_interval: int
    overhead_on_only: bool
    kmeans_k: int | None = None

    def __post_init__(self) -> None:
        if self.chi_w_per_m < 0:
            raise ConfigurationError("chi must be non-negative")
        if self.update_interval < 1:
            raise ConfigurationError("update_interval must be >= 1")
        if self.max_cluster_size < 1 or self.p2p_rounds < 0:
            raise ConfigurationError(
                "max_cluster_size must be >= 1 and p2p_rounds >= 0"
            )
        if self.kmeans_k is not None and self.kmeans_k < 1:
            raise ConfigurationError("kmeans_k must be >= 1")
        try:
            SimilarityParameters(
                self.epsilon_d_m, self.sigma_d_m, self.sigma_l, self.theta
            )
        except ValueError as exc:
            raise ConfigurationError(str(exc)) from exc

    @property
    def similarity(self) -> SimilarityParameters:
        return SimilarityParameters(
            self.epsilon_d_m, self.sigma_d_m, self.sigma_l, self.theta
        )


@dataclass(frozen=True)
class LearningConfig:
    kappa: float
    exponents: tuple[float, float, float]
    exponent_assignment: ExponentAssignment
    power_levels: int
    load_estimate_exponent: float

    def __post_init__(self) -> None:
        if self.kappa <= 0:
            raise ConfigurationError("kappa must be positive")
        if len(self.exponents) != 3:
            raise ConfigurationError("exactly three learning exponents needed")
        for phi in (*self.exponents, self.load_estimate_exponent):
            if not 0.5 < phi <= 1.0:
                raise ConfigurationError(
                    f"learning-rate exponents must lie in (0.5, 1], got {phi}"
                )
        if self.power_levels not in ALLOWED_POWER_LEVELS:
            raise ConfigurationError(
                f"power_levels must be one of {ALLOWED_POWER_LEVELS}"
            )

    @property
    def rates(self) -> LearningRates:
        """
        Schedules of the utility, regret and strategy estimates.

        ``table`` assigns the exponents in the order given; ``ordered``
        reverses them.
        """
        phis = self.exponents
        if self.exponent_assignment is ExponentAssignment.ORDERED:
            phis = (phis[2], phis[1], phis[0])
        return LearningRates(*(DecayingRate(phi) for phi in phis))


@dataclass(frozen=True)
class StationLayout:
    """Explicitly placed base station."""

    kind: BSKind
    x: float
    y: float


@dataclass(frozen=True)
class UserLayout:
    """Explicitly placed UE."""

    x: float
    y: float
    traffic_influx_bps: float | None = None


@dataclass(frozen=True)
class ScenarioConfig:
    n_sbs: int
    n_ue: int
    base_stations: tuple[StationLayout, ...] = ()
    users: tuple[UserLayout, ...] = ()

    def __post_init__(self) -> None:
        if self.n_sbs < 0 or self.n_ue < 0:
            raise ConfigurationError("n_sbs and n_ue must be >= 0")
        if self.users and not self.base_stations:
            raise ConfigurationError(
                "explicit users require explicit base stations"
            )

    @property
    def is_explicit(self) -> bool:
        return bool(self.base_stations)


@dataclass(frozen=True)
class RunConfig:
    """What to run: strategy, horizon, seeds and parallelism."""

    strategy: Strategy
    slots: int
    seeds: tuple[int, ...]
    workers: int = 0

    def __post_init__(self) -> None:
        if self.slots < 1:
            raise ConfigurationError("slots must be >= 1")
        if not self.seeds:
            raise ConfigurationError("at least one seed is required")
        if self.workers < 0:
            raise ConfigurationError("workers must be >= 0")


@dataclass(frozen=True)
class SweepConfig:
    """
    Sweep axes. An axis set to None takes the single value of the base
    configuration.
    """

    strategies: tuple[Strategy, ...]
    n_ue: tuple[int, ...] | None = None
    epsilon_d_m: tuple[float, ...] | None = None
    theta: tuple[float, ...] | None = None
    chi_w_per_m: tuple[float, ...] | None = None

    def __post_init__(self) -> None:
        for f in fields(self):
            value = getattr(self, f.name)
            if value is not None and len(value) == 0:
                raise ConfigurationError(f"sweep axis '{f.name}' is empty")


@dataclass(frozen=True)
class Config:
    """A complete, validated configuration."""

    network: NetworkConfig
    macro: TierConfig
    small: TierConfig
    geometry: GeometryConfig
    clustering: ClusteringConfig
    learning: LearningConfig
    scenario: ScenarioConfig
    run: RunConfig
    sweep: SweepConfig
    source: Path | None = field(default=None, compare=False)

    def tier(self, kind: BSKind) -> TierConfig:
        return self.macro if kind is BSKind.MBS else self.small

    def simulation_settings(
        self, strategy: Strategy | None = None
    ) -> SimulationSettings:
        """Settings of a simulation run with this configuration."""
        c = self.clustering
        return SimulationSettings(
            strategy=strategy or self.run.strategy,
            similarity=c.similarity,
            overhead_on_only=c.overhead_on_only,
            max_cluster_size=c.max_cluster_size,
            p2p_rounds=c.p2p_rounds,
            kmeans_k=c.kmeans_k,
            kmeans_max_iters=c.kmeans_max_iters,
            kappa=self.learning.kappa,
            rates=self.learning.rates,
            power_levels=self.learning.power_levels,
            load_estimate_exponent=self.learning.load_estimate_exponent,
        )

    def with_overrides(self, **sections: Mapping[str, Any]) -> "Config":
        """Copy with fields of the named sections replaced."""
        updated = {
            name: replace(getattr(self, name), **values)
            for name, values in sections.items()
        }
        return replace(self, **updated)


def _merge(
    defaults: dict[str, Any], overrides: Mapping[str, Any]
) -> dict[str, Any]:
    merged = {name: dict(section) for name, section in defaults.items()}
    for name, section in overrides.items():
        if name not in merged:
            raise ConfigurationError(f"unknown configuration section [{name}]")
        if not isinstance(section, Mapping):
            raise ConfigurationError(f"[{name}] must be a table")
        allowed = set(merged[name]) | _OPTIONAL_KEYS.get(name, set())
        unknown = set(section) - allowed
        if unknown:
            raise ConfigurationError(
                f"unknown key(s) in [{name}]: {', '.join(sorted(unknown))}"
            )
        if name == "clustering" and (
            "chi_w_per_m" in section or "chi_dbm_per_m" in section
        ):
            merged[name].pop("chi_w_per_m", None)
            merged[name].pop("chi_dbm_per_m", None)
        merged[name].update(section)
    return merged


def _chi_w_per_m(section: dict[str, Any]) -> float:
    if "chi_w_per_m" in section and "chi_dbm_per_m" in section:
        raise ConfigurationError("give chi_w_per_m or chi_dbm_per_m, not both")
    if "chi_w_per_m" in section:
        return float(section.pop("chi_w_per_m"))
    if "chi_dbm_per_m" in section:
        return dbm_to_watts(float(section.pop("chi_dbm_per_m")))
    raise ConfigurationError("chi is not configured")


def _axis(values: Any, cast: type) -> tuple[Any, ...] | None:
    return None if values is None else tuple(cast(v) for v in values)


def _strategy(name: str) -> Strategy:
    try:
        return Strategy(name)
    except ValueError as exc:
        choices = ", ".join(s.value for s in Strategy)
        raise ConfigurationError(
            f"unknown strategy '{name}' (choose from {choices})"
        ) from exc


def build_config(
    document: Mapping[str, Any], source: Path | None = None
) -> Config:
    """
    Validate a configuration document merged over the packaged defaults.

    :param document: Parsed TOML (may be partial)
    :param source: File the document came from
    :returns: The configuration
    :raises ConfigurationError: On unknown keys or invalid values
    """
    with open(get_data_file(), "rb") as f:
        defaults = tomllib.load(f)
    data = _merge(defaults, document)
    try:
        clustering = dict(data["clustering"])
        chi = _chi_w_per_m(clustering)
        learning = dict(data["learning"])
        scenario = dict(data["scenario"])
        run = dict(data["run"])
        sweep = dict(data["sweep"])
        return Config(
            network=NetworkConfig(**data["network"]),
            macro=TierConfig(**data["macro"]),
            small=TierConfig(**data["small"]),
            geometry=GeometryConfig(**data["geometry"]),
            clustering=ClusteringConfig(**clustering, chi_w_per_m=chi),
            learning=LearningConfig(
                kappa=float(learning["kappa"]),
                exponents=tuple(float(x) for x in learning["exponents"]),  # type: ignore[arg-type]
                exponent_assignment=ExponentAssignment(
                    learning["exponent_assignment"]
                ),
                power_levels=int(learning["power_levels"]),
                load_estimate_exponent=float(
                    learning["load_estimate_exponent"]
                ),
            ),
            scenario=ScenarioConfig(
                n_sbs=int(scenario["n_sbs"]),
                n_ue=int(scenario["n_ue"]),
                base_stations=tuple(
                    StationLayout(BSKind(s["kind"]), float(s["x"]), float(s["y"]))
                    for s in scenario.get("base_station", [])
                ),
                users=tuple(
                    UserLayout(
                        float(u["x"]),
                        float(u["y"]),
                        u.get("traffic_influx_bps"),
                    )
                    for u in scenario.get("user", [])
                ),
            ),
            run=RunConfig(
                strategy=_strategy(run["strategy"]),
                slots=int(run["slots"]),
                seeds=tuple(int(s) for s in run["seeds"]),
                workers=int(run["workers"]),
            ),
            sweep=SweepConfig(
                strategies=tuple(_strategy(s) for s in sweep["strategies"]),
                n_ue=_axis(sweep.get("n_ue"), int),
                epsilon_d_m=_axis(sweep.get("epsilon_d_m"), float),
                theta=_axis(sweep.get("theta"), float),
                chi_w_per_m=_axis(sweep.get("chi_w_per_m"), float),
            ),
            source=source,
        )
    except ConfigurationError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigurationError(f"invalid configuration: {exc}") from exc


def load_config(path: Path | str | None = None) -> Config:
    """
    Load a configuration file, or the packaged defaults when ``path`` is None.

    :param path: TOML file
    :returns: The configuration
    :raises FileNotFoundError: If the file does not exist
    :raises ConfigurationError: If the file is not valid TOML or invalid
    """
    if path is None:
        return build_config({})
    path = Path(path)
    with open(path, "rb") as f:
        try:
            document = tomllib.load(f)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigurationError(f"{path}: {exc}") from exc
    logger.info("loaded configuration from %s", path)
    return build_config(document, path)

