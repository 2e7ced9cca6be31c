"""
Experiment harness: scenario generation, strategy runs, metrics and sweeps.

A run simulates one strategy on one scenario for one seed and condenses the
slot stream into a :class:`MetricsRecord`, averaging over the second half of
the slots. A sweep runs the cross product of its axes, strategies and seeds
in a pool of worker processes and writes:

* ``runs.csv``        one row per run,
* ``summary.json``    mean and sample standard deviation across seeds, and
  reductions relative to the classical baseline,
* ``cdf_energy.csv``  per-BS time-average power samples,
* ``cdf_load.csv``    per-BS time-average load samples,
* ``clusters.csv``    number and mean size of clusters at every epoch.
"""

import csv
import itertools
import json
import logging
import math
import os
from collections import defaultdict
from collections.abc import Callable, Iterable, Sequence
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Any, NamedTuple, TextIO

import numpy as np
from numpy.typing import NDArray

from .config import Config, GeometryConfig
from .errors import ScenarioGenerationError
from .network import (
    BaseStationSpec,
    BSKind,
    NetworkScenario,
    UserSpec,
    expected_flows,
)
from .simulation import (
    SimulationResult,
    SimulationSettings,
    SlotRecord,
    Strategy,
    run_simulation,
)
from .similarity import pairwise_distances

logger = logging.getLogger(__name__)

RUN_FIELDS = (
    "strategy",
    "n_ue",
    "epsilon_d_m",
    "theta",
    "chi_w_per_m",
    "seed",
    "status",
    "n_bs",
    "slots",
    "avg_cost_per_bs",
    "avg_energy_per_bs",
    "avg_load_per_bs",
    "off_fraction",
    "unserved_fraction",
    "overload_fraction",
    "network_cost",
    "avg_expected_flows",
    "mean_clusters",
    "mean_cluster_size",
    "error",
)

SUMMARY_METRICS = (
    "avg_cost_per_bs",
    "avg_energy_per_bs",
    "avg_load_per_bs",
    "off_fraction",
    "unserved_fraction",
    "network_cost",
    "avg_expected_flows",
    "mean_clusters",
    "mean_cluster_size",
)


def sample_disc(
    rng: np.random.Generator, radius: float
) -> tuple[float, float]:
    """Uniform point in a disc of the given radius around the origin."""
    r = radius * math.sqrt(rng.random())
    phi = 2.0 * math.pi * rng.random()
    return r * math.cos(phi), r * math.sin(phi)


def _place(
    rng: np.random.Generator,
    radius: float,
    keep_away: Sequence[tuple[Sequence[tuple[float, float]], float]],
    max_attempts: int,
    what: str,
) -> tuple[float, float]:
    for _ in range(max_attempts):
        p = sample_disc(rng, radius)
        if all(
            math.dist(p, q) >= min_distance
            for points, min_distance in keep_away
            for q in points
        ):
            return p
    raise ScenarioGenerationError(
        f"could not place {what} after {max_attempts} attempts; "
        "the deployment is too dense for the minimum distances"
    )


def generate_layout(
    n_sbs: int,
    n_ue: int,
    geometry: GeometryConfig,
    rng: np.random.Generator,
) -> tuple[list[tuple[float, float]], list[tuple[float, float]]]:
    """
    Rejection-sample SBS and UE positions around a macro BS at the origin.

    :param n_sbs: Number of small base stations
    :param n_ue: Number of UEs
    :param geometry: Disc radius and minimum distances
    :param rng: Random generator
    :returns: Tuple of (SBS positions, UE positions)
    :raises ScenarioGenerationError: If a node cannot be placed
    """
    mbs = [(0.0, 0.0)]
    sbs: list[tuple[float, float]] = []
    for i in range(n_sbs):
        sbs.append(
            _place(
                rng,
                geometry.area_radius_m,
                [(mbs, geometry.min_mbs_sbs_m), (sbs, geometry.min_sbs_sbs_m)],
                geometry.max_attempts,
                f"SBS {i}",
            )
        )
    ues = [
        _place(
            rng,
            geometry.area_radius_m,
            [(mbs, geometry.min_mbs_ue_m), (sbs, geometry.min_sbs_ue_m)],
            geometry.max_attempts,
            f"UE {m}",
        )
        for m in range(n_ue)
    ]
    return sbs, ues


def build_scenario(
    config: Config,
    stations: Sequence[tuple[BSKind, tuple[float, float]]],
    users: Sequence[tuple[tuple[float, float], float]],
    seed: int = 0,
) -> NetworkScenario:
    """
    Assemble a scenario from placed nodes and the configured parameters.

    :param config: Configuration
    :param stations: (kind, position) of every base station, in id order
    :param users: (position, traffic influx) of every UE, in id order
    :param seed: Seed recorded on the scenario
    :returns: The scenario
    """
    chi = config.clustering.chi_w_per_m
    bs_list = tuple(
        BaseStationSpec(
            id=b,
            kind=kind,
            position=position,
            max_power=config.tier(kind).max_power,
            base_power=config.tier(kind).base_power,
            amplifier_efficiency=config.tier(kind).amplifier_efficiency,
            sleep_fraction=config.tier(kind).sleep_fraction,
            overhead_sensitivity=chi,
        )
        for b, (kind, position) in enumerate(stations)
    )
    ue_list = tuple(
        UserSpec(id=m, position=position, traffic_influx=influx)
        for m, (position, influx) in enumerate(users)
    )
    net = config.network
    return NetworkScenario(
        bs_list=bs_list,
        ue_list=ue_list,
        bandwidth=net.bandwidth_hz,
        noise_density_dbm_hz=net.noise_density_dbm_hz,
        load_exponent=net.load_exponent,
        energy_weight=net.energy_weight,
        load_weight=net.load_weight,
        preferred_load=net.preferred_load,
        cluster_update_interval=config.clustering.update_interval,
        rng_seed=seed,
        carrier_frequency=net.carrier_frequency_hz,
        mbs_controllable=net.mbs_controllable,
    )


def generate_scenario(
    config: Config,
    rng: np.random.Generator,
    n_sbs: int | None = None,
    n_ue: int | None = None,
    seed: int = 0,
) -> NetworkScenario:
    """
    One macro BS at the origin with SBSs and UEs uniform in the disc.

    :param config: Configuration (geometry and Table-I parameters)
    :param rng: Random generator
    :param n_sbs: Number of SBSs (configured value if None)
    :param n_ue: Number of UEs (configured value if None)
    :param seed: Seed recorded on the scenario
    :returns: The scenario
    :raises ScenarioGenerationError: If the minimum distances cannot be met
    """
    n_sbs = config.scenario.n_sbs if n_sbs is None else n_sbs
    n_ue = config.scenario.n_ue if n_ue is None else n_ue
    sbs, ues = generate_layout(n_sbs, n_ue, config.geometry, rng)
    stations = [(BSKind.MBS, (0.0, 0.0))] + [(BSKind.SBS, p) for p in sbs]
    influx = config.network.traffic_influx_bps
    return build_scenario(config, stations, [(p, influx) for p in ues], seed)


def explicit_scenario(config: Config, seed: int = 0) -> NetworkScenario:
    """Scenario from the base stations and users listed in the configuration."""
    layout = config.scenario
    stations = [(s.kind, (s.x, s.y)) for s in layout.base_stations]
    users = [
        (
            (u.x, u.y),
            u.traffic_influx_bps or config.network.traffic_influx_bps,
        )
        for u in layout.users
    ]
    return build_scenario(config, stations, users, seed)


def scenario_for(
    config: Config, seed: int, n_ue: int | None = None
) -> NetworkScenario:
    """Explicit scenario if configured, else one generated from ``seed``."""
    if config.scenario.is_explicit:
        return explicit_scenario(config, seed)
    return generate_scenario(
        config, np.random.default_rng(seed), n_ue=n_ue, seed=seed
    )


def min_distance_violations(
    scenario: NetworkScenario, geometry: GeometryConfig
) -> int:
    """Number of node pairs closer than the configured minimum distance."""
    macro = scenario.is_macro
    bs_bs = pairwise_distances(scenario.bs_positions)
    limit = np.where(
        macro[:, np.newaxis] | macro[np.newaxis, :],
        geometry.min_mbs_sbs_m,
        geometry.min_sbs_sbs_m,
    )
    upper = np.triu(np.ones_like(bs_bs, dtype=bool), k=1)
    violations = int(np.sum((bs_bs < limit) & upper))
    ue_limit = np.where(
        macro[:, np.newaxis], geometry.min_mbs_ue_m, geometry.min_sbs_ue_m
    )
    violations += int(np.sum(scenario.distances < ue_limit))
    return violations


@dataclass
class MetricsRecord:
    """Condensed outcome of one run."""

    strategy: str
    seed: int
    n_bs: int
    n_ue: int
    slots: int
    avg_cost_per_bs: float = math.nan
    avg_energy_per_bs: float = math.nan
    avg_load_per_bs: float = math.nan
    off_fraction: float = math.nan
    unserved_fraction: float = math.nan
    overload_fraction: float = math.nan
    network_cost: float = math.nan
    avg_expected_flows: float = math.nan
    mean_clusters: float = math.nan
    mean_cluster_size: float = math.nan
    energy_samples: list[float] = field(default_factory=list)
    load_samples: list[float] = field(default_factory=list)
    epochs: list[tuple[int, int, float]] = field(default_factory=list)
    epsilon_d_m: float = math.nan
    theta: float = math.nan
    chi_w_per_m: float = math.nan
    status: str = "ok"
    error: str = ""

    def row(self) -> dict[str, Any]:
        """Fields written to ``runs.csv``."""
        values = asdict(self)
        return {name: values[name] for name in RUN_FIELDS}


class MetricsAccumulator:
    """
    Streaming aggregation of slot records over the second half of a run.

    Slots t > slots // 2 are averaged; cluster epochs are recorded for the
    whole run.
    """

    def __init__(self, scenario: NetworkScenario, slots: int) -> None:
        self.scenario = scenario
        self.slots = slots
        self.window_start = slots // 2
        n = scenario.n_bs
        self.count = 0
        self.cost = np.zeros(n)
        self.energy = np.zeros(n)
        self.load = np.zeros(n)
        self.off = 0.0
        self.unserved = 0
        self.overload = 0
        self.network_cost = 0.0
        self.clusters = 0.0
        self.cluster_size = 0.0
        self.epochs: list[tuple[int, int, float]] = []
        self._new_epoch = True

    def __call__(self, record: SlotRecord) -> None:
        if self._new_epoch:
            self.epochs.append(
                (record.t, record.n_clusters, record.mean_cluster_size)
            )
        self._new_epoch = record.reclustered
        if record.t <= self.window_start:
            return
        self.count += 1
        self.cost += record.costs
        self.energy += record.total_powers
        self.load += record.loads
        small = ~self.scenario.is_macro
        if small.any():
            self.off += float(np.mean(record.indicators[small] == 0))
        self.unserved += record.unserved
        self.overload += int(record.overload.any())
        self.network_cost += record.network_cost
        self.clusters += record.n_clusters
        self.cluster_size += record.mean_cluster_size

    def finish(self, strategy: Strategy, seed: int) -> MetricsRecord:
        """Averages over the window."""
        n = max(self.count, 1)
        energy = self.energy / n
        load = self.load / n
        flows = expected_flows(load)
        n_ue = self.scenario.n_ue
        return MetricsRecord(
            strategy=strategy.value,
            seed=seed,
            n_bs=self.scenario.n_bs,
            n_ue=n_ue,
            slots=self.slots,
            avg_cost_per_bs=float(np.mean(self.cost / n)),
            avg_energy_per_bs=float(np.mean(energy)),
            avg_load_per_bs=float(np.mean(load)),
            off_fraction=self.off / n,
            unserved_fraction=self.unserved / (n * n_ue) if n_ue else 0.0,
            overload_fraction=self.overload / n,
            network_cost=self.network_cost / n,
            avg_expected_flows=float(np.mean(flows)),
            mean_clusters=self.clusters / n,
            mean_cluster_size=self.cluster_size / n,
            energy_samples=energy.tolist(),
            load_samples=load.tolist(),
            epochs=list(self.epochs),
        )


class TraceWriter:
    """Writes one CSV row per slot: actions, utilities and per-BS state."""

    def __init__(self, stream: TextIO, n_bs: int) -> None:
        self.writer = csv.writer(stream)
        header = ["slot", "actions", "utilities"]
        for b in range(n_bs):
            header += [f"load_{b}", f"power_{b}", f"on_{b}"]
        self.writer.writerow(header)

    def __call__(self, record: SlotRecord) -> None:
        row: list[Any] = [
            record.t,
            ";".join(str(a) for a in record.actions),
            ";".join(f"{u:.17e}" for u in record.utilities),
        ]
        for load, power, on in zip(
            record.loads, record.total_powers, record.indicators, strict=True
        ):
            row += [f"{load:.17e}", f"{power:.17e}", int(on)]
        self.writer.writerow(row)


def run_strategy(
    scenario: NetworkScenario,
    settings: SimulationSettings,
    slots: int,
    rng: np.random.Generator,
    seed: int = 0,
    on_slot: Callable[[SlotRecord], None] | None = None,
) -> tuple[MetricsRecord, SimulationResult]:
    """
    Simulate one strategy and condense the slots into metrics.

    :param scenario: Network scenario
    :param settings: Simulation settings (carry the strategy)
    :param slots: Number of slots
    :param rng: Random generator of the run
    :param seed: Seed recorded on the metrics
    :param on_slot: Extra per-slot observer (tracing, progress)
    :returns: Tuple of (metrics, simulation result without slot records)
    """
    accumulator = MetricsAccumulator(scenario, slots)

    def observe(record: SlotRecord) -> None:
        accumulator(record)
        if on_slot is not None:
            on_slot(record)

    result = run_simulation(
        scenario, settings, slots, rng, on_slot=observe, keep_records=False
    )
    return accumulator.finish(settings.strategy, seed), result


def run_baseline_classical(
    scenario: NetworkScenario,
    slots: int,
    settings: SimulationSettings | None = None,
    seed: int = 0,
) -> MetricsRecord:
    """Every base station always ON at full power."""
    settings = replace(
        settings or SimulationSettings(), strategy=Strategy.CLASSICAL
    )
    rng = np.random.default_rng([seed, 1])
    return run_strategy(scenario, settings, slots, rng, seed)[0]


def run_baseline_random(
    scenario: NetworkScenario,
    slots: int,
    rng: np.random.Generator,
    settings: SimulationSettings | None = None,
    seed: int = 0,
) -> MetricsRecord:
    """Every SBS ON with probability 1/2 in every slot, the MBS always ON."""
    settings = replace(settings or SimulationSettings(), strategy=Strategy.RANDOM)
    return run_strategy(scenario, settings, slots, rng, seed)[0]


class SweepCell(NamedTuple):
    """One run of a sweep."""

    strategy: Strategy
    n_ue: int
    epsilon_d_m: float
    theta: float
    chi_w_per_m: float
    seed: int


def sweep_cells(config: Config) -> list[SweepCell]:
    """Cross product of sweep axes, strategies and seeds, in a fixed order."""
    sweep = config.sweep
    clustering = config.clustering
    axes = itertools.product(
        sweep.n_ue or (config.scenario.n_ue,),
        sweep.epsilon_d_m or (clustering.epsilon_d_m,),
        sweep.theta or (clustering.theta,),
        sweep.chi_w_per_m or (clustering.chi_w_per_m,),
        sweep.strategies,
        config.run.seeds,
    )
    return [
        SweepCell(strategy, n_ue, eps, theta, chi, seed)
        for n_ue, eps, theta, chi, strategy, seed in axes
    ]


def run_cell(config: Config, cell: SweepCell) -> MetricsRecord:
    """
    Run one sweep cell; failures are recorded, not raised.

    The scenario depends only on the seed and the number of UEs, so every
    strategy of a seed runs on the same geometry.
    """
    cell_config = config.with_overrides(
        clustering={
            "epsilon_d_m": cell.epsilon_d_m,
            "theta": cell.theta,
            "chi_w_per_m": cell.chi_w_per_m,
        }
    )
    tags = {
        "epsilon_d_m": cell.epsilon_d_m,
        "theta": cell.theta,
        "chi_w_per_m": cell.chi_w_per_m,
    }
    try:
        scenario = scenario_for(cell_config, cell.seed, cell.n_ue)
        settings = cell_config.simulation_settings(cell.strategy)
        rng = np.random.default_rng([cell.seed, 1])
        metrics, _ = run_strategy(
            scenario, settings, config.run.slots, rng, cell.seed
        )
        return replace(metrics, **tags)
    except Exception as exc:  # a failed cell must not abort the sweep
        logger.warning("sweep cell %s failed: %s", cell, exc)
        return MetricsRecord(
            strategy=cell.strategy.value,
            seed=cell.seed,
            n_bs=0,
            n_ue=cell.n_ue,
            slots=config.run.slots,
            status="failed",
            error=f"{type(exc).__name__}: {exc}",
            **tags,
        )


@dataclass
class ExperimentResult:
    records: list[MetricsRecord]
    summary: dict[str, Any]
    out_dir: Path

    @property
    def failed(self) -> int:
        return sum(1 for r in self.records if r.status != "ok")


def run_experiment(
    config: Config,
    out_dir: Path | str,
    workers: int | None = None,
    on_done: Callable[[MetricsRecord], None] | None = None,
) -> ExperimentResult:
    """
    Run every sweep cell and write the output files.

    :param config: Configuration with run and sweep sections
    :param out_dir: Output directory (created if needed)
    :param workers: Worker processes (configured value if None); 0 uses
        every CPU, 1 runs in-process
    :param on_done: Called with each finished record (progress)
    :returns: Records in cell order and the summary
    """
    cells = sweep_cells(config)
    if workers is None:
        workers = config.run.workers
    workers = workers or os.cpu_count() or 1
    logger.info("sweep of %d run(s) on %d worker(s)", len(cells), workers)
    records: list[MetricsRecord | None] = [None] * len(cells)
    if workers == 1:
        for i, cell in enumerate(cells):
            records[i] = run_cell(config, cell)
            if on_done is not None:
                on_done(records[i])  # type: ignore[arg-type]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {
                pool.submit(run_cell, config, cell): i
                for i, cell in enumerate(cells)
            }
            for future in as_completed(futures):
                record = future.result()
                records[futures[future]] = record
                if on_done is not None:
                    on_done(record)
    done = [r for r in records if r is not None]
    out = Path(out_dir)
    summary = write_outputs(done, out)
    return ExperimentResult(done, summary, out)


def _finite(value: float) -> float | None:
    return value if math.isfinite(value) else None


def _group_key(record: MetricsRecord) -> tuple[Any, ...]:
    return (
        record.n_ue,
        record.epsilon_d_m,
        record.theta,
        record.chi_w_per_m,
    )


def summarize(records: Iterable[MetricsRecord]) -> dict[str, Any]:
    """
    Mean and sample standard deviation across seeds of every metric, per
    strategy and sweep point, with reductions relative to classical.

    :param records: Run records
    :returns: JSON-ready summary
    """
    groups: dict[tuple[Any, ...], list[MetricsRecord]] = defaultdict(list)
    failed: dict[tuple[Any, ...], int] = defaultdict(int)
    for r in records:
        key = (r.strategy, *_group_key(r))
        if r.status == "ok":
            groups[key].append(r)
        else:
            failed[key] += 1

    means: dict[tuple[Any, ...], dict[str, float]] = {}
    rows = []
    for key in sorted(set(groups) | set(failed), key=str):
        runs = groups.get(key, [])
        strategy, n_ue, eps, theta, chi = key
        stats = {}
        for metric in SUMMARY_METRICS:
            values = np.array([getattr(r, metric) for r in runs], dtype=float)
            mean = float(np.mean(values)) if values.size else math.nan
            std = float(np.std(values, ddof=1)) if values.size > 1 else math.nan
            stats[metric] = {"mean": _finite(mean), "std": _finite(std)}
        means[key] = {m: stats[m]["mean"] for m in SUMMARY_METRICS}  # type: ignore[misc]
        rows.append(
            {
                "strategy": strategy,
                "n_ue": n_ue,
                "epsilon_d_m": eps,
                "theta": theta,
                "chi_w_per_m": chi,
                "runs": len(runs),
                "failed": failed.get(key, 0),
                "metrics": stats,
            }
        )

    for row in rows:
        base = means.get(
            (
                Strategy.CLASSICAL.value,
                row["n_ue"],
                row["epsilon_d_m"],
                row["theta"],
                row["chi_w_per_m"],
            )
        )
        if base is None:
            continue
        own = means[
            (
                row["strategy"],
                row["n_ue"],
                row["epsilon_d_m"],
                row["theta"],
                row["chi_w_per_m"],
            )
        ]
        reductions = {}
        for label, metric in (
            ("cost", "avg_cost_per_bs"),
            ("energy", "avg_energy_per_bs"),
            ("load", "avg_load_per_bs"),
        ):
            ref, value = base[metric], own[metric]
            reductions[label] = (
                100.0 * (1.0 - value / ref)
                if ref and value is not None
                else None
            )
        row["reduction_vs_classical_percent"] = reductions
    return {"groups": rows}


def write_runs_csv(records: Iterable[MetricsRecord], path: Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=RUN_FIELDS)
        writer.writeheader()
        for record in records:
            writer.writerow(record.row())


def write_cdf_csv(
    records: Iterable[MetricsRecord], path: Path, samples: str
) -> None:
    """
    Per-BS samples for empirical CDFs.

    :param records: Run records
    :param path: Output file
    :param samples: ``"energy"`` or ``"load"``
    """
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["strategy", "n_ue", "seed", "bs", samples])
        for r in records:
            for b, value in enumerate(getattr(r, f"{samples}_samples")):
                writer.writerow([r.strategy, r.n_ue, r.seed, b, f"{value:.17e}"])


def write_clusters_csv(records: Iterable[MetricsRecord], path: Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(
            [
                "strategy",
                "n_ue",
                "epsilon_d_m",
                "theta",
                "seed",
                "slot",
                "n_clusters",
                "mean_cluster_size",
            ]
        )
        for r in records:
            for slot, count, size in r.epochs:
                writer.writerow(
                    [
                        r.strategy,
                        r.n_ue,
                        r.epsilon_d_m,
                        r.theta,
                        r.seed,
                        slot,
                        count,
                        f"{size:.17e}",
                    ]
                )


def write_outputs(
    records: Sequence[MetricsRecord], out_dir: Path
) -> dict[str, Any]:
    """
    Write every output file of a run or sweep into ``out_dir``.

    :returns: The summary written to ``summary.json``
    """
    out_dir.mkdir(parents=True, exist_ok=True)
    write_runs_csv(records, out_dir / "runs.csv")
    summary = summarize(records)
    with open(out_dir / "summary.json", "w", encoding="utf-8") as f:
        json.dump(summary, f, indent=2, sort_keys=True)
        f.write("\n")
    ok = [r for r in records if r.status == "ok"]
    write_cdf_csv(ok, out_dir / "cdf_energy.csv", "energy")
    write_cdf_csv(ok, out_dir / "cdf_load.csv", "load")
    write_clusters_csv(ok, out_dir / "clusters.csv")
    logger.info("wrote %d run(s) to %s", len(records), out_dir)
    return summary
