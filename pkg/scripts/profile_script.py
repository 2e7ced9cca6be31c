#!/usr/bin/env python3

import cProfile
import pstats
import sys
from pstats import SortKey

import numpy as np

from pycellsleep.core.config import load_config
from pycellsleep.core.harness import run_strategy, scenario_for
from pycellsleep.core.simulation import Strategy

# Supported strategies
SUPPORTED_STRATEGIES: dict[str, Strategy] = {s.value: s for s in Strategy}


def main() -> None:
    if len(sys.argv) != 3:
        print(
            "Usage: python profile_script.py <strategy> <slots>",
            file=sys.stderr,
        )
        supported = ", ".join(SUPPORTED_STRATEGIES.keys())
        print(f"Supported strategies: {supported}", file=sys.stderr)
        sys.exit(1)

    strategy_name = sys.argv[1]
    if strategy_name not in SUPPORTED_STRATEGIES:
        print(f"Unsupported strategy: {strategy_name}", file=sys.stderr)
        supported = ", ".join(SUPPORTED_STRATEGIES.keys())
        print(f"Supported strategies: {supported}", file=sys.stderr)
        sys.exit(1)

    slots = int(sys.argv[2])
    strategy = SUPPORTED_STRATEGIES[strategy_name]

    config = load_config()
    seed = config.run.seeds[0]
    scenario = scenario_for(config, seed)
    settings = config.simulation_settings(strategy)

    # Define the simulation function
    def run_simulation() -> None:
        rng = np.random.default_rng([seed, 1])
        run_strategy(scenario, settings, slots, rng, seed)

    # Make it available in global scope for cProfile
    globals()["run_simulation"] = run_simulation

    profile_filename = f"profile_{strategy_name}_{slots}.prof"
    cProfile.run("run_simulation()", profile_filename)

    # Print stats
    p = pstats.Stats(profile_filename)
    p.sort_stats(SortKey.CUMULATIVE).print_stats(20)


if __name__ == "__main__":
    main()
