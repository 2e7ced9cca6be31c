from collections.abc import Sequence

import hypothesis.strategies as st
import numpy as np
from hypothesis.strategies import DrawFn

from pycellsleep.core.network import (
    BaseStationSpec,
    BSKind,
    NetworkScenario,
    UserSpec,
    dbm_to_watts,
)

MBS_MAX_POWER = dbm_to_watts(46.0)
MBS_BASE_POWER = dbm_to_watts(40.0)
SBS_MAX_POWER = dbm_to_watts(30.0)
SBS_BASE_POWER = dbm_to_watts(33.0)
INFLUX = 180e3


def make_bs(
    b: int, kind: BSKind, position: tuple[float, float], chi: float = 0.0
) -> BaseStationSpec:
    """Base station with the default macro or small-cell power model."""
    if kind is BSKind.MBS:
        return BaseStationSpec(
            b, kind, position, MBS_MAX_POWER, MBS_BASE_POWER, 0.2355, 0.5, chi
        )
    return BaseStationSpec(
        b, kind, position, SBS_MAX_POWER, SBS_BASE_POWER, 0.0542, 0.5, chi
    )


def make_scenario(
    sbs_positions: Sequence[tuple[float, float]],
    ue_positions: Sequence[tuple[float, float]],
    with_mbs: bool = True,
    chi: float = 0.0,
    **kwargs: object,
) -> NetworkScenario:
    """Scenario with an optional MBS at the origin followed by the SBSs."""
    stations = [(BSKind.MBS, (0.0, 0.0))] if with_mbs else []
    stations += [(BSKind.SBS, p) for p in sbs_positions]
    bs_list = tuple(make_bs(b, k, p, chi) for b, (k, p) in enumerate(stations))
    ue_list = tuple(
        UserSpec(m, p, INFLUX) for m, p in enumerate(ue_positions)
    )
    return NetworkScenario(bs_list, ue_list, **kwargs)  # type: ignore[arg-type]


@st.composite
def positions_strategy(
    draw: DrawFn, n_min: int = 1, n_max: int = 10, radius: float = 500.0
) -> np.ndarray:
    """Distinct 2D positions in a square of half-width ``radius``."""
    n = draw(st.integers(min_value=n_min, max_value=n_max))
    coords = st.floats(min_value=-radius, max_value=radius)
    points = draw(
        st.lists(
            st.tuples(coords, coords),
            min_size=n,
            max_size=n,
            unique_by=lambda p: (round(p[0]), round(p[1])),
        )
    )
    return np.array(points, dtype=float).reshape(-1, 2)


@st.composite
def probability_vector_strategy(
    draw: DrawFn, n_min: int = 1, n_max: int = 8
) -> np.ndarray:
    """Strictly positive probability vector."""
    n = draw(st.integers(min_value=n_min, max_value=n_max))
    weights = draw(
        st.lists(
            st.floats(min_value=1e-3, max_value=1.0), min_size=n, max_size=n
        )
    )
    w = np.array(weights)
    return w / w.sum()


@st.composite
def cost_matrix_strategy(
    draw: DrawFn, max_rows: int = 4, max_cols: int = 8
) -> np.ndarray:
    """Non-negative scheduling cost matrix."""
    rows = draw(st.integers(min_value=1, max_value=max_rows))
    cols = draw(st.integers(min_value=1, max_value=max_cols))
    values = draw(
        st.lists(
            st.floats(min_value=0.0, max_value=10.0),
            min_size=rows * cols,
            max_size=rows * cols,
        )
    )
    return np.array(values).reshape(rows, cols)
