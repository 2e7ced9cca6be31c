"""
Load-aware UE association and moving-average load estimation.

Each UE picks the anchor base station maximizing (1 - rho_hat_b)^n * P^Rx_b,
where rho_hat_b is the load estimate the base station advertises. The
estimates follow an exponentially weighted moving average with a decaying
rate, so they converge to the time-average load.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .schedules import DecayingRate

logger = logging.getLogger(__name__)

UNSERVED = -1

DEFAULT_LOAD_EXPONENT = 0.9


def received_power(
    gains: NDArray[np.float64],
    powers: NDArray[np.float64],
    indicators: NDArray[np.int_],
) -> NDArray[np.float64]:
    """
    Received power P_b * I_b * h_b(x) for every (BS, UE) pair.

    :param gains: Channel gains, shape (|B|, |M|)
    :param powers: Transmit powers, shape (|B|,)
    :param indicators: ON/OFF indicators, shape (|B|,)
    :returns: Received powers in watts, shape (|B|, |M|)
    """
    return np.asarray((powers * indicators)[:, np.newaxis] * gains)


def associate_ues(
    gains: NDArray[np.float64],
    powers: NDArray[np.float64],
    indicators: NDArray[np.int_],
    load_estimates: NDArray[np.float64],
    load_exponent: float,
) -> NDArray[np.int_]:
    """
    Select the anchor base station of every UE.

    Ties go to the lowest base-station id. When every ON base station
    advertises a full load (all scores are zero for n > 0), the UE falls back
    to the strongest received power. A UE that receives no power at all is
    unserved.

    :param gains: Channel gains, shape (|B|, |M|)
    :param powers: Transmit powers, shape (|B|,)
    :param indicators: ON/OFF indicators, shape (|B|,)
    :param load_estimates: Advertised load estimates, shape (|B|,)
    :param load_exponent: Exponent n weighting the load
    :returns: Anchor id per UE, ``UNSERVED`` (-1) for unserved UEs
    """
    rx = received_power(gains, powers, indicators)
    if rx.shape[1] == 0:
        return np.zeros(0, dtype=int)
    weight = np.clip(1.0 - load_estimates, 0.0, 1.0) ** load_exponent
    scores = weight[:, np.newaxis] * rx
    ue_index = np.arange(rx.shape[1])
    anchors = np.argmax(scores, axis=0)
    best = scores[anchors, ue_index]
    strongest = np.argmax(rx, axis=0)
    reachable = rx[strongest, ue_index] > 0
    anchors = np.where(best > 0, anchors, np.where(reachable, strongest, UNSERVED))
    unserved = int(np.count_nonzero(anchors == UNSERVED))
    if unserved:
        logger.debug("%d UE(s) without any ON base station", unserved)
    return anchors.astype(int)


def nominal_anchors(
    gains: NDArray[np.float64], max_power: NDArray[np.float64]
) -> NDArray[np.int_]:
    """
    Base station each UE would anchor to if every base station were ON.

    Unserved UEs are charged to the cluster of this base station.

    :param gains: Channel gains, shape (|B|, |M|)
    :param max_power: Maximum transmit powers, shape (|B|,)
    :returns: Base-station id per UE
    """
    return np.argmax(max_power[:, np.newaxis] * gains, axis=0).astype(int)


def update_load_estimate(
    previous: ArrayLike, actual: ArrayLike, rate: float
) -> NDArray[np.float64]:
    """
    One step of the moving time-average load estimate.

    :param previous: Previous estimate rho_hat(t-1)
    :param actual: Measured load rho(t-1)
    :param rate: Learning rate nu(t) in [0, 1]
    :returns: rho_hat(t) = nu * rho + (1 - nu) * rho_hat(t-1)
    """
    if not 0.0 <= rate <= 1.0:
        raise ValueError(f"learning rate must lie in [0, 1], got {rate}")
    prev = np.asarray(previous, dtype=float)
    return np.asarray(rate * np.asarray(actual, dtype=float) + (1.0 - rate) * prev)


@dataclass
class LoadEstimator:
    """Per-base-station load estimates advertised for association."""

    estimates: NDArray[np.float64]
    schedule: DecayingRate = field(
        default_factory=lambda: DecayingRate(DEFAULT_LOAD_EXPONENT)
    )

    @classmethod
    def initial(
        cls,
        n_bs: int,
        preferred_load: float,
        exponent: float = DEFAULT_LOAD_EXPONENT,
    ) -> "LoadEstimator":
        """
        Create an estimator starting from the preferred load.

        :param n_bs: Number of base stations
        :param preferred_load: Initial estimate rho^Pref
        :param exponent: Exponent of the decaying rate nu(t)
        :returns: A fresh estimator
        """
        return cls(np.full(n_bs, preferred_load), DecayingRate(exponent))

    def update(self, actual: ArrayLike, t: int) -> NDArray[np.float64]:
        """
        Fold the loads measured in slot ``t`` into the estimates.

        :param actual: Measured loads
        :param t: Slot index, t >= 1
        :returns: The new estimates
        """
        self.estimates = update_load_estimate(
            self.estimates, actual, self.schedule(t)
        )
        return self.estimates
