"""
Similarity graph over base stations.

Two base stations are neighbours when they are at most epsilon_d apart. On
every edge the graph carries a Gaussian distance similarity, a load
dissimilarity weight (which grows with the load difference) and their
geometric combination, the joint similarity. Off-edge entries are zero for
every value of the trade-off parameter theta.

The joint similarity is also a Gaussian kernel on a three-coordinate
embedding of (position, load) whose third coordinate enters the squared
distance with a negative sign; :func:`signed_embedding` and
:func:`embedding_similarity` expose that form.
"""

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import InvalidArgumentError

# Scale of the signed embedding; it cancels in every identity.
EMBEDDING_SCALE = 1.0


@dataclass(frozen=True)
class SimilarityParameters:
    """Parameters of the similarity graph."""

    neighborhood_range: float = 250.0
    distance_width: float = 300.0
    load_width: float = 1.0
    theta: float = 0.5

    def __post_init__(self) -> None:
        if self.neighborhood_range < 0:
            raise InvalidArgumentError("epsilon_d must be non-negative")
        if self.distance_width <= 0 or self.load_width <= 0:
            raise InvalidArgumentError("sigma_d and sigma_l must be positive")
        if not 0.0 <= self.theta <= 1.0:
            raise InvalidArgumentError("theta must lie in [0, 1]")


@dataclass(frozen=True)
class SimilarityGraph:
    """
    Epsilon_d-neighbourhood graph with its similarity matrices.

    ``distance`` and ``load`` have unit diagonals (their formulas at zero
    difference); ``joint`` has a zero diagonal so that it can be used
    directly as the weight matrix of a graph Laplacian.
    """

    adjacency: NDArray[np.bool_]
    distance: NDArray[np.float64]
    load: NDArray[np.float64]
    joint: NDArray[np.float64]
    params: SimilarityParameters

    @property
    def n_nodes(self) -> int:
        return int(self.adjacency.shape[0])

    def neighborhood(self, b: int) -> frozenset[int]:
        """Self-inclusive neighbourhood N_b."""
        return frozenset(np.flatnonzero(self.adjacency[b]).tolist()) | {b}

    @property
    def neighborhood_sizes(self) -> NDArray[np.int_]:
        """|N_b| for every base station (always >= 1)."""
        return np.asarray(self.adjacency.sum(axis=1) + 1, dtype=int)

    def neighbors(self, b: int) -> list[int]:
        """Adjacent base stations of ``b``, excluding ``b`` itself."""
        return [int(i) for i in np.flatnonzero(self.adjacency[b])]


def pairwise_distances(positions: ArrayLike) -> NDArray[np.float64]:
    """Euclidean distance matrix between 2D positions."""
    pos = np.asarray(positions, dtype=float).reshape(-1, 2)
    delta = pos[:, np.newaxis, :] - pos[np.newaxis, :, :]
    return np.asarray(np.hypot(delta[..., 0], delta[..., 1]))


def build_neighborhood(
    positions: ArrayLike, neighborhood_range: float
) -> tuple[NDArray[np.bool_], list[frozenset[int]]]:
    """
    Epsilon_d-neighbourhood adjacency and self-inclusive neighbour sets.

    :param positions: Base-station positions, shape (|B|, 2)
    :param neighborhood_range: epsilon_d in metres (boundary inclusive)
    :returns: Tuple of (adjacency matrix without self-loops, N_b per BS)
    """
    if neighborhood_range < 0:
        raise InvalidArgumentError("epsilon_d must be non-negative")
    dist = pairwise_distances(positions)
    adjacency = (dist > 0) & (dist <= neighborhood_range)
    neighborhoods = [
        frozenset(np.flatnonzero(row).tolist()) | {b}
        for b, row in enumerate(adjacency)
    ]
    return adjacency, neighborhoods


def distance_similarity(
    y_b: ArrayLike,
    y_other: ArrayLike,
    neighborhood_range: float,
    distance_width: float,
) -> float:
    """
    Gaussian distance similarity, zero beyond the neighbourhood range.

    :param y_b: Position of the first base station
    :param y_other: Position of the second base station
    :param neighborhood_range: epsilon_d in metres
    :param distance_width: sigma_d in metres
    :returns: exp(-d^2 / (2 sigma_d^2)) if d <= epsilon_d, else 0
    """
    if distance_width <= 0:
        raise InvalidArgumentError("sigma_d must be positive")
    d = float(np.hypot(*(np.asarray(y_b, float) - np.asarray(y_other, float))))
    if d > neighborhood_range:
        return 0.0
    return math.exp(-(d**2) / (2.0 * distance_width**2))


def load_similarity(rho_b: float, rho_other: float, load_width: float) -> float:
    """
    Load dissimilarity weight; it grows with the load difference.

    :param rho_b: Load of the first base station
    :param rho_other: Load of the second base station
    :param load_width: sigma_l
    :returns: exp(+(rho_b - rho_other)^2 / (2 sigma_l^2))
    """
    if load_width <= 0:
        raise InvalidArgumentError("sigma_l must be positive")
    return math.exp((rho_b - rho_other) ** 2 / (2.0 * load_width**2))


def joint_similarity(
    s_distance: ArrayLike, s_load: ArrayLike, theta: float
) -> NDArray[np.float64]:
    """
    Joint similarity s = (s^d)^theta * (s^l)^(1 - theta).

    Zero whenever s^d is zero, including theta = 0 (0^0 is taken as 0).

    :param s_distance: Distance similarity (scalar or array)
    :param s_load: Load similarity (scalar or array)
    :param theta: Trade-off in [0, 1]
    :returns: Joint similarity with the broadcast shape of the inputs
    """
    if not 0.0 <= theta <= 1.0:
        raise InvalidArgumentError("theta must lie in [0, 1]")
    sd = np.asarray(s_distance, dtype=float)
    sl = np.asarray(s_load, dtype=float)
    on_edge = sd > 0
    safe = np.where(on_edge, sd, 1.0)
    return np.asarray(np.where(on_edge, safe**theta * sl ** (1.0 - theta), 0.0))


def build_similarity_graph(
    positions: ArrayLike, loads: ArrayLike, params: SimilarityParameters
) -> SimilarityGraph:
    """
    Build the neighbourhood graph and all similarity matrices.

    :param positions: Base-station positions, shape (|B|, 2)
    :param loads: Load (or load estimate) per base station
    :param params: Graph parameters
    :returns: The similarity graph
    """
    rho = np.asarray(loads, dtype=float)
    dist = pairwise_distances(positions)
    adjacency, _ = build_neighborhood(positions, params.neighborhood_range)
    within = dist <= params.neighborhood_range
    s_distance = np.where(
        within, np.exp(-(dist**2) / (2.0 * params.distance_width**2)), 0.0
    )
    delta = rho[:, np.newaxis] - rho[np.newaxis, :]
    s_load = np.exp(delta**2 / (2.0 * params.load_width**2))
    joint = joint_similarity(
        np.where(adjacency, s_distance, 0.0), s_load, params.theta
    )
    return SimilarityGraph(
        adjacency=adjacency,
        distance=s_distance,
        load=s_load,
        joint=joint,
        params=params,
    )


def signed_embedding(
    positions: ArrayLike,
    loads: ArrayLike,
    params: SimilarityParameters,
    scale: float = EMBEDDING_SCALE,
) -> NDArray[np.float64]:
    """
    Three-coordinate embedding whose Gaussian kernel is the joint similarity.

    The third coordinate is imaginary in the kernel: its squared difference
    is subtracted, see :func:`embedding_similarity`.

    :param positions: Base-station positions, shape (|B|, 2)
    :param loads: Loads, shape (|B|,)
    :param params: Graph parameters (theta, sigma_d, sigma_l)
    :param scale: Arbitrary positive scale sigma
    :returns: Embedding, shape (|B|, 3)
    """
    pos = np.asarray(positions, dtype=float).reshape(-1, 2)
    rho = np.asarray(loads, dtype=float)
    spatial = math.sqrt(params.theta) * scale / params.distance_width * pos
    load_axis = math.sqrt(1.0 - params.theta) * scale / params.load_width * rho
    return np.column_stack([spatial, load_axis])


def embedding_similarity(
    zeta_b: ArrayLike, zeta_other: ArrayLike, scale: float = EMBEDDING_SCALE
) -> float:
    """
    Gaussian kernel on the signed embedding.

    :param zeta_b: Embedding of the first base station
    :param zeta_other: Embedding of the second base station
    :param scale: The scale used to build the embedding
    :returns: exp(-(dz1^2 + dz2^2 - dz3^2) / (2 scale^2))
    """
    delta = np.asarray(zeta_b, float) - np.asarray(zeta_other, float)
    signed = delta[0] ** 2 + delta[1] ** 2 - delta[2] ** 2
    return math.exp(-signed / (2.0 * scale**2))


def real_embedding(
    positions: ArrayLike, loads: ArrayLike, params: SimilarityParameters
) -> NDArray[np.float64]:
    """
    Real-valued embedding used by k-means.

    Same coordinates as :func:`signed_embedding` with a real third axis, so
    k-means groups neighbours of similar load; a negative squared term has
    no place in Lloyd's algorithm.

    :param positions: Base-station positions, shape (|B|, 2)
    :param loads: Loads, shape (|B|,)
    :param params: Graph parameters
    :returns: Embedding, shape (|B|, 3)
    """
    return signed_embedding(positions, loads, params)


def write_similarity_csv(graph: SimilarityGraph, path: Path | str) -> None:
    """
    Dump the joint similarity matrix as CSV, rows and columns in id order.

    :param graph: Similarity graph
    :param path: Output file
    """
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["bs"] + [str(b) for b in range(graph.n_nodes)])
        for b, row in enumerate(graph.joint):
            writer.writerow([b] + [f"{v:.17e}" for v in row])
