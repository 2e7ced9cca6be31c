"""
Partitioning base stations into disjoint clusters.

Three methods are available:

* k-means (Lloyd's algorithm) on a real embedding of position and load,
* spectral clustering on the joint-similarity graph Laplacian, with the
  number of clusters chosen at the largest eigengap,
* a decentralized peer-to-peer search in which cluster heads merge with
  their most similar neighbouring cluster, subject to a size cap.

The Laplacian spectrum is computed with an in-repo cyclic Jacobi
eigensolver.

The peer-to-peer protocol is a reconstruction: heads only ever read
similarities of adjacent base stations, propose to the neighbouring cluster
with the highest average similarity, and merge on mutual proposals.
"""

import logging
import math
from collections import defaultdict
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from enum import Enum

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import InvalidArgumentError, NumericalFailureError
from .similarity import (
    SimilarityGraph,
    SimilarityParameters,
    build_similarity_graph,
    real_embedding,
)

logger = logging.getLogger(__name__)

JACOBI_TOLERANCE = 1e-10
JACOBI_MAX_SWEEPS = 100

DEFAULT_MAX_CLUSTER_SIZE = 4
DEFAULT_P2P_ROUNDS = 8
DEFAULT_KMEANS_MAX_ITERS = 100
DEFAULT_KMEANS_RESTARTS = 4


class ClusterMethod(Enum):
    NONE = "none"
    KMEANS = "kmeans"
    SPECTRAL = "spectral"
    P2P = "p2p"


def select_head(members: Iterable[int], load_estimates: ArrayLike) -> int:
    """
    Cluster head: the least-loaded member, ties to the lowest id.

    :param members: Base-station ids of the cluster
    :param load_estimates: Load estimate of every base station
    :returns: Head id
    """
    rho = np.asarray(load_estimates, dtype=float)
    return min(members, key=lambda b: (float(rho[b]), b))


@dataclass(frozen=True)
class ClusterSet:
    """A partition of the base stations into clusters, each with a head."""

    clusters: tuple[frozenset[int], ...]
    heads: tuple[int, ...]
    method: ClusterMethod
    epoch: int = 0

    def __post_init__(self) -> None:
        if len(self.clusters) != len(self.heads):
            raise ValueError("one head per cluster is required")
        seen: set[int] = set()
        for members, head in zip(self.clusters, self.heads, strict=True):
            if not members:
                raise ValueError("clusters must be non-empty")
            if head not in members:
                raise ValueError(f"head {head} is not a cluster member")
            if seen & members:
                raise ValueError("clusters must be disjoint")
            seen |= members

    @classmethod
    def from_labels(
        cls,
        labels: ArrayLike,
        load_estimates: ArrayLike,
        method: ClusterMethod,
        epoch: int = 0,
    ) -> "ClusterSet":
        """
        Build a cluster set from per-base-station labels.

        Clusters are ordered by their smallest member id, so equal partitions
        compare equal regardless of the label values.

        :param labels: Cluster label of each base station
        :param load_estimates: Load estimates used to pick heads
        :param method: Method that produced the labels
        :param epoch: Slot at which the clusters were formed
        :returns: The cluster set
        """
        groups: dict[int, set[int]] = defaultdict(set)
        for b, label in enumerate(np.asarray(labels).tolist()):
            groups[int(label)].add(b)
        clusters = sorted((frozenset(g) for g in groups.values()), key=min)
        heads = tuple(select_head(c, load_estimates) for c in clusters)
        return cls(tuple(clusters), heads, method, epoch)

    @classmethod
    def singletons(
        cls, n_bs: int, method: ClusterMethod = ClusterMethod.NONE, epoch: int = 0
    ) -> "ClusterSet":
        """Every base station in its own cluster."""
        clusters = tuple(frozenset({b}) for b in range(n_bs))
        return cls(clusters, tuple(range(n_bs)), method, epoch)

    @property
    def sizes(self) -> list[int]:
        return [len(c) for c in self.clusters]

    def labels(self, n_bs: int) -> NDArray[np.int_]:
        """Cluster index of every base station."""
        result = np.full(n_bs, -1, dtype=int)
        for i, members in enumerate(self.clusters):
            result[list(members)] = i
        return result

    def members(self, i: int) -> list[int]:
        """Sorted member ids of cluster ``i``."""
        return sorted(self.clusters[i])

    def is_partition_of(self, n_bs: int) -> bool:
        """Whether the clusters cover exactly the ids 0..n_bs-1."""
        covered = set().union(*self.clusters) if self.clusters else set()
        return covered == set(range(n_bs)) and sum(self.sizes) == n_bs


def laplacian(similarity: ArrayLike) -> NDArray[np.float64]:
    """
    Unnormalized graph Laplacian L = D - S.

    The diagonal of ``similarity`` is ignored (no self-loops).

    :param similarity: Symmetric non-negative weight matrix
    :returns: The Laplacian
    """
    s = np.array(similarity, dtype=float)
    np.fill_diagonal(s, 0.0)
    return np.asarray(np.diag(s.sum(axis=1)) - s)


def _off_diagonal_norm(a: NDArray[np.float64]) -> float:
    return float(math.sqrt(max(np.sum(a**2) - np.sum(np.diag(a) ** 2), 0.0)))


def jacobi_eigh(
    matrix: ArrayLike,
    tol: float = JACOBI_TOLERANCE,
    max_sweeps: int = JACOBI_MAX_SWEEPS,
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """
    Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    :param matrix: Symmetric matrix, shape (n, n)
    :param tol: Convergence threshold on the off-diagonal Frobenius norm
    :param max_sweeps: Maximum number of full sweeps
    :returns: Tuple of (eigenvalues ascending, eigenvectors as columns)
    :raises InvalidArgumentError: If the matrix is not square and symmetric
    :raises NumericalFailureError: If the off-diagonal norm is still above
        ``tol`` after ``max_sweeps`` sweeps
    """
    a = np.array(matrix, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise InvalidArgumentError("matrix must be square")
    if not np.allclose(a, a.T, rtol=0.0, atol=1e-12):
        raise InvalidArgumentError("matrix must be symmetric")
    a = (a + a.T) / 2.0
    n = a.shape[0]
    v = np.eye(n)

    sweeps = 0
    off = _off_diagonal_norm(a)
    while off >= tol:
        if sweeps >= max_sweeps:
            raise NumericalFailureError(
                "Jacobi eigensolver did not converge", off, sweeps
            )
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                t = math.copysign(1.0, theta) / (
                    abs(theta) + math.sqrt(theta * theta + 1.0)
                )
                c = 1.0 / math.sqrt(t * t + 1.0)
                s = t * c

                col_p = a[:, p].copy()
                col_q = a[:, q].copy()
                a[:, p] = c * col_p - s * col_q
                a[:, q] = s * col_p + c * col_q

                row_p = a[p, :].copy()
                row_q = a[q, :].copy()
                a[p, :] = c * row_p - s * row_q
                a[q, :] = s * row_p + c * row_q
                a[p, q] = a[q, p] = 0.0

                vec_p = v[:, p].copy()
                vec_q = v[:, q].copy()
                v[:, p] = c * vec_p - s * vec_q
                v[:, q] = s * vec_p + c * vec_q
        sweeps += 1
        off = _off_diagonal_norm(a)

    logger.debug("Jacobi converged after %d sweeps (off=%.3e)", sweeps, off)
    eigenvalues = np.diag(a).copy()
    order = np.argsort(eigenvalues, kind="stable")
    return eigenvalues[order], v[:, order]


def eigengap_k(eigenvalues: Sequence[float] | NDArray[np.float64]) -> int:
    """
    Number of clusters at the largest gap between consecutive eigenvalues.

    :param eigenvalues: At least two eigenvalues (sorted internally)
    :returns: k = argmax_i |v_{i+1} - v_i| for i = 1..n-1; ties to the
        smallest i
    :raises InvalidArgumentError: With fewer than two eigenvalues
    """
    values = np.sort(np.asarray(eigenvalues, dtype=float))
    if values.size < 2:
        raise InvalidArgumentError("eigengap needs at least two eigenvalues")
    return int(np.argmax(np.abs(np.diff(values)))) + 1


@dataclass(frozen=True)
class KMeansResult:
    """Outcome of Lloyd's algorithm."""

    labels: NDArray[np.int_]
    centroids: NDArray[np.float64]
    objective_history: tuple[float, ...]

    @property
    def objective(self) -> float:
        return self.objective_history[-1]


def _sum_of_squares(
    points: NDArray[np.float64],
    labels: NDArray[np.int_],
    centroids: NDArray[np.float64],
) -> float:
    return float(np.sum((points - centroids[labels]) ** 2))


def _plus_plus_seeds(
    points: NDArray[np.float64], k: int, rng: np.random.Generator
) -> NDArray[np.float64]:
    n = points.shape[0]
    chosen = [int(rng.integers(n))]
    for _ in range(1, k):
        d2 = np.min(
            np.sum(
                (points[:, np.newaxis, :] - points[chosen][np.newaxis, :, :])
                ** 2,
                axis=2,
            ),
            axis=1,
        )
        total = d2.sum()
        if total > 0:
            chosen.append(int(rng.choice(n, p=d2 / total)))
        else:
            remaining = [i for i in range(n) if i not in chosen]
            chosen.append(int(rng.choice(remaining)))
    return points[chosen].copy()


def lloyd_kmeans(
    points: ArrayLike,
    k: int,
    rng: np.random.Generator,
    max_iters: int = DEFAULT_KMEANS_MAX_ITERS,
) -> KMeansResult:
    """
    Lloyd's algorithm with k-means++ seeding.

    An empty cluster is re-seeded with the point farthest from its current
    centroid. The sum of squared distances recorded after every iteration is
    non-increasing.

    :param points: Points, shape (n, d)
    :param k: Number of clusters, 1 <= k <= n
    :param rng: Random generator for the seeding
    :param max_iters: Iteration limit
    :returns: Labels, centroids and objective history
    :raises InvalidArgumentError: If k is outside [1, n]
    """
    x = np.asarray(points, dtype=float)
    if x.ndim == 1:
        x = x[:, np.newaxis]
    n = x.shape[0]
    if not 1 <= k <= n:
        raise InvalidArgumentError(f"k must lie in [1, {n}], got {k}")

    centroids = _plus_plus_seeds(x, k, rng)
    labels = np.full(n, -1, dtype=int)
    history: list[float] = []
    for _ in range(max_iters):
        d2 = np.sum((x[:, np.newaxis, :] - centroids[np.newaxis]) ** 2, axis=2)
        new_labels = np.argmin(d2, axis=1)
        for empty in np.setdiff1d(np.arange(k), new_labels):
            spread = np.sum((x - centroids[new_labels]) ** 2, axis=1)
            counts = np.bincount(new_labels, minlength=k)
            spread[counts[new_labels] <= 1] = -1.0
            farthest = int(np.argmax(spread))
            new_labels[farthest] = empty
            centroids[empty] = x[farthest]
        for i in range(k):
            centroids[i] = x[new_labels == i].mean(axis=0)
        history.append(_sum_of_squares(x, new_labels, centroids))
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    return KMeansResult(labels, centroids, tuple(history))


def kmeans_cluster(
    points: ArrayLike,
    k: int,
    rng: np.random.Generator,
    load_estimates: ArrayLike | None = None,
    max_iters: int = DEFAULT_KMEANS_MAX_ITERS,
    restarts: int = DEFAULT_KMEANS_RESTARTS,
    epoch: int = 0,
    method: ClusterMethod = ClusterMethod.KMEANS,
) -> ClusterSet:
    """
    Cluster embedded base stations with k-means.

    :param points: Embedding of each base station, shape (|B|, d)
    :param k: Number of clusters
    :param rng: Random generator
    :param load_estimates: Load estimates for head selection (zeros if None)
    :param max_iters: Lloyd iteration limit
    :param restarts: Independent seedings; the lowest objective wins
    :param epoch: Slot at which the clusters are formed
    :param method: Tag recorded on the result
    :returns: The cluster set
    """
    x = np.asarray(points, dtype=float)
    best = min(
        (lloyd_kmeans(x, k, rng, max_iters) for _ in range(max(restarts, 1))),
        key=lambda r: r.objective,
    )
    rho = (
        np.zeros(x.shape[0])
        if load_estimates is None
        else np.asarray(load_estimates, dtype=float)
    )
    return ClusterSet.from_labels(best.labels, rho, method, epoch)


def laplacian_spectrum(
    similarity: ArrayLike,
) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Eigenvalues (ascending) and eigenvectors of L = D - S."""
    return jacobi_eigh(laplacian(similarity))


def spectral_cluster(
    similarity: ArrayLike,
    rng: np.random.Generator,
    k: int | None = None,
    load_estimates: ArrayLike | None = None,
    epoch: int = 0,
) -> ClusterSet:
    """
    Spectral clustering on the unnormalized graph Laplacian.

    :param similarity: Symmetric non-negative weight matrix S
    :param rng: Random generator for the k-means step
    :param k: Number of clusters; chosen by the eigengap rule when None
    :param load_estimates: Load estimates for head selection (zeros if None)
    :param epoch: Slot at which the clusters are formed
    :returns: The cluster set
    :raises NumericalFailureError: If the eigensolver does not converge
    """
    s = np.asarray(similarity, dtype=float)
    n = s.shape[0]
    rho = np.zeros(n) if load_estimates is None else np.asarray(load_estimates)
    if n == 1:
        return ClusterSet.singletons(1, ClusterMethod.SPECTRAL, epoch)
    eigenvalues, eigenvectors = laplacian_spectrum(s)
    if k is None:
        k = eigengap_k(eigenvalues)
    features = eigenvectors[:, :k]
    return kmeans_cluster(
        features, k, rng, rho, epoch=epoch, method=ClusterMethod.SPECTRAL
    )


def p2p_search_cluster(
    graph: SimilarityGraph,
    max_cluster_size: int = DEFAULT_MAX_CLUSTER_SIZE,
    rounds: int = DEFAULT_P2P_ROUNDS,
    load_estimates: ArrayLike | None = None,
    epoch: int = 0,
) -> ClusterSet:
    """
    Decentralized peer-to-peer search clustering.

    Every base station starts alone. In each round every cluster scores the
    neighbouring clusters reachable over graph edges by their average joint
    similarity (summed over adjacent cross pairs, divided by the number of
    cross pairs) and proposes to the best one that keeps the merged size
    within the cap, ties to the lowest head id. Mutual proposals merge.
    Only similarities of adjacent base stations are read.

    :param graph: Similarity graph
    :param max_cluster_size: Size cap |C|^Max
    :param rounds: Maximum number of rounds
    :param load_estimates: Load estimates for head selection (zeros if None)
    :param epoch: Slot at which the clusters are formed
    :returns: The cluster set
    """
    if max_cluster_size < 1:
        raise InvalidArgumentError("max cluster size must be >= 1")
    n = graph.n_nodes
    rho = (
        np.zeros(n)
        if load_estimates is None
        else np.asarray(load_estimates, dtype=float)
    )
    local_view = [
        {j: float(graph.joint[b, j]) for j in graph.neighbors(b)}
        for b in range(n)
    ]
    owner = list(range(n))
    clusters: dict[int, set[int]] = {b: {b} for b in range(n)}
    heads = {b: b for b in range(n)}

    for round_index in range(rounds):
        proposals: dict[int, int] = {}
        for cid, members in clusters.items():
            totals: dict[int, float] = defaultdict(float)
            for b in members:
                for j, s in local_view[b].items():
                    if owner[j] != cid:
                        totals[owner[j]] += s
            candidates = [
                (total / (len(members) * len(clusters[other])), other)
                for other, total in totals.items()
                if len(members) + len(clusters[other]) <= max_cluster_size
            ]
            if candidates:
                _, choice = max(
                    candidates, key=lambda c: (c[0], -heads[c[1]])
                )
                proposals[cid] = choice
        merges = [
            (a, b)
            for a, b in proposals.items()
            if a < b and proposals.get(b) == a
        ]
        if not merges:
            break
        for a, b in merges:
            merged = clusters.pop(a) | clusters.pop(b)
            heads.pop(a)
            heads.pop(b)
            cid = min(merged)
            clusters[cid] = merged
            heads[cid] = select_head(merged, rho)
            for member in merged:
                owner[member] = cid
        logger.debug(
            "P2P round %d: %d merge(s), %d cluster(s)",
            round_index,
            len(merges),
            len(clusters),
        )

    return ClusterSet.from_labels(owner, rho, ClusterMethod.P2P, epoch)


def form_clusters(
    method: ClusterMethod,
    positions: ArrayLike,
    load_estimates: ArrayLike,
    params: SimilarityParameters,
    rng: np.random.Generator,
    *,
    k: int | None = None,
    max_cluster_size: int = DEFAULT_MAX_CLUSTER_SIZE,
    p2p_rounds: int = DEFAULT_P2P_ROUNDS,
    kmeans_max_iters: int = DEFAULT_KMEANS_MAX_ITERS,
    epoch: int = 0,
) -> tuple[ClusterSet, SimilarityGraph]:
    """
    Form clusters from the current load estimates with the chosen method.

    k-means uses the eigengap of the current similarity graph unless ``k``
    is fixed.

    :param method: Clustering method
    :param positions: Base-station positions
    :param load_estimates: Advertised load estimates
    :param params: Similarity-graph parameters
    :param rng: Random generator
    :param k: Fixed number of clusters for k-means/spectral
    :param max_cluster_size: Size cap of the peer-to-peer method
    :param p2p_rounds: Round limit of the peer-to-peer method
    :param kmeans_max_iters: Lloyd iteration limit
    :param epoch: Slot at which the clusters are formed
    :returns: Tuple of (clusters, the similarity graph they were built from)
    """
    rho = np.asarray(load_estimates, dtype=float)
    graph = build_similarity_graph(positions, rho, params)
    n = graph.n_nodes
    match method:
        case ClusterMethod.NONE:
            clusters = ClusterSet.singletons(n, ClusterMethod.NONE, epoch)
        case ClusterMethod.SPECTRAL:
            clusters = spectral_cluster(graph.joint, rng, k, rho, epoch)
        case ClusterMethod.KMEANS:
            if k is None:
                k = (
                    1
                    if n == 1
                    else eigengap_k(laplacian_spectrum(graph.joint)[0])
                )
            clusters = kmeans_cluster(
                real_embedding(positions, rho, params),
                k,
                rng,
                rho,
                max_iters=kmeans_max_iters,
                epoch=epoch,
            )
        case ClusterMethod.P2P:
            clusters = p2p_search_cluster(
                graph, max_cluster_size, p2p_rounds, rho, epoch
            )
    logger.info(
        "slot %d: %s clustering formed %d cluster(s), sizes %s",
        epoch,
        method.value,
        len(clusters.clusters),
        clusters.sizes,
    )
    return clusters, graph
