"""
Tests for clustering: Jacobi eigensolver, eigengap, k-means, spectral and
peer-to-peer search.
"""

import itertools
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import eigvalsh

from pycellsleep.core.clustering import (
    ClusterMethod,
    ClusterSet,
    eigengap_k,
    form_clusters,
    jacobi_eigh,
    kmeans_cluster,
    laplacian,
    laplacian_spectrum,
    lloyd_kmeans,
    p2p_search_cluster,
    select_head,
    spectral_cluster,
)
from pycellsleep.core.errors import InvalidArgumentError, NumericalFailureError
from pycellsleep.core.similarity import (
    SimilarityParameters,
    build_similarity_graph,
)
from pycellsleep.core.verification import planted_groups, random_disc_points


def test_cluster_set_validation() -> None:
    with pytest.raises(ValueError):
        ClusterSet((frozenset({0, 1}),), (2,), ClusterMethod.NONE)
    with pytest.raises(ValueError):
        ClusterSet(
            (frozenset({0, 1}), frozenset({1, 2})), (0, 2), ClusterMethod.NONE
        )
    with pytest.raises(ValueError):
        ClusterSet((frozenset(),), (0,), ClusterMethod.NONE)


def test_cluster_set_from_labels() -> None:
    clusters = ClusterSet.from_labels(
        [7, 3, 7, 3, 5], [0.9, 0.5, 0.1, 0.5, 0.0], ClusterMethod.KMEANS, 100
    )
    assert clusters.clusters == (
        frozenset({0, 2}),
        frozenset({1, 3}),
        frozenset({4}),
    )
    assert clusters.heads == (2, 1, 4)
    assert clusters.sizes == [2, 2, 1]
    assert clusters.labels(5).tolist() == [0, 1, 0, 1, 2]
    assert clusters.members(1) == [1, 3]
    assert clusters.is_partition_of(5)
    assert not clusters.is_partition_of(6)
    assert clusters.epoch == 100


def test_select_head_breaks_ties_by_id() -> None:
    assert select_head({4, 2, 9}, np.zeros(10)) == 2
    assert select_head({4, 2, 9}, np.array([0.0] * 4 + [0.1] * 6)) == 2


def test_laplacian_rows_sum_to_zero() -> None:
    s = np.array([[5.0, 1.0, 0.0], [1.0, 5.0, 2.0], [0.0, 2.0, 5.0]])
    lap = laplacian(s)
    assert np.allclose(lap.sum(axis=1), 0.0)
    assert np.diag(lap).tolist() == [1.0, 3.0, 2.0]


@settings(max_examples=50)
@given(
    st.integers(min_value=1, max_value=10),
    st.integers(min_value=0, max_value=2**32 - 1),
)
def test_jacobi_matches_scipy(n: int, seed: int) -> None:
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(n, n))
    a = a + a.T
    values, vectors = jacobi_eigh(a)
    assert values == pytest.approx(eigvalsh(a), abs=1e-8)
    assert np.allclose(vectors.T @ vectors, np.eye(n), atol=1e-10)
    assert np.allclose(a @ vectors, vectors * values, atol=1e-8)


def test_jacobi_random_geometry_laplacian() -> None:
    rng = np.random.default_rng(8)
    positions = random_disc_points(8, 300.0, rng)
    graph = build_similarity_graph(
        positions, rng.random(8), SimilarityParameters()
    )
    values, _ = jacobi_eigh(laplacian(graph.joint))
    assert values == pytest.approx(eigvalsh(laplacian(graph.joint)), abs=1e-8)


def test_jacobi_rejects_bad_input() -> None:
    with pytest.raises(InvalidArgumentError):
        jacobi_eigh(np.zeros((2, 3)))
    with pytest.raises(InvalidArgumentError):
        jacobi_eigh(np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_jacobi_reports_non_convergence() -> None:
    a = np.array([[2.0, 1.0, 0.5], [1.0, 3.0, 0.2], [0.5, 0.2, 1.0]])
    with pytest.raises(NumericalFailureError) as info:
        jacobi_eigh(a, tol=0.0, max_sweeps=1)
    assert info.value.sweeps == 1


@pytest.mark.parametrize(
    ("eigenvalues", "expected"),
    [
        ([0.0, 0.0, 0.0, 5.0, 5.1], 3),
        ([0.0, 10.0], 1),
        ([0.0, 1.0, 2.0, 3.0], 1),
    ],
)
def test_eigengap(eigenvalues: list[float], expected: int) -> None:
    assert eigengap_k(eigenvalues) == expected


def test_eigengap_needs_two_values() -> None:
    with pytest.raises(InvalidArgumentError):
        eigengap_k([1.0])


def test_kmeans_k_equals_n_gives_singletons() -> None:
    points = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    result = lloyd_kmeans(points, 3, np.random.default_rng(0))
    assert sorted(result.labels.tolist()) == [0, 1, 2]
    assert result.objective == pytest.approx(0.0)


def test_kmeans_k_one_gives_single_cluster() -> None:
    points = np.random.default_rng(1).random((6, 2))
    result = lloyd_kmeans(points, 1, np.random.default_rng(0))
    assert set(result.labels.tolist()) == {0}
    assert result.centroids[0] == pytest.approx(points.mean(axis=0))


def test_kmeans_recovers_two_groups() -> None:
    points = np.array(
        [[0.0, 0.0], [0.1, 0.2], [0.2, 0.1], [10.0, 10.0], [10.1, 9.9], [9.8, 10.2]]
    )
    clusters = kmeans_cluster(points, 2, np.random.default_rng(3))
    assert set(clusters.clusters) == {frozenset({0, 1, 2}), frozenset({3, 4, 5})}

    def objective(group: set[int]) -> float:
        total = 0.0
        for part in (group, set(range(6)) - group):
            pts = points[sorted(part)]
            total += float(np.sum((pts - pts.mean(axis=0)) ** 2))
        return total

    best = min(
        (
            set(c)
            for r in range(1, 6)
            for c in itertools.combinations(range(6), r)
        ),
        key=objective,
    )
    assert frozenset(best) in set(clusters.clusters)


@given(st.integers(min_value=0, max_value=2**32 - 1))
def test_kmeans_objective_never_increases(seed: int) -> None:
    rng = np.random.default_rng(seed)
    points = rng.random((12, 3))
    k = int(rng.integers(1, 6))
    result = lloyd_kmeans(points, k, rng)
    history = np.array(result.objective_history)
    assert np.all(np.diff(history) <= 1e-12)
    assert len(set(result.labels.tolist())) == k


def test_kmeans_rejects_bad_k() -> None:
    with pytest.raises(InvalidArgumentError):
        lloyd_kmeans(np.zeros((3, 2)), 4, np.random.default_rng(0))


def test_spectral_block_diagonal_components() -> None:
    block = np.ones((3, 3))
    s = np.zeros((8, 8))
    s[:3, :3] = block
    s[3:6, 3:6] = block
    s[6:, 6:] = 1.0
    values, _ = jacobi_eigh(laplacian(s))
    assert values[:3] == pytest.approx([0.0, 0.0, 0.0], abs=1e-9)
    clusters = spectral_cluster(s, np.random.default_rng(0))
    assert set(clusters.clusters) == {
        frozenset({0, 1, 2}),
        frozenset({3, 4, 5}),
        frozenset({6, 7}),
    }
    assert clusters.method is ClusterMethod.SPECTRAL


def test_spectral_single_tight_group() -> None:
    s = np.ones((4, 4))
    clusters = spectral_cluster(s, np.random.default_rng(0))
    assert clusters.clusters == (frozenset({0, 1, 2, 3}),)


def test_spectral_single_node() -> None:
    clusters = spectral_cluster(np.zeros((1, 1)), np.random.default_rng(0))
    assert clusters.clusters == (frozenset({0}),)


def test_spectral_recovers_planted_groups() -> None:
    rng = np.random.default_rng(11)
    for _ in range(10):
        positions, groups = planted_groups(rng)
        graph = build_similarity_graph(
            positions, np.full(len(positions), 0.5), SimilarityParameters()
        )
        clusters = spectral_cluster(graph.joint, rng)
        assert set(clusters.clusters) == set(groups)


def test_p2p_size_one_gives_singletons() -> None:
    graph = build_similarity_graph(
        [(0.0, 0.0), (50.0, 0.0), (100.0, 0.0)],
        [0.5, 0.5, 0.5],
        SimilarityParameters(),
    )
    clusters = p2p_search_cluster(graph, max_cluster_size=1)
    assert clusters.sizes == [1, 1, 1]


def test_p2p_adjacent_pair_merges() -> None:
    graph = build_similarity_graph(
        [(0.0, 0.0), (50.0, 0.0)], [0.5, 0.5], SimilarityParameters()
    )
    clusters = p2p_search_cluster(graph, max_cluster_size=2)
    assert clusters.clusters == (frozenset({0, 1}),)
    assert clusters.method is ClusterMethod.P2P


def test_p2p_isolated_stations_stay_alone() -> None:
    graph = build_similarity_graph(
        [(0.0, 0.0), (1000.0, 0.0)], [0.5, 0.5], SimilarityParameters()
    )
    assert p2p_search_cluster(graph).sizes == [1, 1]


def _connected(members: frozenset[int], adjacency: np.ndarray) -> bool:
    start = min(members)
    seen = {start}
    frontier = [start]
    while frontier:
        b = frontier.pop()
        for j in np.flatnonzero(adjacency[b]).tolist():
            if j in members and j not in seen:
                seen.add(j)
                frontier.append(j)
    return seen == members


@given(
    st.integers(min_value=0, max_value=2**32 - 1),
    st.integers(min_value=1, max_value=5),
)
def test_p2p_clusters_connected_and_capped(seed: int, cap: int) -> None:
    rng = np.random.default_rng(seed)
    positions = random_disc_points(10, 400.0, rng)
    graph = build_similarity_graph(
        positions, rng.random(10), SimilarityParameters(theta=rng.random())
    )
    clusters = p2p_search_cluster(graph, max_cluster_size=cap)
    assert clusters.is_partition_of(10)
    for members in clusters.clusters:
        assert len(members) <= cap
        assert _connected(members, graph.adjacency)


@pytest.mark.parametrize("method", list(ClusterMethod))
@given(st.integers(min_value=0, max_value=2**32 - 1))
@settings(max_examples=25)
def test_form_clusters_is_a_partition(method: ClusterMethod, seed: int) -> None:
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 12))
    positions = random_disc_points(n, 500.0, rng)
    clusters, graph = form_clusters(
        method,
        positions,
        rng.random(n),
        SimilarityParameters(),
        rng,
        epoch=200,
    )
    assert clusters.is_partition_of(n)
    assert clusters.method is method
    assert graph.n_nodes == n
    for members, head in zip(clusters.clusters, clusters.heads, strict=True):
        assert head in members


def test_form_clusters_none_gives_singletons() -> None:
    clusters, _ = form_clusters(
        ClusterMethod.NONE,
        [(0.0, 0.0), (10.0, 0.0)],
        [0.5, 0.5],
        SimilarityParameters(),
        np.random.default_rng(0),
    )
    assert clusters.sizes == [1, 1]


def test_form_clusters_fixed_k() -> None:
    clusters, _ = form_clusters(
        ClusterMethod.KMEANS,
        [(0.0, 0.0), (10.0, 0.0), (400.0, 0.0), (410.0, 0.0)],
        [0.5, 0.5, 0.5, 0.5],
        SimilarityParameters(),
        np.random.default_rng(0),
        k=2,
    )
    assert set(clusters.clusters) == {frozenset({0, 1}), frozenset({2, 3})}


@settings(max_examples=30)
@given(st.integers(min_value=0, max_value=2**32 - 1))
def test_laplacian_spectrum_sums_to_trace(seed: int) -> None:
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 9))
    graph = build_similarity_graph(
        random_disc_points(n, 300.0, rng), rng.random(n), SimilarityParameters()
    )
    eigenvalues, _ = laplacian_spectrum(graph.joint)
    assert eigenvalues.sum() == pytest.approx(
        np.trace(laplacian(graph.joint)), abs=1e-9
    )
    assert eigenvalues[0] == pytest.approx(0.0, abs=1e-8)


@settings(max_examples=30)
@given(
    st.integers(min_value=0, max_value=2**32 - 1),
    st.integers(min_value=2, max_value=5),
)
def test_p2p_reads_only_adjacent_similarities(seed: int, cap: int) -> None:
    rng = np.random.default_rng(seed)
    positions = random_disc_points(10, 500.0, rng)
    loads = rng.random(10)
    graph = build_similarity_graph(positions, loads, SimilarityParameters())
    remote = ~graph.adjacency
    np.fill_diagonal(remote, False)
    noise = rng.random((10, 10))
    scrambled = replace(
        graph, joint=np.where(remote, noise + noise.T, graph.joint)
    )
    zeroed = replace(graph, joint=np.where(remote, 0.0, graph.joint))

    expected = p2p_search_cluster(graph, cap, load_estimates=loads)
    for variant in (scrambled, zeroed):
        clusters = p2p_search_cluster(variant, cap, load_estimates=loads)
        assert clusters.clusters == expected.clusters
        assert clusters.heads == expected.heads
