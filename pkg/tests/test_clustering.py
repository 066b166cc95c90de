import numpy as np
import pytest

from simpact.clustering import (
    ClusterModel,
    fit_constrained_kmeans,
    fit_granularities,
    kmeanspp_init,
    silhouette,
    squared_distances,
)
from simpact.mincostflow import InfeasibleConstraintError


def two_blobs(n_per=50, d=4, sep=8.0, seed=0):
    rng = np.random.default_rng(seed)
    a = rng.normal(0.0, 0.3, size=(n_per, d))
    b = rng.normal(0.0, 0.3, size=(n_per, d))
    b[:, 0] += sep
    labels = np.array([0] * n_per + [1] * n_per)
    return np.vstack([a, b]), labels


# ------------------------------------------------------------ init

def test_kmeanspp_k_equals_n_is_permutation():
    rng = np.random.default_rng(5)
    points = rng.normal(size=(6, 3))
    centroids = kmeanspp_init(points, 6, seed=1)
    matched = {tuple(np.round(c, 12)) for c in centroids}
    assert matched == {tuple(np.round(p, 12)) for p in points}


def test_kmeanspp_k1_is_a_point():
    rng = np.random.default_rng(2)
    points = rng.normal(size=(10, 2))
    centroid = kmeanspp_init(points, 1, seed=0)
    assert any(np.allclose(centroid[0], p) for p in points)


def test_kmeanspp_seed_deterministic():
    points = np.random.default_rng(0).normal(size=(30, 4))
    a = kmeanspp_init(points, 4, seed=11)
    b = kmeanspp_init(points, 4, seed=11)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, kmeanspp_init(points, 4, seed=12))


def test_kmeanspp_k_too_large():
    with pytest.raises(InfeasibleConstraintError):
        kmeanspp_init(np.zeros((3, 2)), 4, seed=0)


def test_kmeanspp_duplicate_points_all_distinct_indices():
    points = np.zeros((5, 2))
    centroids = kmeanspp_init(points, 5, seed=0)
    assert centroids.shape == (5, 2)


# ------------------------------------------------------------ fit

def test_two_blob_fit_recovers_labels():
    points, truth = two_blobs(seed=3)
    model = fit_constrained_kmeans(points, 2, min_size=10, seed=7)
    # same partition up to cluster relabeling
    agreement = (model.labels == truth).mean()
    assert agreement in (0.0, 1.0) or agreement > 0.99 or agreement < 0.01
    assert min(np.bincount(model.labels)) >= 10


def test_k1_converges_to_mean_in_one_iteration():
    rng = np.random.default_rng(1)
    points = rng.normal(size=(25, 3))
    model = fit_constrained_kmeans(points, 1, min_size=5, seed=0)
    np.testing.assert_allclose(model.centroids[0], points.mean(axis=0), atol=1e-9)
    assert model.iterations == 1


def test_fit_seed_determinism_bitwise():
    points, _ = two_blobs(n_per=40, seed=9)
    a = fit_constrained_kmeans(points, 3, min_size=5, seed=21)
    b = fit_constrained_kmeans(points, 3, min_size=5, seed=21)
    assert np.array_equal(a.labels, b.labels)
    assert a.centroids.tobytes() == b.centroids.tobytes()
    assert a.inertia == b.inertia


def test_fit_inertia_monotone_and_min_size():
    rng = np.random.default_rng(17)
    for trial in range(5):
        points = rng.normal(size=(int(rng.integers(80, 200)), 6))
        k = int(rng.integers(2, 6))
        model = fit_constrained_kmeans(points, k, min_size=10, seed=trial)
        counts = np.bincount(model.labels, minlength=k)
        assert counts.min() >= 10
        diffs = np.diff(model.inertia_history)
        assert (diffs <= 1e-9).all()


def test_fit_infeasible_propagates():
    with pytest.raises(InfeasibleConstraintError):
        fit_constrained_kmeans(np.zeros((5, 2)), 3, min_size=2)


def test_model_json_round_trip():
    points, _ = two_blobs(n_per=20, seed=4)
    model = fit_constrained_kmeans(points, 2, min_size=5, seed=3,
                                   ids=[f"u{i}" for i in range(len(points))])
    restored = ClusterModel.from_json(model.to_json(), labels=model.labels, ids=model.ids)
    assert restored.k == model.k
    assert restored.min_size == model.min_size
    assert restored.seed == model.seed
    np.testing.assert_allclose(restored.centroids, model.centroids)
    assert restored.assignment == model.assignment


# ------------------------------------------------------------ silhouette

def silhouette_oracle(points, labels):
    """Direct O(N^2) computation from the definition."""
    n = len(points)
    dist = np.sqrt(squared_distances(points, points))
    scores = np.zeros(n)
    for i in range(n):
        own = labels[i]
        same = [j for j in range(n) if labels[j] == own and j != i]
        if not same:
            continue
        a = np.mean([dist[i, j] for j in same])
        b = min(
            np.mean([dist[i, j] for j in range(n) if labels[j] == other])
            for other in set(labels) if other != own
        )
        m = max(a, b)
        scores[i] = 0.0 if m <= 0 else (b - a) / m
    return float(scores.mean())


def test_silhouette_two_tight_pairs():
    points = np.array([[0.0, 0.0], [0.0, 0.01], [10.0, 0.0], [10.0, 0.01]])
    labels = np.array([0, 0, 1, 1])
    score = silhouette(points, labels)
    assert score > 0.9
    assert score == pytest.approx(silhouette_oracle(points, labels), abs=1e-12)


def test_silhouette_identical_points_is_zero():
    points = np.zeros((8, 3))
    labels = np.array([0, 0, 0, 0, 1, 1, 1, 1])
    assert silhouette(points, labels) == 0.0


def test_silhouette_matches_oracle_random():
    rng = np.random.default_rng(12)
    points = rng.normal(size=(60, 5))
    labels = rng.integers(0, 3, size=60)
    assert silhouette(points, labels, sample_cap=500) == pytest.approx(
        silhouette_oracle(points, labels), abs=1e-9
    )


def test_silhouette_exact_at_cap_boundary():
    rng = np.random.default_rng(30)
    points = rng.normal(size=(100, 4))
    labels = rng.integers(0, 4, size=100)
    exact = silhouette(points, labels, sample_cap=100)
    assert exact == pytest.approx(silhouette_oracle(points, labels), abs=1e-9)


def test_silhouette_single_cluster_errors():
    with pytest.raises(ValueError):
        silhouette(np.zeros((4, 2)), np.zeros(4, dtype=int))


def test_silhouette_sampled_reasonable():
    points, labels = two_blobs(n_per=200, seed=6)
    sampled = silhouette(points, labels, sample_cap=50, seed=1)
    exact = silhouette(points, labels)
    assert abs(sampled - exact) < 0.1


# ------------------------------------------------------------ granularities

def test_granularities_blobs_prefer_k2():
    points, _ = two_blobs(n_per=40, seed=8)
    suite = fit_granularities(points, ks={2, 4}, min_size=5, seed=2)
    assert set(suite.models) == {2, 4}
    assert suite.silhouettes[2] > suite.silhouettes[4]
    assert suite.best_k == 2


def test_granularities_single_k():
    points, _ = two_blobs(n_per=30, seed=10)
    suite = fit_granularities(points, ks={2}, min_size=5, seed=0)
    assert list(suite.models) == [2]


def test_granularities_skip_infeasible():
    points, _ = two_blobs(n_per=15, seed=11)  # 30 points
    suite = fit_granularities(points, ks={2, 1000}, min_size=10, seed=0)
    assert set(suite.models) == {2}
    assert suite.best_k == 2
