import numpy as np
import pytest

from simpact.mincostflow import (
    InfeasibleConstraintError,
    assignment_cost,
    constrained_assignment,
    nearest_assignment,
)

from conftest import brute_force_min_cost


def test_min_size_zero_equals_nearest():
    rng = np.random.default_rng(0)
    cost = rng.random((20, 4))
    np.testing.assert_array_equal(
        constrained_assignment(cost, 0), nearest_assignment(cost)
    )


def test_nearest_ties_break_low_index():
    cost = np.array([[1.0, 1.0, 2.0], [3.0, 1.0, 1.0]])
    np.testing.assert_array_equal(nearest_assignment(cost), [0, 1])


def test_collinear_symmetric_split():
    points = np.array([[0.0], [1.0], [10.0], [11.0]])
    centroids = np.array([[0.5], [10.5]])
    cost = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(-1)
    labels = constrained_assignment(cost, 2)
    np.testing.assert_array_equal(labels, [0, 0, 1, 1])


def test_adversarial_five_points_matches_enumeration():
    # nearest-centroid puts a single point in cluster 1
    points = np.array([[0.0, 0.0], [0.1, 0.0], [0.2, 0.0], [0.3, 0.0], [10.0, 0.0]])
    centroids = np.array([[0.15, 0.0], [10.0, 0.0]])
    cost = ((points[:, None, :] - centroids[None, :, :]) ** 2).sum(-1)
    assert np.bincount(nearest_assignment(cost), minlength=2)[1] == 1
    labels = constrained_assignment(cost, 2)
    counts = np.bincount(labels, minlength=2)
    assert counts.min() >= 2
    assert assignment_cost(cost, labels) == pytest.approx(
        brute_force_min_cost(cost, 2), abs=1e-12
    )


def test_randomized_instances_match_enumeration():
    rng = np.random.default_rng(42)
    for _ in range(25):
        n = int(rng.integers(4, 10))
        k = int(rng.integers(2, 4))
        min_size = int(rng.integers(0, max(1, n // k) + 1))
        cost = rng.random((n, k))
        labels = constrained_assignment(cost, min_size)
        counts = np.bincount(labels, minlength=k)
        assert counts.min() >= min_size
        assert assignment_cost(cost, labels) == pytest.approx(
            brute_force_min_cost(cost, min_size), abs=1e-9
        )


def test_infeasible_names_quantities():
    cost = np.random.default_rng(1).random((5, 3))
    with pytest.raises(InfeasibleConstraintError, match="6.*5"):
        constrained_assignment(cost, 2)


def test_deterministic_across_runs():
    rng = np.random.default_rng(3)
    cost = rng.random((40, 5))
    first = constrained_assignment(cost, 6)
    for _ in range(3):
        np.testing.assert_array_equal(constrained_assignment(cost, 6), first)


def test_exact_demand_consumes_all_points():
    rng = np.random.default_rng(9)
    cost = rng.random((12, 3))
    labels = constrained_assignment(cost, 4)  # 3 * 4 == 12
    np.testing.assert_array_equal(np.bincount(labels, minlength=3), [4, 4, 4])
    assert assignment_cost(cost, labels) == pytest.approx(
        brute_force_min_cost(cost, 4), abs=1e-9
    )
