import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from maxent_explore.knn import (NeighborIndex, build_index, knn_brute_force,
                                knn_query, log_unit_ball_volume, sphere_volume)


def test_collinear_tie_goes_to_lowest_index():
    pts = np.array([[0.0], [1.0], [2.0]])
    res = knn_query(build_index(pts), k=1)
    # point 1 is equidistant from 0 and 2; lowest index wins
    assert res.indices[1, 0] == 0
    assert res.radii[1] == 1.0


def test_duplicate_points_zero_radius():
    pts = np.array([[0.0], [0.0], [1.0]])
    res = knn_query(build_index(pts), k=1)
    assert res.indices[0, 0] == 1
    assert res.radii[0] == 0.0
    assert res.indices[1, 0] == 0
    assert res.radii[1] == 0.0


def test_unit_square_corners():
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    res = knn_query(build_index(pts), k=2)
    assert res.radii == pytest.approx([1.0] * 4)
    # each corner's two nearest are the adjacent corners, not the diagonal
    assert set(res.indices[0]) == {1, 2}
    assert set(res.indices[3]) == {1, 2}


def test_k_equals_n_minus_one_returns_everyone_else():
    rng = np.random.default_rng(0)
    pts = rng.standard_normal((7, 3))
    res = knn_query(build_index(pts), k=6)
    for i in range(7):
        assert set(res.indices[i]) == set(range(7)) - {i}


def test_uniform_points_distinct_non_self_neighbors():
    rng = np.random.default_rng(1)
    pts = rng.uniform(size=(1000, 2))
    res = knn_query(build_index(pts), k=4)
    for i in range(1000):
        row = res.indices[i]
        assert len(set(row)) == 4
        assert i not in row


@pytest.mark.parametrize("seed", range(8))
def test_matches_brute_force_random(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(10, 200))
    p = int(rng.integers(1, 6))
    k = int(rng.integers(1, min(8, n - 1) + 1))
    pts = rng.standard_normal((n, p))
    fast = knn_query(build_index(pts), k)
    brute = knn_brute_force(pts, k)
    np.testing.assert_array_equal(fast.indices, brute.indices)
    np.testing.assert_array_equal(fast.radii, brute.radii)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.integers(5, 80), st.integers(1, 4),
       st.booleans())
def test_matches_brute_force_property(seed, n, p, with_duplicates):
    rng = np.random.default_rng(seed)
    pts = rng.standard_normal((n, p))
    if with_duplicates:
        reps = rng.integers(1, 4, size=n)
        pts = np.repeat(pts, reps, axis=0)[:n]
    k = int(rng.integers(1, n))
    fast = knn_query(build_index(pts), k)
    brute = knn_brute_force(pts, k)
    np.testing.assert_array_equal(fast.indices, brute.indices)
    np.testing.assert_array_equal(fast.radii, brute.radii)


@pytest.mark.parametrize("seed", range(4))
def test_matches_brute_force_with_many_duplicates(seed):
    # Wall collisions produce exact duplicates; the tie-break fallback
    # must pick the same lowest-index sets as the oracle.
    rng = np.random.default_rng(100 + seed)
    base = rng.standard_normal((12, 2))
    reps = rng.integers(1, 6, size=12)
    pts = np.repeat(base, reps, axis=0)
    k = int(rng.integers(1, 7))
    fast = knn_query(build_index(pts), k)
    brute = knn_brute_force(pts, k)
    np.testing.assert_array_equal(fast.indices, brute.indices)
    np.testing.assert_array_equal(fast.radii, brute.radii)


def test_deterministic_across_runs():
    rng = np.random.default_rng(5)
    pts = rng.uniform(size=(300, 3))
    a = knn_query(build_index(pts), k=5)
    b = knn_query(build_index(pts.copy()), k=5)
    np.testing.assert_array_equal(a.indices, b.indices)
    assert a.radii.tobytes() == b.radii.tobytes()


def test_index_is_immutable():
    pts = np.random.default_rng(2).uniform(size=(10, 2))
    index = build_index(pts)
    with pytest.raises(ValueError):
        index.points[0, 0] = 99.0


def test_build_errors():
    with pytest.raises(ValueError):
        build_index(np.array([[0.0]]))  # N < 2
    with pytest.raises(ValueError):
        build_index(np.array([[0.0], [np.nan]]))
    with pytest.raises(ValueError):
        build_index(np.array([[0.0], [np.inf]]))
    with pytest.raises(ValueError):
        build_index(np.zeros((3,)))


def test_query_k_range_errors():
    index = build_index(np.arange(5.0)[:, None])
    with pytest.raises(ValueError):
        knn_query(index, 0)
    with pytest.raises(ValueError):
        knn_query(index, 5)


def test_sphere_volume_closed_forms():
    assert sphere_volume(1.0, 1) == pytest.approx(2.0, rel=1e-12)
    assert sphere_volume(1.0, 2) == pytest.approx(math.pi, rel=1e-12)
    assert sphere_volume(2.0, 3) == pytest.approx(32.0 * math.pi / 3.0, rel=1e-12)
    assert sphere_volume(0.0, 4) == 0.0


def test_sphere_volume_monotone_and_scale_free():
    for p in (1, 2, 3, 7):
        radii = np.linspace(0.1, 3.0, 20)
        vols = np.array([sphere_volume(float(r), p) for r in radii])
        assert np.all(np.diff(vols) > 0)
        ratios = vols / radii ** p
        assert ratios == pytest.approx([ratios[0]] * 20, rel=1e-12)
        assert ratios[0] == pytest.approx(math.exp(log_unit_ball_volume(p)), rel=1e-12)


def test_neighbor_index_query_method():
    pts = np.random.default_rng(3).uniform(size=(20, 2))
    res = NeighborIndex(pts).query(3)
    assert res.indices.shape == (20, 3)
    assert res.k == 3
