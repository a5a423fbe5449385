import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial.distance import pdist

from delaypredict.dimension import (box_counting_dim, box_counts, correlation_dim, correlation_sums,
                                    default_fit_mask, geometric_grid, information_dim)
from delaypredict.errors import InsufficientScalesError, InvalidInputError
from delaypredict.systems import EmpiricalMeasure, builtin_system, dyadic_atomic_measure, iterate


def cantor_endpoints(level):
    left = np.array([0.0])
    for n in range(1, level + 1):
        left = np.r_[left, left + 2.0 / 3**n]
    return np.sort(np.r_[left, left + 3.0**-level])


@pytest.fixture(scope="module")
def henon_orbit():
    return iterate(builtin_system("henon", {"a": 1.4, "b": 0.3}), [0.0, 0.0], 100_000, burn_in=1000)


def test_box_interval():
    x = np.random.default_rng(0).random(100_000)
    assert abs(box_counting_dim(x, geomspace(0.1, 1e-3, 11)).slope - 1) <= 0.05


def test_box_single_point():
    assert box_counting_dim(np.full(50, 0.3), geomspace(0.1, 1e-3, 5)).slope == 0.0


def test_box_cantor():
    pts = cantor_endpoints(12)
    assert pts.size == 2**13
    assert abs(box_counting_dim(pts, geomspace(0.3, 1e-5, 20)).slope - math.log(2) / math.log(3)) <= 0.03


def test_box_counts_hand():
    assert box_counts(np.array([[0.05], [0.15], [0.16], [0.9]]), 0.1) == 3


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 10_000))
def test_box_counts_monotone(seed):
    pts = np.random.default_rng(seed).random((300, 2))
    est = box_counting_dim(pts, geomspace(0.5, 0.01, 8))
    counts = [c for _, c in est.per_scale]
    assert all(b >= a for a, b in zip(counts, counts[1:]))
    assert est.lower_slope <= est.slope + 1e-9 or est.lower_slope <= est.upper_slope


def test_correlation_interval_and_atoms():
    x = np.random.default_rng(1).random((20_000, 1))
    assert abs(correlation_dim(x, geomspace(0.1, 1e-3, 9)).slope - 1) <= 0.05
    two = np.r_[np.zeros((50, 1)), np.ones((50, 1))]
    assert correlation_dim(two, geomspace(0.5, 0.01, 5)).slope == 0.0


def test_correlation_sums_match_pdist():
    rng = np.random.default_rng(2)
    pts = np.round(rng.random((400, 2)), 2)  # ties at the scale boundary
    grid = np.array([0.2, 0.1, 0.05, 0.01])
    d = pdist(pts)
    oracle = np.array([(d < e).sum() / d.size for e in grid])
    np.testing.assert_allclose(correlation_sums(pts, grid), oracle, rtol=0, atol=1e-15)


def test_correlation_henon_against_pairwise_subsample(henon_orbit):
    grid = geomspace(0.1, 1e-3, 11)
    est = correlation_dim(henon_orbit, grid)
    assert abs(est.slope - 1.2) <= 0.1
    sub = henon_orbit[np.random.default_rng(3).choice(len(henon_orbit), 10_000, replace=False)]
    d = pdist(sub)
    c = np.array([(d < e).mean() for e in grid])
    mask = default_fit_mask(grid)
    oracle = np.polyfit(np.log(grid[mask]), np.log(c[mask]), 1)[0]
    assert abs(est.slope - oracle) <= 0.1


def test_information_single_atom_and_interval():
    one = EmpiricalMeasure(np.array([[0.5]]), np.array([1.0]))
    est = information_dim(one, geomspace(0.1, 1e-4, 6))
    assert est.slope == 0.0 and all(r == 0 for _, r in est.per_scale)
    x = np.random.default_rng(4).random((20_000, 1))
    uni = EmpiricalMeasure(x, np.full(len(x), 1 / len(x)))
    assert abs(information_dim(uni, geomspace(0.05, 1e-3, 8)).slope - 1) <= 0.1


def test_information_dyadic_tends_to_zero():
    m = dyadic_atomic_measure(n_max=12).measure
    est = information_dim(m, geomspace(1e-2, 1e-12, 21))
    ratios = [r for _, r in est.per_scale]
    assert ratios[-1] < ratios[len(ratios) // 2] < ratios[0]
    assert ratios[-1] <= 0.15 and est.slope <= 0.15


def test_grid_validation():
    with pytest.raises(InsufficientScalesError):
        box_counting_dim(np.zeros(3), [0.1])
    with pytest.raises(InvalidInputError):
        box_counting_dim(np.zeros(3), [0.1, 0.2])
    with pytest.raises(InvalidInputError):
        geometric_grid(0.1, 0.2, 3)
    with pytest.raises(InvalidInputError):
        information_dim(EmpiricalMeasure(np.zeros((1, 1)), np.ones(1)), [2.0, 1.0])


def geomspace(a, b, n):
    return geometric_grid(a, b, n)
