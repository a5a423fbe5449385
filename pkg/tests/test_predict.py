import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from delaypredict.core import DelayParams, PointCloud, TimeSeries, delay_vectors
from delaypredict.errors import InvalidInputError, NoMassError, NoNeighborsError
from delaypredict.predict import (PredictionQuery, build_prediction_map, chi_eps,
                                  deterministic_check, error_fraction, fs_predict, fs_variance,
                                  measure_cloud, sigma_all, sigma_eps, sigma_limit_estimate)
from delaypredict.systems import (GOLDEN_ANGLE, EmpiricalMeasure, builtin_system, coordinate,
                                  iterate, natural_measure, uniform_interval_pair_measure)


def _cloud01():
    return delay_vectors(TimeSeries([0, 1, 0, 1, 0]), DelayParams(1))


def test_fs_predict_hand_enumeration():
    assert fs_predict(_cloud01(), PredictionQuery([0.0], 0.5)).tolist() == [1.0]


def test_fs_single_neighbour_and_fixed_point():
    c = delay_vectors(TimeSeries([0.0, 0.3, 0.9, 0.1]), DelayParams(1))
    assert fs_predict(c, PredictionQuery([0.3], 0.01)).tolist() == [0.9]
    assert fs_variance(c, PredictionQuery([0.3], 0.01)) == 0.0
    fixed = delay_vectors(TimeSeries(np.full(10, 0.7)), DelayParams(2))
    for eps in (1e-6, 1.0):
        q = PredictionQuery([0.7, 0.7], eps)
        np.testing.assert_allclose(fs_predict(fixed, q), [0.7, 0.7], rtol=0, atol=1e-15)
        assert fs_variance(fixed, q) <= 1e-30


def test_fs_two_point_variance():
    c = PointCloud(points=[[0.0], [0.0]], images=[[0.0], [1.0]])
    assert fs_variance(c, PredictionQuery([0.0], 0.1)) == 0.25


def test_fs_empty_ball():
    with pytest.raises(NoNeighborsError):
        fs_predict(_cloud01(), PredictionQuery([5.0], 0.1))
    with pytest.raises(InvalidInputError):
        PredictionQuery([0.0], 0.0)


def test_chi_and_sigma_closed_forms():
    c = PointCloud(points=[[0.0], [0.0]], weights=[0.5, 0.5], images=[[0.0], [1.0]])
    q = PredictionQuery([0.0], 0.1)
    assert chi_eps(c, q).tolist() == [0.5]
    one = PointCloud(points=[[0.0]], weights=[1.0], images=[[0.3]])
    assert chi_eps(one, q).tolist() == [0.3] and sigma_eps(one, q) == 0.0
    quarter = PointCloud(points=[[0.0], [0.0]], weights=[0.25, 0.75], images=[[0.0], [1.0]])
    assert math.isclose(sigma_eps(quarter, q), math.sqrt(3) / 4, rel_tol=1e-15)
    same = PointCloud(points=[[0.0], [0.01]], weights=[0.5, 0.5], images=[[2.0], [2.0]])
    assert sigma_eps(same, q) == 0.0
    with pytest.raises(NoMassError):
        sigma_eps(c, PredictionQuery([3.0], 0.1))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(1, 3))
def test_uniform_cloud_identity(seed, k):
    rng = np.random.default_rng(seed)
    c = delay_vectors(TimeSeries(rng.random(200)), DelayParams(k))
    for y in c.points[rng.integers(0, len(c), 5)]:
        q = PredictionQuery(y, 0.3)
        np.testing.assert_allclose(chi_eps(c, q), fs_predict(c, q), rtol=0, atol=1e-12)
        assert abs(sigma_eps(c, q) - math.sqrt(fs_variance(c, q))) <= 1e-12


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.sampled_from([0.05, 0.2, 0.5]), st.booleans())
def test_sigma_all_matches_per_query(seed, eps, duplicates):
    rng = np.random.default_rng(seed)
    n = 60
    pts = np.round(rng.random((n, 2)), 1) if duplicates else rng.random((n, 2))
    w = rng.random(n)
    c = PointCloud(points=pts, weights=w / w.sum(), images=rng.standard_normal((n, 2)))
    batch = sigma_all(c, eps)
    for i in range(n):
        assert abs(batch[i] - sigma_eps(c, PredictionQuery(pts[i], eps))) <= 1e-10


def test_sigma_trend_predictable_and_single_atom():
    m = natural_measure(builtin_system("circle_rotation", {"theta": GOLDEN_ANGLE}), [1, 0], 5000)
    c = measure_cloud(builtin_system("circle_rotation", {"theta": GOLDEN_ANGLE}), coordinate(0), 3, m)
    t = sigma_limit_estimate(c, c.points[10], [0.1, 1e-3, 1e-5, 1e-8])
    assert t.monotone_nonincreasing and t.estimate < 1e-6
    one = PointCloud(points=[[0.5]], weights=[1.0], images=[[0.1]])
    assert all(s == 0 for s in sigma_limit_estimate(one, [0.5], [1, 0.1, 0.01]).sigma)


def test_sigma_trend_two_branch_bounded_below():
    s = builtin_system("interval_pair")
    c = measure_cloud(s, coordinate(1), 1, uniform_interval_pair_measure(20000))
    t = sigma_limit_estimate(c, [0.2], [0.1, 0.03, 0.01, 0.003])
    # branches 0 and 1 send y=0.2 to 0.2 and 0.8 with equal mass
    assert min(t.sigma) > 0.25


def test_error_fraction_extremes():
    rng = np.random.default_rng(0)
    c = PointCloud(points=np.zeros((50, 1)), weights=np.full(50, 0.02), images=rng.random((50, 1)))
    assert error_fraction(c, 1e-15, 0.1).fraction == pytest.approx(1.0)
    clean = PointCloud(points=rng.random((50, 1)), weights=np.full(50, 0.02), images=np.zeros((50, 1)))
    assert error_fraction(clean, 0.01, 0.1).fraction == 0.0


def test_error_fraction_transversal_crossing():
    # two segments crossing at the origin whose images stay 1 apart
    t = np.linspace(-1, 1, 20001)
    pts = np.r_[np.c_[t, t], np.c_[t, -t]]
    img = np.r_[np.zeros(t.size), np.ones(t.size)][:, None]
    c = PointCloud(points=pts, weights=np.full(pts.shape[0], 1 / pts.shape[0]), images=img)
    eps = np.array([0.02, 0.01, 0.005])
    fr = [error_fraction(c, 0.1, e).fraction for e in eps]
    assert np.all(np.diff(fr) < 0)
    assert 0.9 <= np.polyfit(np.log(eps), np.log(fr), 1)[0] <= 1.1


def test_error_fraction_interval_pair_images_meet_at_crossing():
    # with h = y the delay curves cross at (1/2, 1/2) where both branches share an image
    c = measure_cloud(builtin_system("interval_pair"), coordinate(1), 2,
                      uniform_interval_pair_measure(20000))
    for e in (0.03, 0.01, 0.003):
        assert error_fraction(c, 0.1, e).fraction == 0.0
    assert error_fraction(c, 1e-3, 0.01).fraction > 0


def test_deterministic_check():
    x = np.random.default_rng(0).random((200, 1))
    assert deterministic_check(x, builtin_system("identity", {"N": 1}), coordinate(0), 1) == []
    m = natural_measure(builtin_system("circle_rotation", {"theta": GOLDEN_ANGLE}), [1, 0], 2000)
    assert deterministic_check(m.atoms, builtin_system("circle_rotation", {"theta": GOLDEN_ANGLE}),
                               coordinate(0), 3, tol_in=1e-9, tol_out=1e-3) == []
    v = deterministic_check(np.array([[0.0, 0.3], [1.0, 0.3]]), builtin_system("interval_pair"),
                            coordinate(1), 1)
    assert len(v) == 1 and v[0].dist_out == pytest.approx(0.4)


def test_prediction_map():
    c = delay_vectors(TimeSeries([0.1, 0.5, 0.9, 0.2]), DelayParams(1))
    S = build_prediction_map(c)
    assert S([0.5]).tolist() == [0.9]
    one = PointCloud(points=[[0.0]], images=[[4.0]])
    assert build_prediction_map(one)([123.0]).tolist() == [4.0]


def test_prediction_map_rotation_held_out():
    rot = builtin_system("circle_rotation", {"theta": GOLDEN_ANGLE})
    orbit = iterate(rot, [1, 0], 5001)
    c = delay_vectors(TimeSeries(orbit[:, 0]), DelayParams(3))
    S = build_prediction_map(c)
    rng = np.random.default_rng(1)
    ang = rng.uniform(0, 2 * np.pi, 50)
    x = np.c_[np.cos(ang), np.sin(ang)]
    seq = np.stack([x, rot.step(x), rot.step(rot.step(x)), rot.step(rot.step(rot.step(x)))])[..., 0].T
    phi, phi_t = seq[:, :3], seq[:, 1:]
    idx, d = S.nearest(phi)
    err = np.linalg.norm(S(phi) - phi_t, axis=1)
    # the prediction map is a rigid rotation in phi coordinates, Lipschitz constant bounded by 2
    assert np.all(err <= 2.0 * d + 1e-12)
