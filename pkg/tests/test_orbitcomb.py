import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from delaypredict.errors import InvalidInputError, PreconditionError
from delaypredict.orbitcomb import (OrbitStructure, ball_sample, build_D, build_J, case2_hypotheses,
                                    classify, difference_operators, enumerate_structures, exact_rank,
                                    functional_graph_classes, mc_measure_bound, mc_slope, rank,
                                    singular_values, structure_class, sup_ratio,
                                    verify_rank_predict, verify_sigma_k_positive)
from delaypredict.systems import builtin_system, polynomial_probe_family

# class counts from the brute-force functional-graph oracle, frozen
GRAPH_CLASSES = {2: 7, 3: 25, 4: 65}


def test_smallest_structure():
    st2 = [s for s in enumerate_structures(2, 1, include_aperiodic=False) if s.merge is None]
    assert [s.canonical() for s in st2] == [(0, 1, 0, 1, -1, -1)]


@pytest.mark.parametrize("s", [2, 3, 4])
def test_enumeration_matches_functional_graphs(s):
    oracle = functional_graph_classes(s)
    assert len(oracle) == GRAPH_CLASSES[s]
    ours = [structure_class(t) for t in enumerate_structures(s, 1, include_aperiodic=False)]
    assert len(ours) == len(set(ours))
    assert set(ours) == oracle


def test_merged_structure_has_identifications():
    st_ = OrbitStructure.merged(1, 2, 1, 1)
    assert st_.identifications(4)
    with pytest.raises(InvalidInputError):
        OrbitStructure(1, 2, 0, 2, (1, 1))


def test_J_disjoint_long_orbits():
    J = build_J(OrbitStructure(0, 5, 0, 5), 3)
    np.testing.assert_array_equal(J.entries, np.c_[np.eye(3), -np.eye(3)])
    assert rank(J.entries) == 3 == exact_rank(J.entries)
    s = singular_values(J.entries)
    np.testing.assert_allclose(s, math.sqrt(2), rtol=1e-14)


def test_J_two_fixed_points():
    J = build_J(OrbitStructure(0, 1, 0, 1), 2)
    np.testing.assert_array_equal(J.entries, [[1, -1], [1, -1]])
    assert rank(J.entries) == 1


def test_J_identical_points():
    J = build_J(OrbitStructure.merged(0, 3, 0, 0), 2)
    assert J.coincidence == 0 and not J.entries.any() and rank(J.entries) == 0


def test_singular_value_examples():
    assert rank(np.zeros((3, 3))) == 0
    np.testing.assert_array_equal(singular_values(np.diag([3.0, 0.0])), [3.0, 0.0])
    assert rank(np.diag([3.0, 0.0])) == 1


def test_build_D_identity_example():
    D = build_D([0.2], [0.5], builtin_system("identity", {"N": 1}), polynomial_probe_family(1, 2), 2)
    np.testing.assert_allclose(D.entries, [[0, -0.3], [0, -0.3]], atol=1e-15)
    assert rank(D.entries) == 1
    Z = build_D([0.2], [0.2], builtin_system("identity", {"N": 1}), polynomial_probe_family(1, 2), 2)
    assert not Z.entries.any()


def test_D_factors_through_J():
    rot = builtin_system("logistic", {"r": 3.9})
    fam = polynomial_probe_family(1, 4)
    k = 2
    x, y = [0.21], [0.67]
    D = build_D(x, y, rot, fam, k)
    # disjoint generic orbits: z = (x, Tx, y, Ty)
    from delaypredict.systems import iterate

    z = np.r_[iterate(rot, x, k), iterate(rot, y, k)]
    J = build_J(OrbitStructure(k + 1, 0, k + 1, 0), k).entries
    np.testing.assert_allclose(D.entries, J @ fam.evaluate(z), atol=1e-10)


@settings(max_examples=500, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 5))
def test_rank_J_equals_rank_D(seed, k):
    rng = np.random.default_rng(seed)
    structs = list(enumerate_structures(8, k))
    s = structs[rng.integers(len(structs))]
    J = build_J(s, k)
    t = rng.uniform(-1, 1, s.n_states)  # distinct states almost surely
    V = t[list(J.columns), None] ** np.arange(2 * k)[None, :]
    D = J.entries @ V
    assert rank(D) == rank(J.entries)


@settings(max_examples=200, deadline=None)
@given(st.lists(st.lists(st.integers(-2, 2), min_size=4, max_size=4), min_size=1, max_size=5))
def test_svd_rank_equals_exact_rank_on_integers(rows):
    A = np.array(rows)
    assert rank(A) == exact_rank(A)


def test_case_labels_cover_every_structure():
    labels = {classify(s, 5) for s in enumerate_structures(8, 5)}
    assert labels <= {"case1", "case2", "case3", "case4", "preperiodic", "coincident"}
    assert {"case1", "case2", "case3"} <= labels


def test_fixed_points_expand_by_at_most_one():
    A0, A1 = difference_operators(OrbitStructure(0, 1, 0, 1), 2)
    assert sup_ratio(A0, A1) == pytest.approx(1.0)


def test_sup_ratio_detects_kernel_escape():
    A0 = np.array([[1.0, -1.0, 0.0]])
    A1 = np.array([[0.0, 1.0, -1.0]])
    assert sup_ratio(A0, A1) == math.inf


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.integers(2, 4))
def test_sup_ratio_bounds_sampled_ratios(seed, k):
    rng = np.random.default_rng(seed)
    structs = list(enumerate_structures(7, k))
    s = structs[rng.integers(len(structs))]
    A0, A1 = difference_operators(s, k)
    sup = sup_ratio(A0, A1)
    H = rng.standard_normal((s.n_states, 200))
    d0, d1 = np.linalg.norm(A0 @ H, axis=0), np.linalg.norm(A1 @ H, axis=0)
    ok = d0 > 1e-9
    if math.isfinite(sup):
        assert np.all(d1[ok] <= sup * d0[ok] * (1 + 1e-9) + 1e-12)


def test_case2_hypotheses_strong_factor():
    for s in enumerate_structures(8, 4):
        if case2_hypotheses(s, 4):
            A0, A1 = difference_operators(s, 4)
            assert sup_ratio(A0, A1) <= 4 * (1 + 1e-9)


def test_verify_small_sweep():
    r = verify_rank_predict(7, (2, 3), 20, seed=1)
    assert r["n_violations"] == 0 and r["rank_deficient"] > 0
    s = verify_sigma_k_positive(7, (2, 3), 20, seed=1)
    assert s["n_violations"] == 0 and s["rank_mismatch_J_vs_D"] == 0


def test_verify_is_deterministic():
    a = verify_rank_predict(6, (2,), 10, seed=5)
    b = verify_rank_predict(6, (2,), 10, seed=5)
    assert a == b


def test_ball_samplers():
    for m in (1, 2, 3):
        for sampler in ("rqmc", "pseudo"):
            x = ball_sample(4096, m, 2.0, 0, sampler).reshape(4096, m)
            assert np.linalg.norm(x, axis=1).max() <= 2.0
            assert np.linalg.norm(x.mean(axis=0)) < 0.1
    with pytest.raises(InvalidInputError):
        ball_sample(10, 1, 1.0, 0, "bogus")


def test_mc_exact_one_dimensional():
    for eps in (0.05, 0.2):
        b = mc_measure_bound(np.eye(1), [0.0], 1.0, eps, trials=20_000)
        assert abs(b.fraction - eps) < 2e-3
    assert mc_measure_bound(np.eye(1), [0.0], 1.0, 2.0, trials=1000).fraction == 1.0


def test_mc_preconditions():
    with pytest.raises(PreconditionError):
        mc_measure_bound(np.zeros((1, 2)), [0.0], 1.0, 0.1, trials=1000)
    with pytest.raises(InvalidInputError):
        mc_measure_bound(np.eye(1), [0.0], 1.0, 0.1, trials=10)


def test_mc_disk_slope():
    r = mc_slope(np.eye(2), np.zeros(2), 1.0, np.geomspace(0.1, 0.01, 4), trials=20_000)
    assert abs(r["slope"] - 2) <= 0.1 and r["bound_holds"]
