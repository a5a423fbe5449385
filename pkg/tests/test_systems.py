import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from delaypredict.errors import ConfigurationError, DivergenceError, InvalidInputError
from delaypredict.systems import (GOLDEN_ANGLE, EmpiricalMeasure, Observable, PerturbationCoefficients,
                                  builtin_system, coordinate, default_beta, delay_map,
                                  dyadic_atomic_measure, iterate, iterate_many, measure_from_config,
                                  natural_measure, perturb_observable, polynomial_probe_family,
                                  sample_alpha, sample_ball, uniform_interval_pair_measure)


def test_identity_orbit():
    np.testing.assert_array_equal(iterate(builtin_system("identity", {"N": 1}), [0.2], 3),
                                  [[0.2], [0.2], [0.2]])


def test_logistic_exact():
    assert iterate(builtin_system("logistic", {"r": 4}), [0.5], 3)[:, 0].tolist() == [0.5, 1.0, 0.0]


def test_henon_first_step():
    np.testing.assert_array_equal(iterate(builtin_system("henon", {"a": 1.4, "b": 0.3}), [0, 0], 2),
                                  [[0, 0], [1, 0]])


def test_tent_value():
    assert builtin_system("tent", {"s": 2.0}).step(np.array([0.75]))[0] == 0.5


def test_burn_in_skips_prefix():
    s = builtin_system("logistic", {"r": 3.7})
    np.testing.assert_array_equal(iterate(s, [0.2], 5, burn_in=3), iterate(s, [0.2], 8)[3:])


def test_divergence_reports_index():
    s = builtin_system("logistic", {"r": 4})
    with pytest.raises(DivergenceError) as ei:
        iterate(s, [2.0], 20)
    assert ei.value.index > 0


def test_iterate_many_matches_iterate():
    s = builtin_system("henon", {"a": 1.4, "b": 0.3})
    x0 = np.array([[0.1, 0.0], [0.2, 0.1]])
    batch = iterate_many(s, x0, 4)
    for j in range(2):
        np.testing.assert_array_equal(batch[:, j], iterate(s, x0[j], 5))


def test_catalog_errors():
    with pytest.raises(ConfigurationError):
        builtin_system("nope")
    with pytest.raises(ConfigurationError):
        builtin_system("logistic", {})


def test_interval_pair_reflects_branch_one():
    s = builtin_system("interval_pair")
    np.testing.assert_array_equal(s.step(np.array([[0, 0.3], [1, 0.3]])), [[0, 0.3], [1, 0.7]])


def test_probe_family_sizes():
    assert len(polynomial_probe_family(1, 2)) == 2
    assert len(polynomial_probe_family(2, 2)) == 3
    fam = polynomial_probe_family(1, 4)
    V = fam.evaluate(np.array([[0.0], [1.0], [2.0], [3.0]]))
    # Vandermonde determinant: prod_{i<j} (t_j - t_i) = 1*2*3*1*2*1
    assert math.isclose(abs(np.linalg.det(V)), 12.0, rel_tol=1e-12)


def test_evaluate_without_exponents_agrees():
    fam = polynomial_probe_family(2, 3)
    x = np.random.default_rng(0).random((7, 2))
    slow = np.column_stack([m(x) for m in fam.members])
    np.testing.assert_allclose(fam.evaluate(x), slow, rtol=1e-14)


def test_perturbation_examples():
    fam1 = polynomial_probe_family(1, 2)
    h0 = Observable(lambda x: np.zeros(x.shape[:-1]), "zero")
    h = perturb_observable(h0, fam1, PerturbationCoefficients([2.0, 3.0]))
    np.testing.assert_allclose(h(np.array([[0.0], [1.0], [0.5]])), [2.0, 5.0, 3.5])
    fam = polynomial_probe_family(1, 4)
    hx = coordinate(0)
    assert perturb_observable(hx, fam, PerturbationCoefficients([0, 0, 1, 0]))(np.array([[0.5]]))[0] == 0.75
    x = np.array([[0.3]])
    assert perturb_observable(hx, fam, PerturbationCoefficients(np.zeros(4)))(x)[0] == hx(x)[0]
    with pytest.raises(InvalidInputError):
        perturb_observable(hx, fam, PerturbationCoefficients([1.0]))


def test_sample_alpha_contract():
    assert np.all(sample_alpha(1, 5, radius=0.0).alpha == 0)
    np.testing.assert_array_equal(sample_alpha(7, 4).alpha, sample_alpha(7, 4).alpha)
    assert np.linalg.norm(sample_alpha(7, 4, 0.1).alpha) <= 0.1


def test_ball_sampler_moments():
    x = sample_ball(np.random.default_rng(0), 10_000, 2, 1.0)
    assert np.linalg.norm(x.mean(axis=0)) < 0.05
    assert np.linalg.norm(x, axis=1).max() <= 1.0
    # uniform in the disk: E|x|^2 = 1/2
    assert abs(np.mean(np.sum(x * x, axis=1)) - 0.5) < 0.01


def test_natural_measure_identity():
    s = builtin_system("identity", {"N": 1})
    m = natural_measure(s, [0.4], 50, dedup=True)
    assert len(m) == 1 and m.masses[0] == 1.0
    assert len(natural_measure(s, [0.4], 50)) == 50


def test_rotation_equidistribution():
    m = natural_measure(builtin_system("circle_rotation", {"theta": GOLDEN_ANGLE}), [1, 0], 10_000)
    ang = np.mod(np.arctan2(m.atoms[:, 1], m.atoms[:, 0]), 2 * np.pi)
    for a, L in [(0.0, 1.0), (2.0, 0.3), (4.0, 2.2)]:
        assert abs(m.mass_of((ang >= a) & (ang < a + L)) - L / (2 * np.pi)) < 0.02


def test_logistic_invariant_density():
    m = natural_measure(builtin_system("logistic", {"r": 4}), [0.1234], 100_000, burn_in=100)
    oracle = quad(lambda x: 1 / (np.pi * np.sqrt(x * (1 - x))), 0.4, 0.6)[0]
    assert abs(oracle - 0.1282) < 1e-3
    assert abs(m.mass_of((m.atoms[:, 0] >= 0.4) & (m.atoms[:, 0] <= 0.6)) - oracle) < 0.01


def test_dyadic_single_level():
    d = dyadic_atomic_measure(n_max=1)
    np.testing.assert_array_equal(d.measure.atoms, [[0, 0.5], [1, 0.5]])
    np.testing.assert_array_equal(d.measure.masses, [0.5, 0.5])


def test_dyadic_masses_and_renormalization():
    d = dyadic_atomic_measure(n_max=12)
    raw = sum(float(default_beta(n)) for n in range(1, 13))
    assert math.isclose(d.raw_total, raw, rel_tol=1e-12)
    assert math.isclose(math.fsum(d.measure.masses), 1.0, abs_tol=1e-12)
    # each level carries beta_n / raw_total split evenly over its 2 * 2^(n-1) atoms
    lv = np.asarray(d.levels)
    for n in (1, 5, 12):
        share = d.measure.masses[lv == n]
        assert share.size == 2**n
        assert np.allclose(share, default_beta(n) / raw / 2**n, rtol=1e-12)


def test_uniform_interval_pair():
    m = uniform_interval_pair_measure(4)
    assert len(m) == 8
    np.testing.assert_allclose(m.atoms[:4, 1], [0.125, 0.375, 0.625, 0.875])
    with pytest.raises(ConfigurationError):
        measure_from_config({"kind": "bogus"})


def test_empirical_measure_validation():
    with pytest.raises(InvalidInputError):
        EmpiricalMeasure(np.zeros((2, 1)), [0.5, 0.6])
    with pytest.raises(InvalidInputError):
        EmpiricalMeasure(np.zeros((2, 1)), [1.0, 0.0])


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 5), st.integers(0, 1000))
def test_delay_map_shifts(k, seed):
    s = builtin_system("logistic", {"r": 3.9})
    x = np.random.default_rng(seed).random((5, 1))
    phi, phi_t = delay_map(s, coordinate(0), k, x)
    assert phi.shape == (5, k)
    np.testing.assert_array_equal(phi[:, 1:], phi_t[:, :-1])
    np.testing.assert_allclose(phi_t[:, 0], s.step(x)[:, 0])
