import itertools
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sampdesign.cps import (
    ConvergenceError, cps_inclusion, cps_joint, cps_joint_inclusion, cps_probability, cps_sample,
    log_esf_tables, solve_lambda,
)
from sampdesign.frame import Sample

from conftest import max_z


def brute(lam, n):
    """Support, probabilities, inclusion and joint by direct enumeration."""
    N = len(lam)
    subsets = list(itertools.combinations(range(N), n))
    w = np.array([np.exp(sum(lam[k] for k in s)) for s in subsets])
    p = w / w.sum()
    pi = np.zeros(N)
    J = np.zeros((N, N))
    for s, q in zip(subsets, p):
        for k in s:
            pi[k] += q
            for l in s:
                J[k, l] += q
    return subsets, p, pi, J


def test_esf_tables_match_direct_sums():
    lam = np.array([0.3, -1.2, 0.7, 0.0, 2.1])
    F, B = log_esf_tables(lam, 3)
    w = np.exp(lam)
    for j in range(4):
        direct = sum(np.prod(w[list(c)]) for c in itertools.combinations(range(5), j))
        assert np.exp(F[5, j]) == pytest.approx(direct, rel=1e-13)
        assert np.exp(B[0, j]) == pytest.approx(direct, rel=1e-13)


def test_three_unit_case():
    params = solve_lambda([0.8, 0.6, 0.6], 2)
    probs = {s: cps_probability(Sample.from_indices(s, 3), params) for s in [(0, 1), (0, 2), (1, 2)]}
    assert probs[(0, 1)] == pytest.approx(0.4, abs=1e-9)
    assert probs[(0, 2)] == pytest.approx(0.4, abs=1e-9)
    assert probs[(1, 2)] == pytest.approx(0.2, abs=1e-9)
    J = cps_joint_inclusion(params)
    assert J[0, 1] == pytest.approx(0.4, abs=1e-9)


def test_equal_pi_gives_constant_lambda():
    params = solve_lambda(np.full(6, 0.5), 3)
    np.testing.assert_allclose(params.lam, 0.0, atol=1e-12)


def test_eight_three_against_enumeration():
    r = np.random.default_rng(3)
    pi = r.uniform(0.1, 0.9, 8)
    pi *= 3 / pi.sum()
    params = solve_lambda(pi, 3)
    subsets, p, pi_b, J_b = brute(params.lam, 3)
    assert np.max(np.abs(pi_b - pi)) <= 1e-8
    for s, q in zip(subsets, p):
        assert cps_probability(Sample.from_indices(s, 8), params) == pytest.approx(q, abs=1e-12)
    assert sum(cps_probability(Sample.from_indices(s, 8), params) for s in subsets) == pytest.approx(1, abs=1e-10)
    np.testing.assert_allclose(cps_joint_inclusion(params), J_b, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.integers(3, 8), st.data())
def test_inclusion_recursion_matches_brute_force(N, data):
    n = data.draw(st.integers(1, N - 1))
    lam = np.array(data.draw(st.lists(st.floats(-3, 3), min_size=N, max_size=N)))
    _, _, pi_b, J_b = brute(lam, n)
    np.testing.assert_allclose(cps_inclusion(lam, n), pi_b, atol=1e-12)
    J = cps_joint(lam, n)
    np.testing.assert_allclose(J, J_b, atol=1e-12)
    np.testing.assert_allclose(J.sum(axis=1) - np.diag(J), (n - 1) * np.diag(J), atol=1e-9)


def test_srs_joint_reduction():
    J = cps_joint(np.zeros(4), 2)
    off = J[~np.eye(4, dtype=bool)]
    np.testing.assert_allclose(off, 1 / 6, atol=1e-14)


def test_certain_and_excluded_units(rng):
    pi = np.array([1.0, 0.0, 0.5, 0.5, 0.5, 0.5])
    params = solve_lambda(pi, 3)
    np.testing.assert_allclose(params.inclusion(), pi, atol=1e-10)
    for _ in range(50):
        s = cps_sample(params, rng)
        assert s.size == 3 and 0 in s and 1 not in s
    assert cps_probability(Sample.from_indices([1, 2, 3], 6), params) == 0.0


def test_errors():
    with pytest.raises(ValueError):
        solve_lambda([0.5, 0.5, 0.5], 2)
    params = solve_lambda([0.5, 0.5], 1)
    with pytest.raises(ValueError):
        cps_probability(Sample.from_indices([0, 1], 2), params)
    with pytest.raises(ConvergenceError):
        solve_lambda(np.linspace(0.05, 0.95, 10) * 5 / np.linspace(0.05, 0.95, 10).sum(), 5, max_iter=0)


def test_full_population(rng):
    params = solve_lambda(np.ones(4), 4)
    assert cps_sample(params, rng).size == 4


def test_draw_frequencies_three_units(rng):
    params = solve_lambda([0.8, 0.6, 0.6], 2)
    R = 100000
    counts = Counter(cps_sample(params, rng).key() for _ in range(R))
    freq = np.array([counts["110"], counts["101"], counts["011"]]) / R
    assert max_z(freq, [0.4, 0.4, 0.2], R) < 4


def test_equal_pi_draws_are_srs(rng):
    params = solve_lambda(np.full(5, 0.4), 2)
    R = 50000
    counts = Counter(cps_sample(params, rng).key() for _ in range(R))
    assert len(counts) == 10
    freq = np.array(list(counts.values())) / R
    assert max_z(freq, np.full(10, 0.1), R) < 4.5


def test_large_population_solves():
    r = np.random.default_rng(0)
    pi = r.uniform(0.005, 0.06, 1600)
    pi *= 50 / pi.sum()
    params = solve_lambda(pi, 50)
    assert np.max(np.abs(params.inclusion() - pi)) <= 1e-10
