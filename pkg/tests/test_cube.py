import itertools
import warnings

import numpy as np
import pytest

from sampdesign.cube import (
    BalanceWarning, FlightState, balance_check, cube_sample, flight_phase, landing_lottery, landing_phase,
    make_problem,
)
from sampdesign.frame import PopulationFrame, Sample, grid_frame
from sampdesign.basic import srs_sample

from conftest import max_z


def unequal_pi(N, n, seed=0):
    r = np.random.default_rng(seed)
    pi = r.uniform(0.1, 0.9, N)
    for _ in range(50):
        pi = np.clip(pi * n / pi.sum(), 0.02, 0.98)
    return pi * n / pi.sum()


@pytest.mark.parametrize("backend", ["python", "cython"])
def test_flight_keeps_balance_at_every_step(rng, backend):
    N = 60
    pi = unequal_pi(N, 12)
    x = np.column_stack([pi, rng.normal(size=N), rng.uniform(1, 3, N)])
    prob = make_problem(pi, x)
    trace = []
    st = flight_phase(prob, rng, trace=trace, backend=backend)
    target = prob.A.T @ pi
    assert len(trace) > 0
    for rec in trace:
        np.testing.assert_allclose(prob.A.T @ rec["before"], target, rtol=0, atol=1e-9 * np.abs(target).max())
        # two-point lottery with mean zero move
        mean_step = rec["prob_plus"] * rec["lam1"] - (1 - rec["prob_plus"]) * rec["lam2"]
        assert abs(mean_step) <= 1e-12 * max(rec["lam1"], rec["lam2"])
    np.testing.assert_allclose(prob.A.T @ st.v, target, atol=1e-9 * np.abs(target).max())
    assert st.free.size <= 3
    assert np.all((st.v >= 0) & (st.v <= 1))


def test_single_variable_pi_gives_fixed_size(rng):
    pi = unequal_pi(40, 7)
    prob = make_problem(pi, pi[:, None])
    for _ in range(20):
        st = flight_phase(prob, rng)
        assert st.free.size <= 1
        s = landing_phase(st, prob, rng)
        assert s.size == 7


def test_stratum_indicators_recover_stratification(rng):
    strata = np.repeat([0, 1, 2], [10, 15, 20])
    nh = np.array([3, 5, 4])
    pi = (nh / np.bincount(strata))[strata]
    x = np.column_stack([pi * (strata == h) for h in range(3)])
    prob = make_problem(pi, x)
    for _ in range(20):
        st = flight_phase(prob, rng)
        s = landing_phase(st, prob, rng)
        assert np.bincount(strata[s.indices], minlength=3).tolist() == nh.tolist()


def test_two_unit_lottery(rng):
    prob = make_problem([0.5, 0.5], np.array([[0.5], [0.5]]))
    R = 20000
    first = 0
    for _ in range(R):
        v = flight_phase(prob, rng).v
        assert sorted(v.tolist()) == [0.0, 1.0]
        first += v[0]
    assert max_z([first / R], [0.5], R) < 4


def test_landing_integral_state_unchanged(rng):
    prob = make_problem([0.5, 0.5, 0.5, 0.5], np.full((4, 1), 0.5))
    st = FlightState(np.array([1.0, 0.0, 1.0, 0.0]))
    assert landing_phase(st, prob, rng).indices.tolist() == [0, 2]


def test_landing_single_free_component(rng):
    pi = np.array([0.4, 0.6, 0.5])
    prob = make_problem(pi, np.column_stack([np.ones(3)]))
    st = FlightState(np.array([0.4, 1.0, 0.0]))
    R = 20000
    hits = sum(int(landing_phase(st, prob, rng).indicator[0]) for _ in range(R))
    assert max_z([hits / R], [0.4], R) < 4


def vertex_lottery_oracle(V, target, cost):
    """Best lottery by brute force over all supports of size <= q + 1."""
    M, q = V.shape
    best = np.inf
    Aeq = np.vstack([V.T, np.ones(M)])
    beq = np.append(target, 1.0)
    for r in range(1, q + 2):
        for idx in itertools.combinations(range(M), r):
            sol, *_ = np.linalg.lstsq(Aeq[:, idx], beq, rcond=None)
            if np.all(sol >= -1e-10) and np.allclose(Aeq[:, idx] @ sol, beq, atol=1e-10):
                best = min(best, float(cost[list(idx)] @ sol))
    return best


def test_landing_lottery_three_free(rng):
    V = np.array(list(itertools.product((0, 1), repeat=3)), dtype=float)
    for _ in range(30):
        target = rng.uniform(0.05, 0.95, 3)
        cost = rng.random(8)
        for method in ("enumerate", "linprog"):
            P = landing_lottery(V, target, cost, method)
            np.testing.assert_allclose(P @ V, target, atol=1e-9)
            assert P @ cost == pytest.approx(vertex_lottery_oracle(V, target, cost), abs=1e-9)


def test_cube_on_grid(grid40, rng):
    pi = np.full(1600, 50 / 1600)
    for _ in range(10):
        s, rep = cube_sample(grid40, pi, ["one", "x", "y"], rng)
        assert s.size == 50
        assert rep.relative[0] == 0.0
        assert rep.max_deviation < 0.06


def test_cube_pi_only_fixed_size(grid10, rng):
    pi = np.full(100, 0.2)
    for _ in range(10):
        s, rep = cube_sample(grid10, pi, ["pi"], rng)
        assert s.size == 20 and rep.max_deviation <= 1e-12


def test_cube_marginals(rng):
    N = 20
    f = grid_frame(1)
    r = np.random.default_rng(1)
    coords = r.uniform(0, 1, (N, 2))
    frame = PopulationFrame(unit_ids=[str(k) for k in range(N)], aux=np.column_stack([np.ones(N), coords]),
                            aux_names=("one", "x", "y"), coords=coords, coord_names=("x", "y"))
    pi = unequal_pi(N, 6)
    R = 20000
    acc = np.zeros(N)
    for _ in range(R):
        acc += cube_sample(frame, pi, ["pi", "x", "y"], rng)[0].indicator
    assert max_z(acc / R, pi, R) < 4.5


def test_balance_check_census_and_srs(grid40, rng):
    N = grid40.N
    rep = balance_check(Sample(np.ones(N, dtype=np.uint8)), np.ones(N), grid40.aux)
    assert rep.max_deviation == 0.0 and rep.passed
    pi = np.full(N, 50 / N)
    srs_dev = [balance_check(srs_sample(grid40, 50, rng), pi, grid40.aux).max_deviation for _ in range(300)]
    cube_dev = [cube_sample(grid40, pi, None, rng)[1].max_deviation for _ in range(300)]
    assert np.mean(cube_dev) < np.mean(srs_dev)
    rep = balance_check(srs_sample(grid40, 50, rng), pi, pi, c=0.0)
    assert rep.relative[0] <= 1e-12


def test_balance_report_norms():
    pi = np.full(4, 0.5)
    x = np.array([[1.0, 1.0], [1.0, 2.0], [1.0, 3.0], [1.0, 4.0]])
    s = Sample.from_indices([0, 1], 4)
    rep = balance_check(s, pi, x, norm="L2", c=0.5)
    np.testing.assert_allclose(rep.deviations, [0.0, (10 - 6) / 10])
    assert rep.norm_value == pytest.approx(0.4) and rep.passed
    assert not balance_check(s, pi, x, c=0.1).passed


def test_dependent_variables_dropped_with_warning(rng):
    pi = np.full(10, 0.3)
    x = np.column_stack([np.ones(10), 2 * np.ones(10), np.arange(10.0)])
    with pytest.warns(BalanceWarning, match="dependent"):
        prob = make_problem(pi, x)
    assert prob.active == (0, 2)
    s = landing_phase(flight_phase(prob, rng), prob, rng)
    assert s.size == 3


def test_relaxation_when_many_free_units(rng):
    N = 40
    pi = np.full(N, 0.5)
    x = rng.normal(size=(N, 14))
    x[:, 0] = pi
    prob = make_problem(pi, x)
    st = flight_phase(prob, rng)
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        s = landing_phase(st, prob, rng)
    assert s.size == 20
    if st.free.size > 12:
        assert any(issubclass(m.category, BalanceWarning) for m in w)
