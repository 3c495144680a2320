from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sampdesign import _kernels
from sampdesign.cube import cube_sample
from sampdesign.frame import PopulationFrame, grid_frame
from sampdesign.spatial import (
    DistanceContext, QuadTree, grts_sample, local_cube_sample, local_pivotal_sample, mahalanobis_context,
    pivotal_update, sequential_pivotal_sample, systematic_along,
)

from conftest import max_z


def point_frame(coords, aux=None):
    coords = np.asarray(coords, dtype=float)
    N = coords.shape[0]
    if aux is None:
        aux = np.column_stack([np.ones(N), coords])
        names = ("one", "x", "y")
    else:
        aux = np.asarray(aux, dtype=float).reshape(N, -1)
        names = tuple(f"a{j}" for j in range(aux.shape[1]))
    return PopulationFrame(unit_ids=[str(k) for k in range(N)], aux=aux, aux_names=names,
                           coords=coords, coord_names=("x", "y"))


def lottery(a, b):
    """Both outcomes of the pivotal update and their probabilities."""
    pivot = _kernels.impl.pivot
    lo, hi = pivot(a, b, 0.0), pivot(a, b, 1.0 - 1e-16)
    s = a + b
    p_lo = (1 - b) / (2 - s) if s > 1 else b / s
    return lo, hi, p_lo


def test_pivotal_update_examples():
    lo, hi, p = lottery(0.5, 0.5)
    assert {lo, hi} == {(0.0, 1.0), (1.0, 0.0)} and p == pytest.approx(0.5)
    lo, hi, p = lottery(0.3, 0.9)
    assert lo == pytest.approx((1.0, 0.2)) and hi == pytest.approx((0.2, 1.0))
    assert p == pytest.approx(0.125)
    assert p * 1 + (1 - p) * 0.2 == pytest.approx(0.3)
    # sum <= 1: (0, 0.5) with probability 0.6 and (0.5, 0) with probability 0.4
    lo, hi, p = lottery(0.2, 0.3)
    assert lo == pytest.approx((0.0, 0.5)) and hi == pytest.approx((0.5, 0.0))
    assert p == pytest.approx(0.6)
    assert (1 - p) * 0.5 == pytest.approx(0.2)


@settings(max_examples=500, deadline=None)
@given(st.floats(1e-6, 1 - 1e-6), st.floats(1e-6, 1 - 1e-6), st.floats(0, 1, exclude_max=True))
def test_pivotal_update_properties(a, b, u):
    pivot = _kernels.impl.pivot
    x, y = pivot(a, b, u)
    assert abs((x + y) - (a + b)) <= 1e-15
    assert x in (0.0, 1.0) or y in (0.0, 1.0)
    lo, hi, p = lottery(a, b)
    assert p * lo[0] + (1 - p) * hi[0] == pytest.approx(a, abs=1e-12)


def test_pivotal_update_rejects_resolved(rng):
    with pytest.raises(ValueError):
        pivotal_update(0.0, 0.5, rng)
    with pytest.raises(ValueError):
        pivotal_update(0.5, 1.0, rng)
    a, b = pivotal_update(0.3, 0.9, rng)
    assert a + b == pytest.approx(1.2, abs=1e-15)


def test_sequential_pivotal_two_and_four(rng):
    f2 = point_frame([[0, 0], [1, 0]])
    R = 20000
    counts = Counter(sequential_pivotal_sample(f2, [0.5, 0.5], rng).key() for _ in range(R))
    assert set(counts) == {"10", "01"}
    assert max_z([counts["10"] / R], [0.5], R) < 4
    f4 = point_frame([[0, 0], [1, 0], [2, 0], [3, 0]])
    R = 40000
    acc = np.zeros(4)
    for _ in range(R):
        s = sequential_pivotal_sample(f4, np.full(4, 0.5), rng)
        assert s.size == 2
        acc += s.indicator
    assert max_z(acc / R, np.full(4, 0.5), R) < 4


def test_sequential_pivotal_certain_unit(rng):
    f = point_frame([[0, 0], [1, 0], [2, 0]])
    for _ in range(200):
        assert 2 in sequential_pivotal_sample(f, [0.5, 0.5, 1.0], rng)


def test_local_pivotal_two_units_like_sequential(rng):
    f = point_frame([[0, 0], [1, 0]])
    R = 20000
    counts = Counter(local_pivotal_sample(f, [0.3, 0.7], None, rng).key() for _ in range(R))
    assert set(counts) == {"10", "01"}
    assert max_z([counts["10"] / R], [0.3], R) < 4


def test_local_pivotal_clustered_pairs_repel(rng):
    f = point_frame([[0, 0], [0.1, 0], [10, 0], [10.1, 0]])
    R = 20000
    both = np.zeros(2)
    for _ in range(R):
        s = local_pivotal_sample(f, np.full(4, 0.5), None, rng).indicator
        both += [s[0] & s[1], s[2] & s[3]]
    assert np.all(both / R < 0.25 - 4 * np.sqrt(0.25 * 0.75 / R))


@pytest.mark.parametrize("kd", [False, True])
def test_local_pivotal_fixed_size_and_marginals(grid10, rng, kd):
    r = np.random.default_rng(0)
    pi = r.uniform(0.05, 0.5, 100)
    pi *= 20 / pi.sum()
    R = 2000
    acc = np.zeros(100)
    for _ in range(R):
        s = local_pivotal_sample(grid10, pi, None, rng, kd_threshold=10 if kd else 10_000)
        assert s.size == 20
        acc += s.indicator
    assert max_z(acc / R, pi, R) < 4.5


def test_local_pivotal_paths_agree_in_distribution(rng):
    f = point_frame(np.random.default_rng(2).uniform(0, 1, (5, 2)))
    pi = np.array([0.3, 0.5, 0.4, 0.6, 0.2])
    R = 8000
    a = Counter(local_pivotal_sample(f, pi, None, rng).key() for _ in range(R))
    b = Counter(local_pivotal_sample(f, pi, None, rng, kd_threshold=1).key() for _ in range(R))
    tv = 0.5 * sum(abs(a[k] - b[k]) / R for k in set(a) | set(b))
    assert tv < 0.04


def test_quadtree_leaves_have_small_mass():
    f = grid_frame(16)
    pi = np.full(256, 20 / 256)
    tree = QuadTree(f.coords, pi)
    depth = (tree.paths >= 0).sum(axis=1)
    leaf_key = [tuple(tree.quads[k, :depth[k]]) for k in range(256)]
    mass = Counter()
    for k, key in enumerate(leaf_key):
        mass[key] += pi[k]
    assert max(mass.values()) <= 1 + 1e-12


def test_grts_order_keeps_quadrants_contiguous(rng):
    f = grid_frame(8)
    pi = np.full(64, 4 / 64)
    tree = QuadTree(f.coords, pi)
    for _ in range(10):
        order = tree.random_order(rng)
        top = tree.quads[order, 0]
        # each top-level quadrant occupies one contiguous run
        runs = 1 + np.count_nonzero(np.diff(top))
        assert runs == 4


def test_systematic_along():
    pi = np.array([0.5, 0.5, 0.5, 0.5])
    assert systematic_along(pi, 0.25).tolist() == [1, 0, 1, 0]
    assert systematic_along(pi, 0.75).tolist() == [0, 1, 0, 1]


def test_grts_single_unit(rng):
    f = point_frame([[0.0, 0.0]])
    assert grts_sample(f, [1.0], rng).size == 1


def test_grts_unequal_fixed_size_and_marginals(grid10, rng):
    r = np.random.default_rng(5)
    pi = r.uniform(0.05, 0.6, 100)
    pi *= 25 / pi.sum()
    R = 4000
    acc = np.zeros(100)
    for _ in range(R):
        s = grts_sample(grid10, pi, rng)
        assert s.size == 25
        acc += s.indicator
    assert max_z(acc / R, pi, R) < 4.5


def test_grts_rejects_fractional_total(grid10, rng):
    with pytest.raises(ValueError):
        grts_sample(grid10, np.full(100, 0.105), rng)


def test_local_cube_fixed_size_and_balance(grid40, rng):
    pi = np.full(1600, 50 / 1600)
    for _ in range(5):
        s = local_cube_sample(grid40, pi, ["one", "x", "y"], None, rng)
        assert s.size == 50


def test_local_cube_whole_population_matches_cube(rng):
    f = point_frame([[0, 0], [1, 0], [0, 1]])
    pi = np.array([0.5, 0.7, 0.8])
    R = 6000
    a = Counter(local_cube_sample(f, pi, ["pi", "x"], None, rng).key() for _ in range(R))
    b = Counter(cube_sample(f, pi, ["pi", "x"], rng)[0].key() for _ in range(R))
    tv = 0.5 * sum(abs(a[k] - b[k]) / R for k in set(a) | set(b))
    assert tv < 0.04


def test_local_cube_pi_only_like_local_pivotal(rng):
    f = point_frame([[0, 0], [1, 0], [3, 0], [3.5, 0]])
    pi = np.array([0.4, 0.6, 0.3, 0.7])
    R = 8000
    a = Counter(local_cube_sample(f, pi, ["pi"], None, rng).key() for _ in range(R))
    b = Counter(local_pivotal_sample(f, pi, None, rng).key() for _ in range(R))
    tv = 0.5 * sum(abs(a[k] - b[k]) / R for k in set(a) | set(b))
    assert tv < 0.04


def test_mahalanobis_context():
    r = np.random.default_rng(0)
    z = r.normal(size=(200, 2))
    z = (z - z.mean(0)) @ np.linalg.inv(np.linalg.cholesky(np.cov(z.T, bias=True))).T
    f = point_frame(np.zeros((200, 2)), aux=z)
    ctx = mahalanobis_context(f)
    assert ctx.sqdist(f, 3, 7) == pytest.approx(float(((z[3] - z[7]) ** 2).sum()), rel=1e-9)
    assert ctx.sqdist(f, 5, 5) == 0.0
    g = point_frame(np.zeros((3, 2)), aux=[0.0, 1.0, 3.0])
    ctx = mahalanobis_context(g)
    assert ctx.cov[0, 0] == pytest.approx(14 / 9)
    assert ctx.sqdist(g, 0, 1) == pytest.approx(9 / 14)


def test_mahalanobis_singular_warns():
    f = point_frame(np.zeros((4, 2)), aux=np.column_stack([[1, 2, 3, 4], [2, 4, 6, 8]]))
    with pytest.warns(RuntimeWarning, match="singular"):
        ctx = mahalanobis_context(f)
    assert np.all(np.isfinite(ctx.whitener))


def test_mahalanobis_local_pivotal_runs(rng):
    r = np.random.default_rng(0)
    f = point_frame(r.uniform(size=(30, 2)), aux=r.normal(size=(30, 2)))
    ctx = mahalanobis_context(f)
    assert local_pivotal_sample(f, np.full(30, 0.2), ctx, rng).size == 6


def test_euclidean_context_needs_coords(rng):
    f = PopulationFrame(unit_ids=["a", "b"], aux=np.ones((2, 1)))
    with pytest.raises(ValueError):
        local_pivotal_sample(f, [0.5, 0.5], DistanceContext(), rng)
