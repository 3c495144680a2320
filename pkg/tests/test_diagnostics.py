import math

import numpy as np
import pytest
from scipy.linalg import null_space

from sampdesign.designs import DesignSpec, Sampler
from sampdesign.diagnostics import (
    delta_from_indicators, design_entropy, estimate_delta, monte_carlo_inclusion, spatial_balance_index,
)
from sampdesign.frame import PopulationFrame, Sample, grid_frame
from sampdesign.oracle import EnumeratedDesign, enumerate_design

from conftest import small_frame


def test_entropy_known_values():
    assert design_entropy(enumerate_design(DesignSpec("srs", n=2), small_frame(4))) == pytest.approx(math.log(6))
    assert design_entropy(enumerate_design(DesignSpec("bernoulli", pi=0.5), small_frame(3))) == pytest.approx(3 * math.log(2))
    one = EnumeratedDesign(np.array([[1, 0]], dtype=np.uint8), [1.0])
    assert design_entropy(one) == 0.0


def test_cps_entropy_beats_same_marginal_perturbations():
    pi = (0.3, 0.5, 0.6, 0.6)
    d = enumerate_design(DesignSpec("cps", pi=pi), small_frame(4))
    S = d.samples.astype(float)
    # directions that keep every first-order inclusion probability fixed
    dirs = null_space(np.vstack([S.T, np.ones(len(d))]))
    assert dirs.shape[1] > 0
    h0 = design_entropy(d)
    r = np.random.default_rng(1)
    for _ in range(20):
        step = dirs @ r.normal(size=dirs.shape[1])
        step *= 0.2 * d.probs.min() / np.abs(step).max()
        q = d.probs + step
        other = EnumeratedDesign(d.samples, q / q.sum(), 2)
        np.testing.assert_allclose(other.inclusion(), d.inclusion(), atol=1e-12)
        assert design_entropy(other) < h0


def test_balance_index_perfect_and_worst():
    f = grid_frame(4)
    pi = np.full(16, 0.25)
    # one unit per 2x2 block: every cell holds mass 1 exactly
    s = Sample.from_indices([0, 2, 8, 10], 16)
    res = spatial_balance_index(f, s, pi)
    np.testing.assert_allclose(res.v, 1.0)
    assert res.index == pytest.approx(0.0)
    clumped = spatial_balance_index(f, Sample.from_indices([0, 1, 4, 5], 16), pi)
    assert clumped.index > 0.5
    assert clumped.v.sum() == pytest.approx(4.0)


def test_balance_index_tie_modes():
    f = PopulationFrame(unit_ids=list("abc"), aux=np.ones((3, 1)), aux_names=("one",),
                        coords=np.array([[0.0, 0.0], [1.0, 0.0], [2.0, 0.0]]), coord_names=("x", "y"))
    pi = np.full(3, 2 / 3)
    s = Sample.from_indices([0, 2], 3)
    small = spatial_balance_index(f, s, pi, ties="smallest")
    np.testing.assert_allclose(small.v, [4 / 3, 2 / 3])
    split = spatial_balance_index(f, s, pi, ties="split")
    np.testing.assert_allclose(split.v, [1.0, 1.0])
    assert split.index == pytest.approx(0.0)
    with pytest.raises(ValueError):
        spatial_balance_index(f, s, pi, ties="random")


def test_balance_index_variance_form_when_not_fixed_size():
    f = grid_frame(4)
    pi = np.full(16, 0.2)
    res = spatial_balance_index(f, Sample.from_indices([0, 15], 16), pi)
    assert res.index == pytest.approx(np.var(res.v))


def test_monte_carlo_inclusion_srs():
    chk = monte_carlo_inclusion(DesignSpec("srs", n=3), small_frame(8), R=4000, master_seed=1)
    assert chk.max_z < 4.5
    assert chk.R == 4000
    np.testing.assert_allclose(chk.pi_hat.sum(), 3.0)


def test_delta_srs_off_diagonal():
    est = estimate_delta(DesignSpec("srs", n=2), small_frame(4), R=20000, master_seed=5)
    off = est.delta[~np.eye(4, dtype=bool)]
    se = est.se[~np.eye(4, dtype=bool)]
    assert np.all(np.abs(off + 1 / 12) < 4.5 * se)
    assert np.all(se > 0)


def test_delta_from_indicators_exact():
    I = np.array([[1, 0], [0, 1], [1, 1], [0, 0]])
    est = delta_from_indicators(I, groups=2)
    np.testing.assert_allclose(est.delta, [[0.25, 0.0], [0.0, 0.25]])
    assert np.isnan(delta_from_indicators(I[:1], groups=50).se).all()


def test_delta_jackknife_se_tracks_spread():
    # independent Bernoulli(0.5) pairs: se of Delta_12 should be near sqrt(1/16 / R)
    r = np.random.default_rng(0)
    I = (r.random((40000, 2)) < 0.5).astype(np.uint8)
    est = delta_from_indicators(I)
    assert est.se[0, 1] == pytest.approx(np.sqrt(1 / 16 / 40000), rel=0.3)
