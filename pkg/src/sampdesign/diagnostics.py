"""Design diagnostics: entropy, spatial balance, Monte Carlo checks."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels
from .designs import DesignSpec, Sampler
from .frame import FrameError, PopulationFrame, Sample, as_pi
from .oracle import EnumeratedDesign
from .replication import run_replications


def design_entropy(design: EnumeratedDesign) -> float:
    """-sum p(s) log p(s), natural log, with 0 log 0 = 0."""
    p = np.asarray(design.probs, dtype=np.float64)
    if (p < 0).any():
        raise ValueError("negative sample probability")
    if abs(p.sum() - 1.0) > 1e-9:
        raise ValueError(f"probabilities sum to {p.sum()!r}")
    q = p[p > 0]
    return float(-np.sum(q * np.log(q))) + 0.0  # no negative zero


@dataclass(frozen=True)
class SpatialBalanceResult:
    """Inclusion mass of each sampled unit's Voronoi cell and the index."""

    v: np.ndarray
    index: float
    sampled: np.ndarray

    @property
    def B(self) -> float:
        return self.index


def _cell_mass_split(X, centers, pi):
    # equidistant units share their mass equally between the tied cells
    v = np.zeros(centers.size)
    C = X[centers]
    for lo in range(0, X.shape[0], 2048):
        P = X[lo:lo + 2048]
        D = ((P[:, None, :] - C[None, :, :]) ** 2).sum(axis=2)
        tie = D == D.min(axis=1, keepdims=True)
        w = tie / tie.sum(axis=1, keepdims=True)
        v += pi[lo:lo + 2048] @ w
    return v


def spatial_balance_index(frame: PopulationFrame, sample, pi, ties: str = "smallest") -> SpatialBalanceResult:
    """Voronoi spatial-balance index of a sample.

    Every population unit joins the cell of its nearest sampled unit
    (``ties="smallest"``: equidistant units go to the smallest sampled index;
    ``"split"``: their mass is shared). With v_i the inclusion mass of cell i,
    the index is mean((v_i - 1)^2) when the masses sum to the sample size and
    the variance of the v_i otherwise.
    """
    if frame.coords is None or frame.d == 0:
        raise FrameError("frame has no coordinates")
    pi = as_pi(pi, frame.N)
    ind = sample.indicator if isinstance(sample, Sample) else np.asarray(sample)
    centers = np.flatnonzero(ind)
    if centers.size == 0:
        raise ValueError("empty sample")
    X = np.ascontiguousarray(frame.coords, dtype=np.float64)
    if ties == "smallest":
        cell = _kernels.impl.nearest_assign(X, centers)
        v = np.bincount(cell, weights=pi, minlength=centers.size)
    elif ties == "split":
        v = _cell_mass_split(X, centers, pi)
    else:
        raise ValueError("ties must be 'smallest' or 'split'")
    n = centers.size
    if abs(pi.sum() - n) <= 1e-9:
        index = float(np.mean((v - 1.0) ** 2))
    else:
        index = float(np.var(v))
    return SpatialBalanceResult(v, index, centers)


def _as_callable(sampler, frame):
    if isinstance(sampler, DesignSpec):
        return Sampler(sampler, frame)
    if isinstance(sampler, dict):
        return Sampler(DesignSpec.from_dict(sampler), frame)
    return sampler


class _Indicator:
    def __init__(self, sampler):
        self.sampler = sampler

    def __call__(self, rng):
        return self.sampler(rng).indicator


def draw_indicators(sampler, frame: Optional[PopulationFrame], R: int, master_seed: int,
                    workers: int = 1) -> np.ndarray:
    """R x N matrix of sample indicators from seeded replications."""
    fn = _Indicator(_as_callable(sampler, frame))
    return np.vstack(run_replications(fn, R, master_seed, workers))


@dataclass(frozen=True)
class InclusionCheck:
    """Empirical inclusion frequencies against a target."""

    pi_hat: np.ndarray
    se: np.ndarray
    target: Optional[np.ndarray]
    z: Optional[np.ndarray]
    R: int

    @property
    def max_z(self) -> float:
        return float(np.max(np.abs(self.z))) if self.z is not None else float("nan")


def _studentize(pi_hat, target, R):
    sd = np.sqrt(target * (1 - target) / R)
    dev = pi_hat - target
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(sd > 0, dev / np.where(sd > 0, sd, 1.0), np.where(dev == 0, 0.0, np.inf))
    return z


def monte_carlo_inclusion(sampler, frame: Optional[PopulationFrame] = None, R: int = 10000,
                          master_seed: int = 0, target=None, workers: int = 1) -> InclusionCheck:
    """Inclusion frequencies over R replications with binomial standard
    errors and studentized deviations from ``target`` (default: the
    sampler's own pi when it has one)."""
    if R < 1:
        raise ValueError("R must be >= 1")
    fn = _as_callable(sampler, frame)
    I = draw_indicators(fn, None, R, master_seed, workers)
    pi_hat = I.mean(axis=0)
    se = np.sqrt(pi_hat * (1 - pi_hat) / R)
    if target is None:
        target = getattr(fn, "pi", None)
    z = None
    if target is not None:
        target = as_pi(target, pi_hat.size)
        z = _studentize(pi_hat, target, R)
    return InclusionCheck(pi_hat, se, target, z, R)


@dataclass(frozen=True)
class DeltaEstimate:
    """Empirical Delta matrix with grouped-jackknife standard errors."""

    delta: np.ndarray
    se: np.ndarray
    pi_hat: np.ndarray
    R: int


def _delta_from(S2, s1, R):
    p = s1 / R
    D = S2 / R - np.outer(p, p)
    np.fill_diagonal(D, p * (1 - p))
    return D


def delta_from_indicators(I: np.ndarray, groups: int = 50) -> DeltaEstimate:
    I = np.asarray(I, dtype=np.float64)
    R, N = I.shape
    S2 = I.T @ I
    s1 = I.sum(axis=0)
    D = _delta_from(S2, s1, R)
    G = min(groups, R)
    if G < 2:
        return DeltaEstimate(D, np.full_like(D, np.nan), s1 / R, R)
    bounds = np.linspace(0, R, G + 1).astype(np.int64)
    loo = np.empty((G, N, N))
    for g in range(G):
        blk = I[bounds[g]:bounds[g + 1]]
        loo[g] = _delta_from(S2 - blk.T @ blk, s1 - blk.sum(axis=0), R - blk.shape[0])
    se = np.sqrt((G - 1) / G * ((loo - loo.mean(axis=0)) ** 2).sum(axis=0))
    return DeltaEstimate(D, se, s1 / R, R)


def estimate_delta(sampler, frame: Optional[PopulationFrame] = None, R: int = 10000,
                   master_seed: int = 0, groups: int = 50, workers: int = 1) -> DeltaEstimate:
    """Delta_kl = pi_kl - pi_k pi_l estimated from R replications."""
    I = draw_indicators(sampler, frame, R, master_seed, workers)
    return delta_from_indicators(I, groups)
