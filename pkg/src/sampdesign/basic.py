"""Basic designs: Bernoulli, Poisson, simple random, stratified, systematic.

Also stratum allocation (proportional, Neyman with take-all strata) and
model-optimal inclusion probabilities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .frame import FrameError, InclusionProbabilities, PopulationFrame, Sample, as_pi


@dataclass(frozen=True)
class Allocation:
    """Per-stratum sample sizes."""

    n_h: np.ndarray
    take_all: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "n_h", np.asarray(self.n_h, dtype=np.int64))
        object.__setattr__(self, "take_all", np.asarray(self.take_all, dtype=bool))

    @property
    def n(self) -> int:
        return int(self.n_h.sum())

    def as_tuple(self):
        return tuple(int(x) for x in self.n_h)


def bernoulli_sample(frame: PopulationFrame, pi: float, rng: np.random.Generator) -> Sample:
    """Each unit enters independently with the same probability ``pi``."""
    pi = float(pi)
    if not 0.0 <= pi <= 1.0:
        raise ValueError("pi must lie in [0, 1]")
    return Sample((rng.random(frame.N) < pi).astype(np.uint8))


def poisson_sample(frame: PopulationFrame, pi, rng: np.random.Generator) -> Sample:
    """Independent inclusions with unit-specific probabilities."""
    pi = as_pi(pi, frame.N)
    return Sample((rng.random(frame.N) < pi).astype(np.uint8))


def _fisher_yates(N: int, n: int, rng: np.random.Generator) -> np.ndarray:
    # partial shuffle: after step i, perm[:i+1] is a uniform ordered draw
    perm = np.arange(N)
    j = (np.arange(n) + rng.random(n) * (N - np.arange(n))).astype(np.int64)
    for i in range(n):
        perm[i], perm[j[i]] = perm[j[i]], perm[i]
    return perm[:n]


def srs_indices(N: int, n: int, rng: np.random.Generator) -> np.ndarray:
    if not 0 <= n <= N:
        raise ValueError(f"sample size {n} outside [0, {N}]")
    return _fisher_yates(N, n, rng)


def srs_sample(frame: PopulationFrame, n: int, rng: np.random.Generator) -> Sample:
    """Simple random sampling without replacement of exactly ``n`` units."""
    return Sample.from_indices(srs_indices(frame.N, int(n), rng), frame.N)


def srs_inclusion(N: int, n: int):
    """(pi_k, pi_kl) of simple random sampling."""
    pk = n / N
    pkl = n * (n - 1) / (N * (N - 1)) if N > 1 else 0.0
    return pk, pkl


def largest_remainder(quotas: np.ndarray, total: int) -> np.ndarray:
    """Round nonnegative ``quotas`` to integers summing to ``total``.

    Floors first, then hands the remaining units to the largest fractional
    parts; ties go to the lowest index.
    """
    quotas = np.asarray(quotas, dtype=np.float64)
    base = np.floor(quotas + 1e-12).astype(np.int64)
    left = int(total - base.sum())
    if left < 0:
        raise ValueError("quotas exceed total")
    frac = quotas - base
    order = sorted(range(len(quotas)), key=lambda h: (-round(frac[h], 12), h))
    for h in order[:left]:
        base[h] += 1
    return base


def _strata_sizes(frame: PopulationFrame) -> np.ndarray:
    if frame.strata is None:
        raise FrameError("frame has no strata")
    Nh = frame.stratum_sizes()
    if np.any(Nh == 0):
        raise FrameError("empty stratum")
    return Nh


def proportional_allocation(frame: PopulationFrame, n: int) -> Allocation:
    """n_h proportional to N_h, rounded by largest remainder."""
    Nh = _strata_sizes(frame)
    n = int(n)
    if not 0 <= n <= frame.N:
        raise ValueError(f"sample size {n} outside [0, {frame.N}]")
    nh = largest_remainder(n * Nh / Nh.sum(), n)
    return Allocation(nh, nh == Nh)


def stratum_dispersions(frame: PopulationFrame, y) -> np.ndarray:
    """Per-stratum standard deviation V_h (divisor N_h - 1) of ``y``."""
    Nh = _strata_sizes(frame)
    y = np.asarray(y, dtype=np.float64)
    V = np.zeros(len(Nh))
    for h in range(len(Nh)):
        yh = y[frame.strata == h]
        V[h] = yh.std(ddof=1) if yh.size > 1 else 0.0
    return V


def neyman_quotas(Nh, V, n):
    """Continuous Neyman allocation with take-all strata.

    Returns (quotas, take_all). Strata whose raw quota exceeds N_h are fixed
    at N_h and the rest re-allocated, until no quota exceeds its stratum.
    """
    Nh = np.asarray(Nh, dtype=np.float64)
    V = np.asarray(V, dtype=np.float64)
    take = np.zeros(len(Nh), dtype=bool)
    while True:
        q = np.where(take, Nh, 0.0)
        rest = n - Nh[take].sum()
        w = np.where(take, 0.0, Nh * V)
        if w.sum() > 0:
            q = q + np.where(take, 0.0, rest * w / w.sum())
        elif rest > 0:
            # all remaining dispersions zero: fall back to proportional
            free_n = np.where(take, 0.0, Nh)
            q = q + rest * free_n / free_n.sum()
        over = (~take) & (q > Nh + 1e-12)
        if not over.any():
            return q, take
        take |= over


def stratified_objective(Nh, V, nh) -> float:
    """Variance of the stratified expansion estimator,
    sum_h N_h^2 V_h^2 (1/n_h - 1/N_h)."""
    Nh = np.asarray(Nh, dtype=np.float64)
    V = np.asarray(V, dtype=np.float64)
    nh = np.asarray(nh, dtype=np.float64)
    total = 0.0
    for a, v, m in zip(Nh, V, nh):
        if v == 0:
            continue
        if m == 0:
            return math.inf
        total += a * a * v * v * (1.0 / m - 1.0 / a)
    return total


def _improve(Nh, V, nh, protect):
    """Single-unit transfers between strata while they strictly lower the
    objective. The objective is separable and convex, so a transfer-stable
    allocation is the integer optimum."""
    nh = nh.copy()
    H = len(nh)
    while True:
        cur = stratified_objective(Nh, V, nh)
        best, move = cur, None
        for i in range(H):
            if protect[i] or nh[i] == 0:
                continue
            for j in range(H):
                if j == i or protect[j] or nh[j] >= Nh[j]:
                    continue
                nh[i] -= 1
                nh[j] += 1
                val = stratified_objective(Nh, V, nh)
                nh[i] += 1
                nh[j] -= 1
                if val < best - 1e-12 * max(1.0, abs(cur)):
                    best, move = val, (i, j)
        if move is None:
            return nh
        nh[move[0]] -= 1
        nh[move[1]] += 1


def neyman_allocation(frame: PopulationFrame, n: int, dispersion=None, y=None) -> Allocation:
    """Neyman (variance-minimizing) allocation of ``n`` units to strata.

    Pass either per-stratum ``dispersion`` V_h or a per-unit ``y`` from which
    V_h is computed. Strata with a quota above N_h are taken whole. The
    continuous quotas are rounded by largest remainder; the rounded
    allocation is then moved to the integer minimizer of the stratified
    variance when rounding missed it.
    """
    Nh = _strata_sizes(frame)
    return _neyman(Nh, n, dispersion if dispersion is not None else stratum_dispersions(frame, y))


def _neyman(Nh, n, V) -> Allocation:
    Nh = np.asarray(Nh, dtype=np.int64)
    V = np.asarray(V, dtype=np.float64)
    n = int(n)
    if V.shape != Nh.shape:
        raise ValueError("one dispersion per stratum required")
    if np.any(V < 0) or not np.any(V > 0):
        raise ValueError("dispersions must be >= 0 and not all zero")
    if not 0 <= n <= Nh.sum():
        raise ValueError(f"sample size {n} outside [0, {Nh.sum()}]")
    q, take = neyman_quotas(Nh, V, n)
    nh = largest_remainder(q, n)
    nh = np.minimum(nh, Nh)
    need = (V > 0) & (nh == 0)
    if need.any() and n >= int((V > 0).sum()):
        # an empty stratum with V_h > 0 makes the variance infinite
        for h in np.flatnonzero(need):
            donor = int(np.argmax(np.where(nh > 1, nh, -1)))
            nh[donor] -= 1
            nh[h] += 1
    if np.isfinite(stratified_objective(Nh, V, nh)):
        nh = _improve(Nh, V, nh, take)
    return Allocation(nh, take | (nh == Nh))


def stratified_indices(strata: np.ndarray, n_h, rng: np.random.Generator) -> np.ndarray:
    out = []
    for h, m in enumerate(n_h):
        units = np.flatnonzero(strata == h)
        if m > units.size:
            raise ValueError(f"n_h = {m} exceeds stratum size {units.size}")
        out.append(units[_fisher_yates(units.size, int(m), rng)])
    return np.concatenate(out) if out else np.zeros(0, dtype=np.int64)


def stratified_srs_sample(frame: PopulationFrame, alloc: Allocation, rng: np.random.Generator) -> Sample:
    """Independent simple random samples of size n_h in every stratum."""
    _strata_sizes(frame)
    n_h = alloc.n_h if isinstance(alloc, Allocation) else np.asarray(alloc)
    if len(n_h) != frame.H:
        raise ValueError("allocation does not match the number of strata")
    return Sample.from_indices(stratified_indices(frame.strata, n_h, rng), frame.N)


def stratified_inclusion(frame: PopulationFrame, alloc) -> np.ndarray:
    n_h = alloc.n_h if isinstance(alloc, Allocation) else np.asarray(alloc)
    Nh = frame.stratum_sizes()
    return (n_h / Nh)[frame.strata]


def optimal_inclusion_probabilities(sigma, n: float) -> InclusionProbabilities:
    """Inclusion probabilities proportional to the model dispersion.

    pi_k = n sigma_k / sum(sigma); units whose value would exceed 1 get
    probability 1 and the rest is recomputed on the others, to a fixed point.
    """
    sigma = np.asarray(sigma, dtype=np.float64)
    if np.any(sigma < 0) or not np.isfinite(sigma).all():
        raise ValueError("sigma must be finite and >= 0")
    if sigma.sum() <= 0:
        raise ValueError("sigma must not be all zero")
    if not 0 <= n <= sigma.size:
        raise ValueError(f"n = {n} outside [0, {sigma.size}]")
    capped = np.zeros(sigma.size, dtype=bool)
    while True:
        rest = n - capped.sum()
        s = np.where(capped, 0.0, sigma)
        if rest > 0 and s.sum() <= 0:
            raise ValueError("n exceeds the number of units with positive sigma")
        pi = np.where(capped, 1.0, rest * s / s.sum() if s.sum() > 0 else 0.0)
        over = (~capped) & (pi >= 1.0)
        if not over.any():
            return InclusionProbabilities(np.clip(pi, 0.0, 1.0))
        capped |= over


def inclusion_proportional(size, n: float) -> InclusionProbabilities:
    """pi_k proportional to a positive size measure (capped at 1)."""
    return optimal_inclusion_probabilities(size, n)


def _lattice_axes(frame: PopulationFrame):
    if frame.coords is None or frame.d != 2:
        raise FrameError("systematic grid sampling needs 2-d coordinates")
    c = frame.coords
    xs, ys = np.unique(c[:, 0]), np.unique(c[:, 1])
    if xs.size * ys.size != frame.N:
        raise FrameError("coordinates do not form a complete lattice")
    for axis in (xs, ys):
        if axis.size > 1 and not np.allclose(np.diff(axis), axis[1] - axis[0]):
            raise FrameError("coordinates are not equally spaced")
    lookup = {}
    x0, y0 = xs[0], ys[0]
    hx = xs[1] - xs[0] if xs.size > 1 else 1.0
    hy = ys[1] - ys[0] if ys.size > 1 else 1.0
    for k in range(frame.N):
        key = (int(round((c[k, 0] - x0) / hx)), int(round((c[k, 1] - y0) / hy)))
        if key in lookup:
            raise FrameError("duplicate lattice point")
        lookup[key] = k
    return xs.size, ys.size, lookup


def systematic_grid_sample(frame: PopulationFrame, n: int, rng: np.random.Generator) -> Sample:
    """Spatial systematic sample on a regular lattice.

    A square sub-lattice of spacing sqrt(N/n) (in lattice steps) is laid over
    the population square with a uniform random offset; each sub-lattice
    point selects the population unit whose cell contains it. Every unit has
    inclusion probability n/N exactly; the realized size is n whenever the
    sub-lattice tiles the square, otherwise it varies around n.
    """
    nx, ny, lookup = _lattice_axes(frame)
    n = int(n)
    if not 1 <= n <= frame.N:
        raise ValueError(f"sample size {n} outside [1, {frame.N}]")
    s = math.sqrt(frame.N / n)
    off = rng.random(2) * s
    px = off[0] - 0.5 + s * np.arange(int(math.ceil(nx / s)) + 1)
    py = off[1] - 0.5 + s * np.arange(int(math.ceil(ny / s)) + 1)
    px = px[px < nx - 0.5]
    py = py[py < ny - 0.5]
    ix = np.floor(px + 0.5).astype(int)
    iy = np.floor(py + 0.5).astype(int)
    chosen = [lookup[(a, b)] for a in ix for b in iy]
    return Sample.from_indices(chosen, frame.N)
