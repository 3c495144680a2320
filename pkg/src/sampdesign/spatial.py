"""Spatially balanced designs: pivotal methods, GRTS and the local cube."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.spatial import cKDTree

from . import _kernels
from .cube import BalanceWarning, FlightState, flight_phase, landing_phase, make_problem, _aux_matrix
from .frame import FrameError, PopulationFrame, Sample, as_pi

EPS = 1e-12
KD_THRESHOLD = 10_000
GRTS_MAX_DEPTH = 20

EUCLIDEAN = "euclidean_on_coords"
MAHALANOBIS = "mahalanobis_on_aux"


@dataclass(frozen=True)
class DistanceContext:
    """Distance used to find neighbours.

    For the Mahalanobis metric the aux covariance and mean are cached with a
    whitening matrix ``W`` such that ``|(x_k - x_l) W|^2`` equals the
    Mahalanobis squared distance.
    """

    metric: str = EUCLIDEAN
    cov: Optional[np.ndarray] = field(default=None, repr=False)
    mean: Optional[np.ndarray] = field(default=None, repr=False)
    whitener: Optional[np.ndarray] = field(default=None, repr=False)

    def points(self, frame: PopulationFrame) -> np.ndarray:
        """Coordinates in which plain Euclidean distance is the metric."""
        if self.metric == EUCLIDEAN:
            if frame.coords is None or frame.d == 0:
                raise FrameError("frame has no coordinates")
            return np.ascontiguousarray(frame.coords, dtype=np.float64)
        if self.metric == MAHALANOBIS:
            return np.ascontiguousarray((frame.aux - self.mean) @ self.whitener)
        raise ValueError(f"unknown metric {self.metric!r}")

    def sqdist(self, frame: PopulationFrame, k: int, l: int) -> float:
        P = self.points(frame)
        diff = P[k] - P[l]
        return float(diff @ diff)


def euclidean_context() -> DistanceContext:
    return DistanceContext(EUCLIDEAN)


def mahalanobis_context(frame: PopulationFrame) -> DistanceContext:
    """Mahalanobis distance on the frame's aux variables (population covariance
    with divisor N; a small ridge is added when it is near singular)."""
    x = np.asarray(frame.aux, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] == 0:
        raise FrameError("frame has no auxiliary variables")
    N, p = x.shape
    if N < 2:
        raise FrameError("need at least two units")
    mean = x.mean(axis=0)
    xc = x - mean
    cov = xc.T @ xc / N
    level = np.trace(cov) / p
    if level <= 0:
        level = 1.0
    evals = np.linalg.eigvalsh(cov)
    if evals.min() < 1e-12 * level:
        warnings.warn("aux covariance is singular; ridge added", RuntimeWarning, stacklevel=2)
        cov = cov + 1e-10 * level * np.eye(p)
    evals, vecs = np.linalg.eigh(cov)
    W = (vecs / np.sqrt(evals)) @ vecs.T
    return DistanceContext(MAHALANOBIS, cov, mean, W)


# --- pivotal -----------------------------------------------------------------

def pivotal_update(pi_i: float, pi_j: float, rng: np.random.Generator):
    """Two-point lottery that resolves one of two fractional probabilities.

    The sum is kept and each expectation is preserved.
    """
    if not (0.0 < pi_i < 1.0 and 0.0 < pi_j < 1.0):
        raise ValueError("pivotal_update needs two probabilities strictly between 0 and 1")
    return _kernels.impl.pivot(float(pi_i), float(pi_j), rng.random())


def _checked_pi(frame: PopulationFrame, pi) -> np.ndarray:
    pi = np.array(as_pi(pi, frame.N))
    pi[pi <= EPS] = 0.0
    pi[pi >= 1 - EPS] = 1.0
    return pi


def sequential_pivotal_sample(frame: PopulationFrame, pi, rng: np.random.Generator,
                              backend: Optional[str] = None) -> Sample:
    """Pivotal method applied to units in frame order."""
    pi = _checked_pi(frame, pi)
    u = rng.random(frame.N + 1)
    return Sample.from_vector(_kernels.get(backend).pivotal_sequential(pi, u))


def _local_pivotal_kd(v: np.ndarray, X: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Local pivotal method with k-d tree neighbour search (large N)."""
    tree = cKDTree(X)
    free = (v > 0) & (v < 1)
    items = np.flatnonzero(free)
    pos = np.full(v.size, -1, dtype=np.int64)
    pos[items] = np.arange(items.size)
    m = items.size
    pivot = _kernels.impl.pivot

    def remove(k):
        nonlocal m
        t = pos[k]
        last = items[m - 1]
        items[t] = last
        pos[last] = t
        pos[k] = -1
        m -= 1

    while m >= 2:
        i = int(items[min(int(rng.random() * m), m - 1)])
        k = 8
        while True:
            kk = min(k, v.size)
            dist, idx = tree.query(X[i], k=kk)
            dist, idx = np.atleast_1d(dist), np.atleast_1d(idx)
            ok = (pos[idx] >= 0) & (idx != i)
            if ok.any():
                best = dist[ok].min()
                # ties could continue past the queried neighbours
                if kk == v.size or dist[-1] > best:
                    ties = idx[ok & (dist == best)]
                    break
            k *= 4
        j = int(ties[min(int(rng.random() * ties.size), ties.size - 1)])
        a, b = pivot(v[i], v[j], rng.random())
        v[i] = 0.0 if a <= EPS else (1.0 if a >= 1 - EPS else a)
        v[j] = 0.0 if b <= EPS else (1.0 if b >= 1 - EPS else b)
        if not 0 < v[i] < 1:
            remove(i)
        if not 0 < v[j] < 1:
            remove(j)
    if m == 1:
        k = int(items[0])
        v[k] = 1.0 if rng.random() < v[k] else 0.0
    return v


def local_pivotal_sample(frame: PopulationFrame, pi, ctx: Optional[DistanceContext] = None,
                         rng: np.random.Generator = None, backend: Optional[str] = None,
                         kd_threshold: int = KD_THRESHOLD) -> Sample:
    """Local pivotal method: a random unresolved unit competes with its
    nearest unresolved neighbour (ties broken uniformly at random)."""
    ctx = ctx or euclidean_context()
    pi = _checked_pi(frame, pi)
    X = ctx.points(frame)
    if frame.N > kd_threshold:
        return Sample.from_vector(_local_pivotal_kd(pi, X, rng))
    u = rng.random(3 * frame.N + 1)
    return Sample.from_vector(_kernels.get(backend).local_pivotal(pi, X, u))


# --- GRTS --------------------------------------------------------------------

class QuadTree:
    """Recursive quadrant split of the bounding box until every cell's
    inclusion-probability sum is at most one.

    ``paths[k, t]`` is the internal node visited by unit k at depth t and
    ``quads[k, t]`` the quadrant taken there (-1 past the unit's leaf).
    """

    def __init__(self, coords: np.ndarray, pi: np.ndarray, max_depth: int = GRTS_MAX_DEPTH):
        N = coords.shape[0]
        self.n_internal = 0
        paths = np.full((N, max_depth), -1, dtype=np.int64)
        quads = np.full((N, max_depth), -1, dtype=np.int64)
        self.truncated = False
        lo = coords.min(axis=0)
        hi = coords.max(axis=0)
        stack = [(np.arange(N), lo, hi, 0)]
        while stack:
            members, lo, hi, depth = stack.pop()
            if members.size <= 1 or pi[members].sum() <= 1.0 + 1e-12:
                continue
            if depth >= max_depth:
                self.truncated = True
                continue
            node = self.n_internal
            self.n_internal += 1
            mid = 0.5 * (lo + hi)
            right = coords[members, 0] >= mid[0]
            top = coords[members, 1] >= mid[1]
            q = right.astype(np.int64) + 2 * top.astype(np.int64)
            paths[members, depth] = node
            quads[members, depth] = q
            for c in range(4):
                sub = members[q == c]
                if sub.size:
                    slo = np.where([c & 1, c & 2], mid, lo)
                    shi = np.where([c & 1, c & 2], hi, mid)
                    stack.append((sub, slo, shi, depth + 1))
        used = int((paths >= 0).any(axis=0).sum())
        self.paths = paths[:, :used]
        self.quads = quads[:, :used]

    def random_order(self, rng: np.random.Generator) -> np.ndarray:
        """Unit order with an independent random quadrant order at each node
        and random order inside leaves."""
        N = self.paths.shape[0]
        ranks = np.argsort(rng.random((max(self.n_internal, 1), 4)), axis=1).argsort(axis=1)
        keys = np.where(self.paths >= 0, ranks[np.maximum(self.paths, 0), np.maximum(self.quads, 0)], -1)
        tie = rng.random(N)
        # lexsort uses the last key as primary
        return np.lexsort((tie,) + tuple(keys[:, t] for t in range(keys.shape[1] - 1, -1, -1)))


def systematic_along(pi_ordered: np.ndarray, u: float) -> np.ndarray:
    """Systematic selection of the points u, u+1, ... along cumulated pi."""
    c = np.cumsum(pi_ordered)
    total = round(c[-1])
    if abs(c[-1] - total) <= 1e-9:
        c[-1] = total
    prev = np.concatenate(([0.0], c[:-1]))
    return (np.ceil(c - u) - np.ceil(prev - u)).astype(np.int64)


def grts_sample(frame: PopulationFrame, pi, rng: np.random.Generator, tree: Optional[QuadTree] = None) -> Sample:
    """Generalized random tessellation stratified sample on 2-d coordinates."""
    pi = _checked_pi(frame, pi)
    if frame.coords is None or frame.d != 2:
        raise FrameError("GRTS needs two-dimensional coordinates")
    n = pi.sum()
    if abs(n - round(n)) > 1e-9:
        raise ValueError(f"inclusion probabilities sum to {n:.12g}; GRTS needs an integer sample size")
    if tree is None:
        tree = QuadTree(np.asarray(frame.coords, dtype=np.float64), pi)
    order = tree.random_order(rng)
    hits = systematic_along(pi[order], rng.random())
    ind = np.zeros(frame.N, dtype=np.uint8)
    ind[order] = hits > 0
    return Sample(ind)


# --- local cube --------------------------------------------------------------

def local_cube_sample(frame: PopulationFrame, pi, aux=None, ctx: Optional[DistanceContext] = None,
                      rng: np.random.Generator = None, backend: Optional[str] = None,
                      trace: Optional[list] = None) -> Sample:
    """Balanced and spread sample.

    Flight steps run on a random unresolved unit and its p nearest unresolved
    neighbours; the last few units go through a global flight and landing.
    """
    ctx = ctx or euclidean_context()
    pi = _checked_pi(frame, pi)
    x, names = _aux_matrix(frame, pi, aux)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", BalanceWarning)
        problem = make_problem(pi, x, names)
        A = np.ascontiguousarray(problem.A[:, list(problem.active)])
        p = A.shape[1]
        X = ctx.points(frame)
        u = rng.random((p + 2) * frame.N + 1)
        v = _kernels.get(backend).local_cube(A, pi, X, u, trace)
        state = flight_phase(problem, rng, v0=v, backend=backend)
        return landing_phase(state, problem, rng, backend=backend)
