"""Balanced sampling by the cube method.

The flight phase walks the inclusion vector through random vertices of the
constraint subspace ``{v : A^T v = A^T pi}`` until at most p components are
fractional; the landing phase then resolves those components with a lottery
over their 0/1 completions that keeps their expectations and minimizes the
expected squared normalized balance deviation.
"""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
from scipy.optimize import linprog

from . import _kernels
from .frame import PopulationFrame, Sample, as_pi

EPS = 1e-12
LP_MAX_FREE = 12
_ENUM_MAX_BASES = 5000


class BalanceWarning(RuntimeWarning):
    """A balancing variable was dropped (linear dependence or relaxation)."""


@dataclass(frozen=True)
class BalancingProblem:
    """Prescribed probabilities with the variables to balance on.

    ``x`` is N x p; the constraint matrix ``A`` has rows a_k = x_k / pi_k.
    ``active`` lists the columns kept after removing linear dependence among
    the free units.
    """

    pi: np.ndarray
    x: np.ndarray
    names: tuple = ()
    norm: str = "Linf"
    c: float = 0.0
    active: tuple = ()
    fixed_size: bool = False

    @property
    def N(self) -> int:
        return self.pi.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    @property
    def A(self) -> np.ndarray:
        """N x p matrix of x_k / pi_k (zero rows where pi_k = 0)."""
        with np.errstate(divide="ignore", invalid="ignore"):
            a = self.x / self.pi[:, None]
        a[self.pi == 0] = 0.0
        return a

    @property
    def totals(self) -> np.ndarray:
        return self.x.sum(axis=0)


def _independent_columns(M: np.ndarray, tol: float = 1e-12) -> List[int]:
    keep: List[int] = []
    if M.shape[0] == 0:
        return keep
    scale = np.abs(M).max() if M.size else 0.0
    for j in range(M.shape[1]):
        trial = M[:, keep + [j]]
        if scale > 0 and np.linalg.matrix_rank(trial, tol=tol * scale * max(M.shape)) > len(keep):
            keep.append(j)
    return keep


def make_problem(pi, x, names: Sequence[str] = (), norm: str = "Linf", c: float = 0.0) -> BalancingProblem:
    """Validate inputs and detect dependent balancing variables."""
    pi = as_pi(pi)
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] != pi.shape[0]:
        raise ValueError("x must have one row per unit")
    if not np.isfinite(x).all():
        raise ValueError("x contains non-finite values")
    if np.any((pi == 0) & np.any(x != 0, axis=1)):
        # such units cannot be selected; they break exact balance but not the walk
        pass
    names = tuple(names) or tuple(f"x{j}" for j in range(x.shape[1]))
    if norm not in ("Linf", "L2"):
        raise ValueError("norm must be 'Linf' or 'L2'")
    free = (pi > EPS) & (pi < 1 - EPS)
    with np.errstate(divide="ignore", invalid="ignore"):
        A = np.where(pi[:, None] > 0, x / pi[:, None], 0.0)
    active = _independent_columns(A[free])
    dropped = [names[j] for j in range(x.shape[1]) if j not in active]
    if dropped and free.sum() > len(active):
        warnings.warn(f"linearly dependent balancing variables dropped: {dropped}", BalanceWarning, stacklevel=2)
    # fixed size is implied when pi lies in the span of the balancing variables
    fixed = False
    if x.shape[1]:
        coef, *_ = np.linalg.lstsq(x, pi, rcond=None)
        fixed = bool(np.abs(x @ coef - pi).max() <= 1e-9 * max(1.0, pi.max()))
    return BalancingProblem(pi, x, names, norm, float(c), tuple(active), fixed)


@dataclass
class FlightState:
    """Inclusion vector at the end of (or during) the flight phase."""

    v: np.ndarray
    trace: Optional[list] = field(default=None, repr=False)

    @property
    def free(self) -> np.ndarray:
        return np.flatnonzero((self.v > EPS) & (self.v < 1 - EPS))


@dataclass(frozen=True)
class BalanceReport:
    """Normalized balance deviations D^-1 (X - X_hat) of one sample."""

    names: tuple
    totals: np.ndarray
    estimates: np.ndarray
    deviations: np.ndarray
    norm: str
    c: float
    size: int

    @property
    def relative(self) -> np.ndarray:
        """Per-variable |X_hat_j - X_j| / |X_j| (absolute when X_j = 0)."""
        return np.abs(self.deviations)

    @property
    def max_deviation(self) -> float:
        return float(self.relative.max()) if self.relative.size else 0.0

    @property
    def norm_value(self) -> float:
        if not self.deviations.size:
            return 0.0
        if self.norm == "L2":
            return float(np.linalg.norm(self.deviations))
        return float(np.abs(self.deviations).max())

    @property
    def passed(self) -> bool:
        return self.norm_value <= self.c

    def rows(self):
        for j, name in enumerate(self.names):
            yield name, float(self.totals[j]), float(self.estimates[j]), float(self.deviations[j])


def _scale(totals):
    return np.where(totals != 0, np.abs(totals), 1.0)


def balance_check(sample: Sample, pi, aux, norm: str = "Linf", c: float = 0.0,
                  names: Sequence[str] = ()) -> BalanceReport:
    """Balance deviations of ``sample`` for the variables in ``aux``."""
    pi = as_pi(pi)
    x = np.asarray(aux, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    ind = sample.indicator.astype(bool)
    if np.any(pi[ind] == 0):
        raise ValueError("sample contains a unit with zero inclusion probability")
    totals = x.sum(axis=0)
    est = (x[ind] / pi[ind, None]).sum(axis=0)
    dev = (totals - est) / _scale(totals)
    names = tuple(names) or tuple(f"x{j}" for j in range(x.shape[1]))
    return BalanceReport(names, totals, est, dev, norm, float(c), sample.size)


def flight_phase(problem: BalancingProblem, rng: np.random.Generator, v0=None,
                 trace: Optional[list] = None, backend: Optional[str] = None) -> FlightState:
    """Run the flight phase from ``v0`` (default: the prescribed pi).

    Units are visited in a uniformly random order. ``trace``, when a list,
    receives one record per step (state before, direction, step lengths and
    probability of the positive move).
    """
    kern = _kernels.get(backend)
    A = problem.A[:, list(problem.active)]
    v = problem.pi if v0 is None else np.asarray(v0, dtype=np.float64)
    order = rng.permutation(problem.N)
    u = rng.random(problem.N + 1)
    out = kern.flight(A, v, order, u, trace)
    return FlightState(out, trace)


# --- landing -----------------------------------------------------------------

def _independent_rows(M: np.ndarray) -> List[int]:
    return _independent_columns(M.T, tol=1e-10)


def _lottery_enumerate(V: np.ndarray, target: np.ndarray, cost: np.ndarray):
    """Optimal lottery by enumeration of basic feasible solutions."""
    M = V.shape[0]
    Aeq = np.vstack([V.T, np.ones(M)])
    beq = np.append(target, 1.0)
    rows = _independent_rows(Aeq)
    Aeq, beq = Aeq[rows], beq[rows]
    r = len(rows)
    best, best_cost = None, math.inf
    combos = np.array(list(itertools.combinations(range(M), r)), dtype=np.int64)
    mats = np.transpose(Aeq[:, combos], (1, 0, 2))
    det = np.linalg.det(mats)
    ok = np.abs(det) > 1e-10
    if not ok.any():
        return None
    sol = np.linalg.solve(mats[ok], np.broadcast_to(beq, (int(ok.sum()), r))[..., None])[..., 0]
    combos = combos[ok]
    feas = np.all(sol >= -1e-10, axis=1)
    for idx in np.flatnonzero(feas):
        val = float(np.dot(cost[combos[idx]], sol[idx]))
        if val < best_cost - 1e-12:
            best_cost, best = val, idx
    if best is None:
        return None
    P = np.zeros(M)
    P[combos[best]] = np.clip(sol[best], 0.0, None)
    return P / P.sum()


def _lottery_linprog(V: np.ndarray, target: np.ndarray, cost: np.ndarray):
    M = V.shape[0]
    Aeq = np.vstack([V.T, np.ones(M)])
    beq = np.append(target, 1.0)
    res = linprog(cost, A_eq=Aeq, b_eq=beq, bounds=(0, None), method="highs")
    if res.status != 0:
        return None
    P = np.clip(res.x, 0.0, None)
    return P / P.sum()


def landing_lottery(V: np.ndarray, target: np.ndarray, cost: np.ndarray, method: str = "auto"):
    """Distribution over the rows of ``V`` (0/1 completions) with mean
    ``target`` minimizing the expected ``cost``."""
    M, q = V.shape
    if method == "auto":
        method = "enumerate" if math.comb(M, min(q + 1, M)) <= _ENUM_MAX_BASES else "linprog"
    P = _lottery_enumerate(V, target, cost) if method == "enumerate" else None
    if P is None:
        P = _lottery_linprog(V, target, cost)
    if P is None:
        raise RuntimeError("landing phase: no feasible lottery")
    return P


def _completions(q: int, size: Optional[int]):
    V = np.array(list(itertools.product((0, 1), repeat=q)), dtype=np.float64).reshape(-1, q)
    if size is not None:
        V = V[V.sum(axis=1) == size]
    return V


def landing_phase(state: FlightState, problem: BalancingProblem, rng: np.random.Generator,
                  method: str = "auto", backend: Optional[str] = None) -> Sample:
    """Resolve the fractional components left by the flight phase."""
    v = np.array(state.v)
    free = state.free
    active = list(problem.active)
    # too many free units for the completion LP: relax constraints, fly again
    while free.size > LP_MAX_FREE and active:
        dropped = active.pop()
        warnings.warn(f"landing: relaxing balancing variable {problem.names[dropped]!r}", BalanceWarning, stacklevel=2)
        sub = BalancingProblem(problem.pi, problem.x, problem.names, problem.norm, problem.c,
                               tuple(active), problem.fixed_size)
        v = flight_phase(sub, rng, v0=v, backend=backend).v
        free = np.flatnonzero((v > EPS) & (v < 1 - EPS))
    q = free.size
    v[v <= EPS] = 0.0
    v[v >= 1 - EPS] = 1.0
    if q == 0:
        return Sample.from_vector(v)
    target = v[free]
    size = None
    if problem.fixed_size:
        m = target.sum()
        if abs(m - round(m)) <= 1e-9:
            size = int(round(m))
    V = _completions(q, size)
    A = problem.A
    totals = problem.totals
    base = (v == 1.0)
    resid = totals - A[base].sum(axis=0)
    dev = (resid[None, :] - V @ A[free]) / _scale(totals)
    cost = (dev ** 2).sum(axis=1)
    if q == 1 and size is None:
        P = np.array([1 - target[0], target[0]])
    else:
        P = landing_lottery(V, target, cost, method)
    pick = int(np.searchsorted(np.cumsum(P), rng.random() * P.sum(), side="right"))
    pick = min(pick, V.shape[0] - 1)
    v[free] = V[pick]
    return Sample.from_vector(v)


def cube(problem: BalancingProblem, rng: np.random.Generator, backend: Optional[str] = None) -> Sample:
    state = flight_phase(problem, rng, backend=backend)
    return landing_phase(state, problem, rng, backend=backend)


def _aux_matrix(frame: PopulationFrame, pi, aux_selector):
    if aux_selector is None:
        return frame.aux, frame.aux_names
    if isinstance(aux_selector, str):
        aux_selector = [a.strip() for a in aux_selector.split(",") if a.strip()]
    if isinstance(aux_selector, (list, tuple)) and all(isinstance(a, str) for a in aux_selector):
        cols, names = [], []
        for a in aux_selector:
            if a == "pi":
                cols.append(pi)
            elif a == "one" and "one" not in frame.aux_names:
                cols.append(np.ones(frame.N))
            else:
                cols.append(frame.column(a))
            names.append(a)
        return np.column_stack(cols), tuple(names)
    x = np.asarray(aux_selector, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    return x, tuple(f"x{j}" for j in range(x.shape[1]))


def cube_sample(frame: PopulationFrame, pi, aux_selector=None, rng: np.random.Generator = None,
                norm: str = "Linf", c: float = 0.0, backend: Optional[str] = None):
    """Balanced sample with prescribed inclusion probabilities.

    ``aux_selector`` is None (all frame aux columns), a list of column names
    (``"pi"`` and ``"one"`` are recognized), or an N x p array. Returns
    ``(sample, balance_report)``.
    """
    pi = as_pi(pi, frame.N)
    x, names = _aux_matrix(frame, pi, aux_selector)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", BalanceWarning)
        problem = make_problem(pi, x, names, norm, c)
    s = cube(problem, rng, backend)
    return s, balance_check(s, pi, x, norm, c, names)
