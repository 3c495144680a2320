"""Conditional Poisson sampling (maximum-entropy fixed-size design).

p(s) is proportional to exp(sum_{k in s} lambda_k) on samples of size n. All
inclusion probabilities are computed from elementary symmetric functions of
the weights exp(lambda_k), accumulated in log space.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from . import _kernels
from .frame import Sample, as_pi


class ConvergenceError(RuntimeError):
    """The parameter solver did not reach the requested tolerance."""


def _shift(a):
    out = np.full_like(a, -np.inf)
    out[..., 1:] = a[..., :-1]
    return out


def log_esf_tables(lam: np.ndarray, n: int):
    """Forward and backward log elementary symmetric function tables.

    ``F[i, j] = log e_j(w_0..w_{i-1})`` and ``B[i, j] = log e_j(w_i..w_{N-1})``
    for j = 0..n, with w = exp(lam). Broadcasts over leading axes of ``lam``.
    """
    lam = np.asarray(lam, dtype=np.float64)
    N = lam.shape[-1]
    lead = lam.shape[:-1]
    F = np.full(lead + (N + 1, n + 1), -np.inf)
    B = np.full(lead + (N + 1, n + 1), -np.inf)
    F[..., 0, 0] = 0.0
    B[..., N, 0] = 0.0
    with np.errstate(invalid="ignore"):
        for i in range(N):
            F[..., i + 1, :] = np.logaddexp(F[..., i, :], _shift(F[..., i, :]) + lam[..., i, None])
        for i in range(N - 1, -1, -1):
            B[..., i, :] = np.logaddexp(B[..., i + 1, :], _shift(B[..., i + 1, :]) + lam[..., i, None])
    return F, B


def _inclusion_from_tables(lam, F, B, n):
    if n == 0:
        return np.zeros_like(lam)
    # sum over j of e_j(before k) * e_{n-1-j}(after k)
    left = F[..., :-1, :n]
    right = B[..., 1:, :n][..., ::-1]
    with np.errstate(invalid="ignore"):
        lse = logsumexp(left + right, axis=-1)
        logpi = lam + lse - F[..., -1, n][..., None]
    out = np.exp(logpi)
    return np.where(np.isnan(out), 0.0, out)


def cps_inclusion(lam, n: int) -> np.ndarray:
    """Inclusion probabilities of the size-n design p(s) ~ exp(sum lam)."""
    lam = np.asarray(lam, dtype=np.float64)
    F, B = log_esf_tables(lam, n)
    return _inclusion_from_tables(lam, F, B, n)


def cps_joint(lam, n: int, chunk: int = 64) -> np.ndarray:
    """Joint inclusion matrix of the size-n design p(s) ~ exp(sum lam).

    Uses pi_kl = pi_k * P(l in S | k in S); the conditional design is again
    conditional Poisson, of size n - 1 on the other units.
    """
    lam = np.asarray(lam, dtype=np.float64)
    N = lam.shape[0]
    pi = cps_inclusion(lam, n)
    J = np.zeros((N, N))
    if n >= 2:
        for lo in range(0, N, chunk):
            ks = np.arange(lo, min(lo + chunk, N))
            L = np.broadcast_to(lam, (ks.size, N)).copy()
            L[np.arange(ks.size), ks] = -np.inf
            F, B = log_esf_tables(L, n - 1)
            cond = _inclusion_from_tables(L, F, B, n - 1)
            J[ks] = pi[ks, None] * cond
    J = 0.5 * (J + J.T)
    np.fill_diagonal(J, pi)
    return J


@dataclass(frozen=True)
class CpsParameters:
    """Solved conditional Poisson design.

    ``lam`` holds the parameters of the free units (0 < pi < 1), normalized to
    mean zero; units with pi = 1 are always selected and units with pi = 0
    never.
    """

    lam: np.ndarray
    n: int
    target_pi: np.ndarray
    free: np.ndarray
    certain: np.ndarray
    iterations: int = 0
    _logB: np.ndarray = field(default=None, repr=False, compare=False)

    @property
    def N(self) -> int:
        return self.target_pi.shape[0]

    @property
    def n_free(self) -> int:
        return self.n - int(self.certain.sum())

    @property
    def lam_full(self) -> np.ndarray:
        """Parameters on all units (+inf for certain, -inf for excluded)."""
        out = np.where(self.certain, np.inf, -np.inf)
        out[self.free] = self.lam
        return out

    def logB(self) -> np.ndarray:
        if self._logB is None:
            _, B = log_esf_tables(self.lam, self.n_free)
            object.__setattr__(self, "_logB", B)
        return self._logB

    def inclusion(self) -> np.ndarray:
        """Inclusion probabilities induced by ``lam``."""
        out = self.certain.astype(np.float64)
        out[self.free] = cps_inclusion(self.lam, self.n_free)
        return out


def _split(pi, n):
    pi = as_pi(pi)
    if n is None:
        n = int(round(pi.sum()))
    if abs(pi.sum() - n) > 1e-9:
        raise ValueError(f"inclusion probabilities sum to {pi.sum():.12g}, not n = {n}")
    certain = pi >= 1.0 - 1e-12
    excluded = pi <= 1e-12
    free = ~(certain | excluded)
    return pi, int(n), free, certain


def solve_lambda(pi, n: int = None, tol: float = 1e-10, max_iter: int = 200,
                 newton_max_n: int = 400) -> CpsParameters:
    """Find the parameters whose conditional Poisson design has inclusion
    probabilities ``pi``.

    Damped Newton steps use the exact Jacobian, which is the covariance
    matrix of the inclusion indicators. Above ``newton_max_n`` free units, or
    when that matrix is numerically singular, the fixed-point update
    ``lam += log(pi) - log(pi(lam))`` is used instead.
    """
    pi, n, free, certain = _split(pi, n)
    target = pi[free]
    m = target.size
    n_free = n - int(certain.sum())
    if m == 0:
        return CpsParameters(np.zeros(0), n, pi, np.flatnonzero(free), certain, 0)
    lam = np.log(target) - np.log1p(-target)
    lam -= lam.mean()
    cur = cps_inclusion(lam, n_free)
    err = np.abs(cur - target).max()
    use_newton = m <= newton_max_n
    it = 0
    while err > tol and it < max_iter:
        it += 1
        step = None
        if use_newton:
            J = cps_joint(lam, n_free)
            D = J - np.outer(cur, cur)
            np.fill_diagonal(D, cur * (1 - cur))
            M = D + 1.0
            if np.linalg.cond(M) < 1e12:
                step = np.linalg.solve(M, target - cur)
            else:
                use_newton = False
        if step is None:
            step = np.log(target) - np.log(cur)
        t = 1.0
        while True:
            trial = lam + t * step
            trial -= trial.mean()
            new = cps_inclusion(trial, n_free)
            new_err = np.abs(new - target).max()
            if new_err < err or t < 1e-4:
                break
            t *= 0.5
        if new_err >= err and use_newton:
            use_newton = False
            continue
        lam, cur, err = trial, new, new_err
    if err > tol:
        raise ConvergenceError(f"solve_lambda: max error {err:.3g} after {it} iterations")
    return CpsParameters(lam, n, pi, np.flatnonzero(free), certain, it)


def cps_sample(params: CpsParameters, rng: np.random.Generator) -> Sample:
    """Draw a conditional Poisson sample (exact sequential list method)."""
    ind = params.certain.astype(np.uint8)
    if params.lam.size:
        u = rng.random(params.lam.size)
        sub = _kernels.impl.cps_draw(params.lam, params.logB(), params.n_free, u)
        ind[params.free] = sub
    return Sample(ind)


def cps_probability(s: Sample, params: CpsParameters) -> float:
    """Exact probability of sample ``s`` under the design."""
    ind = s.indicator if isinstance(s, Sample) else np.asarray(s)
    if int(ind.sum()) != params.n:
        raise ValueError(f"sample has size {int(ind.sum())}, design has fixed size {params.n}")
    if np.any(ind[params.certain] == 0):
        return 0.0
    excluded = ~params.certain.copy()
    excluded[params.free] = False
    if np.any(ind[excluded] == 1):
        return 0.0
    logB = params.logB()
    return float(np.exp(params.lam[ind[params.free] == 1].sum() - logB[0, params.n_free]))


def cps_joint_inclusion(params: CpsParameters) -> np.ndarray:
    """N x N joint inclusion probabilities (diagonal = pi_k)."""
    N = params.N
    pi = params.inclusion()
    J = np.outer(pi, pi)
    # certain units are independent of everything; excluded units have 0 rows
    f = params.free
    if f.size:
        J[np.ix_(f, f)] = cps_joint(params.lam, params.n_free)
    np.fill_diagonal(J, pi)
    return J


def cps_design_from_pi(pi, n=None, **kw) -> CpsParameters:
    """Convenience alias used by the sampler registry."""
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return solve_lambda(pi, n, **kw)
