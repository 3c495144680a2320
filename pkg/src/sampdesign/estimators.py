"""Horvitz-Thompson estimation, variance formulas and model-based predictors."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .frame import PopulationFrame, Sample, as_pi

COND_LIMIT = 1e12


class EstimationError(ValueError):
    """Inputs violate an estimator's requirements."""


def _indicator(sample) -> np.ndarray:
    if isinstance(sample, Sample):
        return sample.indicator.astype(bool)
    return np.asarray(sample).astype(bool)


@dataclass(frozen=True)
class SecondOrderStructure:
    """Joint inclusion probabilities and the matrix Delta = joint - pi pi^T
    (diagonal pi_k (1 - pi_k))."""

    joint: np.ndarray
    delta: np.ndarray
    fixed_size: bool

    @property
    def pi(self) -> np.ndarray:
        return np.diag(self.joint).copy()

    @classmethod
    def from_joint(cls, joint, fixed_size: Optional[bool] = None, tol: float = 1e-9) -> "SecondOrderStructure":
        J = np.array(joint, dtype=np.float64)
        if J.ndim != 2 or J.shape[0] != J.shape[1]:
            raise EstimationError("joint inclusion matrix must be square")
        if np.abs(J - J.T).max(initial=0.0) > tol:
            raise EstimationError("joint inclusion matrix is not symmetric")
        pi = np.diag(J).copy()
        bound = np.minimum.outer(pi, pi)
        if (J < -tol).any() or (J - bound > tol).any():
            raise EstimationError("joint inclusion probabilities must lie in [0, min(pi_k, pi_l)]")
        D = J - np.outer(pi, pi)
        np.fill_diagonal(D, pi * (1 - pi))
        n = pi.sum()
        rows_ok = np.abs(J.sum(axis=1) - pi - (n - 1) * pi).max(initial=0.0) <= tol
        if fixed_size is None:
            fixed_size = bool(rows_ok)
        elif fixed_size and not rows_ok:
            raise EstimationError("fixed_size is set but joint row sums do not equal (n - 1) pi_k")
        J.setflags(write=False)
        D.setflags(write=False)
        return cls(J, D, bool(fixed_size))

    @classmethod
    def poisson(cls, pi) -> "SecondOrderStructure":
        pi = as_pi(pi)
        J = np.outer(pi, pi)
        np.fill_diagonal(J, pi)
        return cls.from_joint(J, fixed_size=False)


@dataclass(frozen=True)
class ModelSpec:
    """Linear superpopulation model y_k = x_k^T beta + e_k.

    ``sigma`` is the per-unit error standard deviation; ``rho`` the error
    correlation matrix for the correlated variant.
    """

    beta: np.ndarray
    sigma: np.ndarray
    rho: Optional[np.ndarray] = None
    variant: str = "independent_errors"

    def __post_init__(self):
        beta = np.atleast_1d(np.asarray(self.beta, dtype=np.float64))
        sigma = np.asarray(self.sigma, dtype=np.float64)
        if (sigma < 0).any():
            raise ValueError("sigma must be non-negative")
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "sigma", sigma)
        if self.variant not in ("independent_errors", "correlated_errors"):
            raise ValueError(f"unknown model variant {self.variant!r}")
        if self.rho is not None:
            rho = np.asarray(self.rho, dtype=np.float64)
            if rho.shape != (sigma.size, sigma.size):
                raise ValueError("rho must be N x N")
            if np.abs(rho - rho.T).max() > 1e-12 or np.abs(np.diag(rho) - 1).max() > 1e-12:
                raise ValueError("rho must be symmetric with unit diagonal")
            if np.abs(rho).max() > 1 + 1e-12:
                raise ValueError("correlations must lie in [-1, 1]")
            object.__setattr__(self, "rho", rho)
        elif self.variant == "correlated_errors":
            raise ValueError("correlated_errors model needs rho")


def nht_total(sample, y, pi) -> float:
    """Horvitz-Thompson estimate of the total of ``y``."""
    s = _indicator(sample)
    pi = as_pi(pi)
    y = np.asarray(y, dtype=np.float64)
    if np.any(pi[s] == 0):
        raise EstimationError("sampled unit has zero inclusion probability (coverage violation)")
    return float(np.sum(y[s] / pi[s]))


def _structure(design) -> SecondOrderStructure:
    if isinstance(design, SecondOrderStructure):
        return design
    if hasattr(design, "second_order"):
        return design.second_order()
    return SecondOrderStructure.from_joint(design)


def quadratic_variance(delta, y, pi) -> float:
    """sum_k sum_l y_k y_l Delta_kl / (pi_k pi_l)."""
    z = np.asarray(y, dtype=np.float64) / pi
    return float(z @ delta @ z)


def syg_variance(delta, y, pi) -> float:
    """Sen-Yates-Grundy form -1/2 sum_{k != l} (y_k/pi_k - y_l/pi_l)^2 Delta_kl."""
    z = np.asarray(y, dtype=np.float64) / pi
    D = np.array(delta)
    np.fill_diagonal(D, 0.0)
    diff = z[:, None] - z[None, :]
    return float(-0.5 * np.sum(diff * diff * D))


def true_variance_nht(design, y, pi=None, tol: float = 1e-9) -> float:
    """Design variance of the HT estimator.

    For fixed-size designs the Sen-Yates-Grundy form is evaluated as well and
    must agree.
    """
    st = _structure(design)
    pi = st.pi if pi is None else as_pi(pi)
    if np.any(pi <= 0):
        raise EstimationError("variance needs all inclusion probabilities > 0")
    v = quadratic_variance(st.delta, y, pi)
    if st.fixed_size:
        w = syg_variance(st.delta, y, pi)
        if abs(v - w) > tol * max(1.0, abs(v)):
            raise EstimationError(f"variance forms disagree: {v!r} vs {w!r}")
    return v


def _sample_joint(joint, idx, N):
    J = np.asarray(joint, dtype=np.float64)
    if J.shape == (N, N):
        return J[np.ix_(idx, idx)]
    if J.shape == (idx.size, idx.size):
        return J
    raise EstimationError("joint probabilities must be N x N or n x n over the sampled units")


def estimate_variance(sample, y, pi, joint, fixed_size: bool = False) -> float:
    """Unbiased variance estimate of the HT estimator from one sample.

    Horvitz-Thompson form in general; Sen-Yates-Grundy form when
    ``fixed_size``. ``joint`` holds pi_kl for all units or for the sampled
    units only (in sample index order).
    """
    s = _indicator(sample)
    pi = as_pi(pi)
    y = np.asarray(y, dtype=np.float64)
    idx = np.flatnonzero(s)
    if idx.size == 0:
        return 0.0
    if joint is None:
        raise EstimationError("joint inclusion probabilities are required for variance estimation")
    Js = _sample_joint(joint, idx, pi.size)
    ps = pi[idx]
    if np.any(ps <= 0):
        raise EstimationError("sampled unit has zero inclusion probability")
    off = ~np.eye(idx.size, dtype=bool)
    if np.any(Js[off] <= 0):
        raise EstimationError("zero joint inclusion probability among sampled pairs")
    D = Js - np.outer(ps, ps)
    np.fill_diagonal(D, ps * (1 - ps))
    Jd = np.array(Js)
    np.fill_diagonal(Jd, ps)
    W = D / Jd
    z = y[idx] / ps
    if fixed_size:
        diff = z[:, None] - z[None, :]
        return float(-0.5 * np.sum((diff * diff * W)[off]))
    return float(z @ W @ z)


def _wls(x, y, sigma):
    w = 1.0 / sigma
    Xw = x * w[:, None]
    yw = y * w
    if Xw.shape[0] < Xw.shape[1]:
        raise EstimationError("fewer sampled units than model coefficients")
    sv = np.linalg.svd(Xw, compute_uv=False)
    if sv[-1] == 0 or sv[0] / sv[-1] > COND_LIMIT:
        raise EstimationError("weighted design matrix is singular")
    beta, *_ = np.linalg.lstsq(Xw, yw, rcond=None)
    return beta


def blup_total(sample, frame: PopulationFrame, y, model: ModelSpec, x=None) -> float:
    """Best linear unbiased predictor of the total: observed values plus
    weighted least-squares predictions for the non-sampled units."""
    s = _indicator(sample)
    y = np.asarray(y, dtype=np.float64)
    x = frame.aux if x is None else np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    sigma = np.broadcast_to(model.sigma, (s.size,))
    if np.any(sigma[s] <= 0):
        raise EstimationError("sampled units need positive sigma")
    if s.all():
        return float(y.sum())
    beta = _wls(x[s], y[s], sigma[s])
    return float(y[s].sum() + (x[~s] @ beta).sum())


def godambe_joshi_bound(pi, sigma) -> float:
    """sum_k (1 - pi_k) sigma_k^2 / pi_k."""
    pi = as_pi(pi)
    sigma = np.asarray(sigma, dtype=np.float64)
    return float(np.sum((1 - pi) * sigma ** 2 / pi))


@dataclass(frozen=True)
class AnticipatedVariance:
    """Anticipated variance split into the balance term and the error term."""

    balance_term: float
    error_term: float
    balance_se: float = 0.0

    @property
    def total(self) -> float:
        return self.balance_term + self.error_term

    def __float__(self):
        return self.total


def anticipated_variance(design, frame: Optional[PopulationFrame], model: ModelSpec, pi=None,
                         x=None) -> AnticipatedVariance:
    """Anticipated variance E_p E_M (Y_hat - Y)^2 of the HT estimator.

    ``design`` is an enumerated design or a second-order structure (exact
    balance term) or a sequence of Samples drawn from the design (Monte
    Carlo balance term with its standard error).
    """
    x = frame.aux if x is None else np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    mean = x @ model.beta
    se = 0.0
    if isinstance(design, (list, tuple)):
        if pi is None:
            raise ValueError("pi is required with a Monte Carlo design")
        pi = as_pi(pi)
        est = np.array([nht_total(s, mean, pi) for s in design])
        dev2 = (est - mean.sum()) ** 2
        balance = float(dev2.mean())
        se = float(dev2.std(ddof=1) / np.sqrt(dev2.size)) if dev2.size > 1 else float("nan")
        st = None
    else:
        st = _structure(design)
        pi = st.pi if pi is None else as_pi(pi)
        balance = quadratic_variance(st.delta, mean, pi)
    sigma = np.broadcast_to(model.sigma, pi.shape)
    if model.variant == "correlated_errors":
        if st is None:
            raise ValueError("correlated-errors term needs the second-order structure")
        cov = np.outer(sigma, sigma) * model.rho
        error = float(np.sum(st.delta * cov / np.outer(pi, pi)))
    else:
        error = godambe_joshi_bound(pi, sigma)
    return AnticipatedVariance(balance, error, se)


def avar_balanced_closed_form(sigma, n: int, N: Optional[int] = None) -> float:
    """Anticipated variance of a balanced design with pi proportional to sigma."""
    sigma = np.asarray(sigma, dtype=np.float64)
    N = sigma.size if N is None else int(N)
    if n <= 0:
        raise ValueError("n must be positive")
    if n > N:
        raise ValueError("n must not exceed N")
    if (sigma < 0).any():
        raise ValueError("sigma must be non-negative")
    mean = sigma.mean()
    var = np.mean((sigma - mean) ** 2)
    return float(N * N * ((N - n) / N * mean * mean / n - var / N))


@dataclass(frozen=True)
class OptimalDesignCase:
    model: str
    design: str
    model_variance: str
    pi_rule: str


OPTIMAL_DESIGN_CASES = {
    "srs": OptimalDesignCase("y_k = beta + e_k", "srs", "sigma^2", "n/N"),
    "bernoulli": OptimalDesignCase("y_k = e_k", "bernoulli", "sigma^2", "E(n_S)/N"),
    "cps": OptimalDesignCase("y_k = x_k beta + e_k", "cps", "x_k^2 sigma^2", "proportional to x_k"),
    "poisson": OptimalDesignCase("y_k = e_k", "poisson", "x_k^2 sigma^2", "proportional to x_k"),
    "proportional_stratification": OptimalDesignCase("y_k = beta_h + e_k", "stratified_proportional",
                                                     "sigma^2", "n/N"),
    "optimal_stratification": OptimalDesignCase("y_k = beta_h + e_k", "stratified_neyman",
                                                "sigma_h^2", "proportional to sigma_h"),
}


def optimal_design_case(model_case: str) -> OptimalDesignCase:
    """Optimal design and inclusion rule for a special case of the linear model."""
    try:
        return OPTIMAL_DESIGN_CASES[model_case]
    except KeyError:
        raise ValueError(f"unknown model case {model_case!r}; "
                         f"choose from {sorted(OPTIMAL_DESIGN_CASES)}") from None


table1_check = optimal_design_case


def optimal_pi_for_case(model_case: str, n: int, N: int, x=None, strata=None, sigma_h=None) -> np.ndarray:
    """Inclusion probabilities prescribed for a model case."""
    from .basic import optimal_inclusion_probabilities

    case = optimal_design_case(model_case)
    if case.pi_rule in ("n/N", "E(n_S)/N"):
        return np.full(N, n / N)
    if case.pi_rule == "proportional to x_k":
        return optimal_inclusion_probabilities(np.asarray(x, dtype=np.float64), n).pi
    strata = np.asarray(strata)
    sig = np.asarray(sigma_h, dtype=np.float64)[strata]
    return optimal_inclusion_probabilities(sig, n).pi
