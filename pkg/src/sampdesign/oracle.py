"""Exhaustive enumeration of designs on tiny populations.

Designs with a closed-form sample probability (Bernoulli, Poisson, SRS,
stratified SRS, conditional Poisson) are enumerated exactly; any sampler can
be tabulated empirically from seeded replications.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
from collections import Counter
from dataclasses import dataclass
from typing import Iterator, List, Optional, Tuple, Union

import numpy as np

from .designs import DesignSpec, Sampler
from .frame import PopulationFrame, Sample
from .replication import run_replications

MAX_N = 20
CLOSED_FORM = ("bernoulli", "poisson", "srs", "stratified", "cps")


class OracleError(ValueError):
    """The design cannot be enumerated."""


@dataclass(frozen=True)
class EnumeratedDesign:
    """Support (rows of 0/1 indicators, lexicographic order) and probabilities."""

    samples: np.ndarray
    probs: np.ndarray
    n_fixed: Optional[int] = None
    replications: Optional[int] = None

    def __post_init__(self):
        S = np.asarray(self.samples, dtype=np.uint8)
        p = np.asarray(self.probs, dtype=np.float64)
        if S.ndim != 2 or S.shape[0] != p.shape[0]:
            raise OracleError("one probability per sample required")
        if (p < 0).any():
            raise OracleError("negative sample probability")
        if abs(p.sum() - 1.0) > 1e-12 * max(1, p.size) ** 0.5 + 1e-12:
            raise OracleError(f"probabilities sum to {p.sum()!r}")
        S.setflags(write=False)
        p.setflags(write=False)
        object.__setattr__(self, "samples", S)
        object.__setattr__(self, "probs", p)

    @property
    def N(self) -> int:
        return self.samples.shape[1]

    @property
    def support(self) -> List[Tuple[Sample, float]]:
        return [(Sample(row.copy()), float(q)) for row, q in zip(self.samples, self.probs)]

    def __iter__(self) -> Iterator[Tuple[Sample, float]]:
        return iter(self.support)

    def __len__(self):
        return self.samples.shape[0]

    def inclusion(self) -> np.ndarray:
        return self.probs @ self.samples

    def joint(self) -> np.ndarray:
        S = self.samples.astype(np.float64)
        return (S * self.probs[:, None]).T @ S

    def second_order(self):
        from .estimators import SecondOrderStructure

        return SecondOrderStructure.from_joint(self.joint(), fixed_size=self.n_fixed is not None)

    def expectation(self, fn) -> float:
        """Sum of p(s) * fn(Sample(s)) over the support."""
        return float(sum(q * fn(Sample(row.copy())) for row, q in zip(self.samples, self.probs)))

    def probability(self, sample) -> float:
        ind = sample.indicator if isinstance(sample, Sample) else np.asarray(sample, dtype=np.uint8)
        hit = np.flatnonzero((self.samples == ind).all(axis=1))
        return float(self.probs[hit[0]]) if hit.size else 0.0

    def to_csv(self, dest=None) -> str:
        """Rows of (indicator string, probability)."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["sample", "probability"])
        for row, q in zip(self.samples, self.probs):
            w.writerow(["".join(map(str, row)), repr(float(q))])
        text = buf.getvalue()
        if dest is not None:
            with open(dest, "w", newline="") as fh:
                fh.write(text)
        return text

    def total_variation(self, other: "EnumeratedDesign") -> float:
        table = Counter()
        for row, q in zip(self.samples, self.probs):
            table[row.tobytes()] += q
        for row, q in zip(other.samples, other.probs):
            table[row.tobytes()] -= q
        return 0.5 * sum(abs(v) for v in table.values())


def _all_subsets(N: int) -> np.ndarray:
    # lexicographic over indicator strings: unit 0 is the most significant digit
    codes = np.arange(2 ** N, dtype=np.int64)
    shifts = np.arange(N - 1, -1, -1, dtype=np.int64)
    return ((codes[:, None] >> shifts) & 1).astype(np.uint8)


def _fixed_size_subsets(N: int, n: int) -> np.ndarray:
    rows = np.zeros((math.comb(N, n), N), dtype=np.uint8)
    for r, idx in enumerate(itertools.combinations(range(N), n)):
        rows[r, list(idx)] = 1
    # combinations come out in reverse lexicographic indicator order
    return rows[::-1].copy()


def _as_sampler(design, frame) -> Sampler:
    if isinstance(design, Sampler):
        return design
    if isinstance(design, DesignSpec):
        return Sampler(design, frame)
    if isinstance(design, dict):
        return Sampler(DesignSpec.from_dict(design), frame)
    raise TypeError("design must be a DesignSpec, dict or Sampler")


def enumerate_design(design: Union[DesignSpec, Sampler, dict], frame: Optional[PopulationFrame] = None) -> EnumeratedDesign:
    """Exact support and sample probabilities of a closed-form design."""
    sampler = _as_sampler(design, frame)
    frame = sampler.frame
    N = frame.N
    name = sampler.spec.name
    if name not in CLOSED_FORM:
        raise OracleError(f"design {name!r} has no closed-form sample probability; use empirical_design")
    if N > MAX_N:
        raise OracleError(f"N = {N} is too large to enumerate (limit {MAX_N})")
    pi = sampler.pi
    if name in ("bernoulli", "poisson"):
        S = _all_subsets(N)
        p = np.prod(np.where(S == 1, pi, 1.0 - pi), axis=1)
        n_fixed = None
    elif name == "srs":
        n = int(round(pi.sum()))
        S = _fixed_size_subsets(N, n)
        p = np.full(S.shape[0], 1.0 / S.shape[0])
        n_fixed = n
    elif name == "stratified":
        S = _fixed_size_subsets(N, sampler.allocation.n)
        ok = np.ones(S.shape[0], dtype=bool)
        for h, nh in enumerate(sampler.allocation.n_h):
            ok &= S[:, frame.strata == h].sum(axis=1) == nh
        S = S[ok]
        p = np.full(S.shape[0], 1.0 / S.shape[0])
        n_fixed = sampler.allocation.n
    else:
        params = sampler.params
        S = _fixed_size_subsets(N, params.n)
        free = params.free
        cert = params.certain
        excl = ~cert
        excl[free] = False
        valid = (S[:, cert] == 1).all(axis=1) & (S[:, excl] == 0).all(axis=1)
        score = S[:, free] @ params.lam
        score = np.where(valid, score, -np.inf)
        p = np.exp(score - score[valid].max()) if valid.any() else np.zeros(S.shape[0])
        p /= p.sum()
        n_fixed = params.n
    keep = p > 0
    return EnumeratedDesign(S[keep], p[keep] / p[keep].sum(), n_fixed)


def closed_form_joint(sampler: Sampler) -> Optional[np.ndarray]:
    """N x N joint inclusion probabilities, or None when no closed form exists."""
    name = sampler.spec.name
    pi = sampler.pi
    N = pi.size
    if name in ("bernoulli", "poisson"):
        J = np.outer(pi, pi)
    elif name == "srs":
        n = int(round(pi.sum()))
        J = np.full((N, N), n * (n - 1) / (N * (N - 1)) if N > 1 else 0.0)
    elif name == "stratified":
        strata = sampler.frame.strata
        Nh = sampler.frame.stratum_sizes()
        nh = sampler.allocation.n_h
        same = strata[:, None] == strata[None, :]
        with np.errstate(divide="ignore", invalid="ignore"):
            within = np.where(Nh > 1, nh * (nh - 1) / (Nh * np.maximum(Nh - 1, 1)), 0.0)
        J = np.where(same, within[strata][:, None], np.outer(pi, pi))
    elif name == "cps":
        from .cps import cps_joint_inclusion

        J = cps_joint_inclusion(sampler.params)
    else:
        return None
    J = np.array(J, dtype=np.float64)
    np.fill_diagonal(J, pi)
    return J


def empirical_design(sampler, frame: Optional[PopulationFrame] = None, R: int = 10000,
                     master_seed: int = 0, workers: int = 1) -> EnumeratedDesign:
    """Frequency table of the samples drawn in R seeded replications."""
    if isinstance(sampler, (DesignSpec, dict)):
        sampler = _as_sampler(sampler, frame)
    draws = run_replications(sampler, R, master_seed, workers)
    counts = Counter(s.indicator.tobytes() for s in draws)
    N = draws[0].N
    keys = sorted(counts)  # lexicographic order of indicator rows
    S = np.array([np.frombuffer(k, dtype=np.uint8) for k in keys]).reshape(-1, N)
    p = np.array([counts[k] for k in keys], dtype=np.float64) / R
    sizes = S.sum(axis=1)
    n_fixed = int(sizes[0]) if (sizes == sizes[0]).all() else None
    return EnumeratedDesign(S, p / p.sum(), n_fixed, R)
