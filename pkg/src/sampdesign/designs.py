"""Design descriptors and frame-bound samplers.

A ``DesignSpec`` names a design and its parameters; ``Sampler`` binds it to a
frame, does the one-off set-up (CPS parameters, quadtree, allocation) and is
then called with a generator to draw samples. Samplers pickle, so they can
run in worker processes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Tuple, Union

import numpy as np

from . import basic, cps, cube, spatial
from .frame import PopulationFrame, Sample, as_pi

DESIGNS = (
    "bernoulli", "poisson", "srs", "stratified", "cps", "cube", "systematic",
    "sequential_pivotal", "local_pivotal", "grts", "local_cube",
)


@dataclass(frozen=True)
class DesignSpec:
    """Design name and parameters.

    ``pi`` is an explicit vector, a scalar (Bernoulli), ``"equal"`` (n/N) or
    ``"sigma"`` (proportional to the frame's sigma column, capped at 1).
    ``allocation`` is ``"proportional"``, ``"neyman"`` or explicit n_h.
    ``aux`` selects balancing variables; ``metric`` is ``"euclidean"`` or
    ``"mahalanobis"``.
    """

    name: str
    n: Optional[int] = None
    pi: Union[None, str, float, tuple] = None
    allocation: Union[str, tuple] = "proportional"
    aux: Optional[tuple] = None
    metric: str = "euclidean"
    options: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.name not in DESIGNS:
            raise ValueError(f"unknown design {self.name!r}; choose from {', '.join(DESIGNS)}")
        if self.metric not in ("euclidean", "mahalanobis"):
            raise ValueError("metric must be 'euclidean' or 'mahalanobis'")
        if isinstance(self.pi, (list, np.ndarray)):
            object.__setattr__(self, "pi", tuple(float(v) for v in self.pi))
        if isinstance(self.aux, (list, str)):
            aux = self.aux.split(",") if isinstance(self.aux, str) else self.aux
            object.__setattr__(self, "aux", tuple(a.strip() for a in aux if a.strip()))
        if isinstance(self.allocation, (list, np.ndarray)):
            object.__setattr__(self, "allocation", tuple(int(v) for v in self.allocation))

    @classmethod
    def from_dict(cls, d: dict) -> "DesignSpec":
        known = {"name", "n", "pi", "allocation", "aux", "metric"}
        extra = {k: v for k, v in d.items() if k not in known}
        return cls(**{k: v for k, v in d.items() if k in known}, options=extra)

    def bind(self, frame: PopulationFrame) -> "Sampler":
        return Sampler(self, frame)


def resolve_pi(spec: DesignSpec, frame: PopulationFrame) -> np.ndarray:
    N = frame.N
    if spec.name == "stratified":
        return basic.stratified_inclusion(frame, resolve_allocation(spec, frame))
    pi = spec.pi
    if pi is None or pi == "equal":
        if spec.n is None:
            raise ValueError(f"design {spec.name!r} needs n or pi")
        return np.full(N, spec.n / N)
    if pi == "sigma":
        if spec.n is None:
            raise ValueError("pi='sigma' needs n")
        return np.array(basic.optimal_inclusion_probabilities(frame.sigma, spec.n).pi)
    if isinstance(pi, (int, float)):
        return np.full(N, float(pi))
    return np.array(as_pi(pi, N))


def resolve_allocation(spec: DesignSpec, frame: PopulationFrame) -> basic.Allocation:
    alloc = spec.allocation
    if isinstance(alloc, tuple):
        Nh = frame.stratum_sizes()
        nh = np.asarray(alloc, dtype=np.int64)
        if nh.shape != Nh.shape:
            raise ValueError("allocation does not match the number of strata")
        return basic.Allocation(nh, nh == Nh)
    if spec.n is None:
        raise ValueError("stratified design needs n")
    if alloc == "proportional":
        return basic.proportional_allocation(frame, spec.n)
    if alloc == "neyman":
        y = spec.options.get("y")
        if y is not None:
            return basic.neyman_allocation(frame, spec.n, y=frame.column(y) if isinstance(y, str) else y)
        return basic.neyman_allocation(frame, spec.n, dispersion=_stratum_sigma(frame))
    raise ValueError(f"unknown allocation {alloc!r}")


def _stratum_sigma(frame):
    # stratum dispersion from the frame's per-unit sigma (constant within strata)
    sig = np.asarray(frame.sigma, dtype=np.float64)
    return np.array([sig[frame.strata == h].mean() for h in range(frame.H)])


class Sampler:
    """A design bound to a frame; ``sampler(rng)`` draws one Sample."""

    def __init__(self, spec: DesignSpec, frame: PopulationFrame):
        self.spec = spec
        self.frame = frame
        name = spec.name
        self.allocation = resolve_allocation(spec, frame) if name == "stratified" else None
        if name == "systematic":
            self.pi = np.full(frame.N, spec.n / frame.N)
        else:
            self.pi = resolve_pi(spec, frame)
        self.params = cps.cps_design_from_pi(self.pi) if name == "cps" else None
        self.tree = None
        if name == "grts":
            self.tree = spatial.QuadTree(np.asarray(frame.coords, dtype=np.float64), self.pi)
        self.ctx = None
        if name in ("local_pivotal", "local_cube"):
            self.ctx = (spatial.mahalanobis_context(frame) if spec.metric == "mahalanobis"
                        else spatial.euclidean_context())

    @property
    def fixed_size(self) -> bool:
        if self.spec.name in ("bernoulli", "poisson", "systematic"):
            return False
        n = self.pi.sum()
        return abs(n - round(n)) <= 1e-9

    def __call__(self, rng: np.random.Generator) -> Sample:
        return self.draw(rng)[0]

    def draw(self, rng: np.random.Generator) -> Tuple[Sample, Optional[cube.BalanceReport]]:
        """Sample plus a balance report when the design balances on aux."""
        f, spec, name = self.frame, self.spec, self.spec.name
        if name == "bernoulli":
            return basic.bernoulli_sample(f, self.pi[0] if f.N else 0.0, rng), None
        if name == "poisson":
            return basic.poisson_sample(f, self.pi, rng), None
        if name == "srs":
            return basic.srs_sample(f, int(round(self.pi.sum())), rng), None
        if name == "stratified":
            return basic.stratified_srs_sample(f, self.allocation, rng), None
        if name == "cps":
            return cps.cps_sample(self.params, rng), None
        if name == "systematic":
            return basic.systematic_grid_sample(f, spec.n, rng), None
        if name == "cube":
            return cube.cube_sample(f, self.pi, spec.aux, rng)
        if name == "sequential_pivotal":
            return spatial.sequential_pivotal_sample(f, self.pi, rng), None
        if name == "local_pivotal":
            return spatial.local_pivotal_sample(f, self.pi, self.ctx, rng), None
        if name == "grts":
            return spatial.grts_sample(f, self.pi, rng, tree=self.tree), None
        if name == "local_cube":
            s = spatial.local_cube_sample(f, self.pi, spec.aux, self.ctx, rng)
            x, names = cube._aux_matrix(f, self.pi, spec.aux)
            return s, cube.balance_check(s, self.pi, x, names=names)
        raise AssertionError(name)

    def joint_inclusion(self) -> Optional[np.ndarray]:
        """Exact joint inclusion probabilities when a closed form exists."""
        from .oracle import closed_form_joint

        return closed_form_joint(self)
