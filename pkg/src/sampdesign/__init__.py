"""Probability sampling designs."""

from ._kernels import BACKEND
from .basic import (
    Allocation,
    bernoulli_sample,
    neyman_allocation,
    optimal_inclusion_probabilities,
    poisson_sample,
    proportional_allocation,
    srs_sample,
    stratified_srs_sample,
    systematic_grid_sample,
)
from .cps import ConvergenceError, CpsParameters, cps_joint_inclusion, cps_probability, cps_sample, solve_lambda
from .cube import BalanceReport, BalancingProblem, FlightState, balance_check, cube_sample, flight_phase, landing_phase
from .designs import DesignSpec, Sampler
from .diagnostics import design_entropy, estimate_delta, monte_carlo_inclusion, spatial_balance_index
from .estimators import (
    ModelSpec,
    SecondOrderStructure,
    anticipated_variance,
    avar_balanced_closed_form,
    blup_total,
    estimate_variance,
    nht_total,
    optimal_design_case,
    table1_check,
    true_variance_nht,
)
from .frame import FrameSchema, InclusionProbabilities, PopulationFrame, Sample, grid_frame, load_frame, write_frame
from .oracle import EnumeratedDesign, empirical_design, enumerate_design
from .replication import replicate_rng, run_replications
from .spatial import (
    DistanceContext,
    grts_sample,
    local_cube_sample,
    local_pivotal_sample,
    mahalanobis_context,
    pivotal_update,
    sequential_pivotal_sample,
)

__version__ = "0.1.0"
