"""Forward solves, backward reconstruction and stability-rate experiments
for one-dimensional degenerate parabolic equations."""

from .assumptions import AssumptionReport, HypothesisError, check_assumptions
from .backward_recon import (
    ForwardMap, NoiseSpec, ReconstructionResult, add_noise, choose_alpha, reconstruct_tikhonov,
)
from .carleman import (
    CarlemanParams, carleman_sides, holder_bound, log_rate_bound, log_rate_s, optimal_s,
    theta_exponent, verify_inequality,
)
from .experiments import (
    RateReport, fit_power_law, holder_rate_experiment, log_rate_experiment,
    semilinear_stability_experiment,
)
from .expr import parse
from .pde_solver import (
    NumericalError, Scheme, adjoint_solve, forward_solve, semilinear_forward_solve,
)
from .problem_model import (
    GridFunction, ProblemSpec, SpatialGrid, TimeSeriesField, build_grid, h1_norm, l2_norm,
    make_problem, sample,
)

__version__ = "0.1.0"
