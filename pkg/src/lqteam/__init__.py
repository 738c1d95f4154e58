"""Linear-quadratic static teams with high-dimensional log-concave noise."""

from .bounds import (
    BoundConstants,
    envelope_budget,
    explicit_gap_bound,
    fundamental_bounds,
    tail_weight,
    uniform_density_bound,
)
from .diagnostics import DensityReport, GapSweepRow, density_report, gap_sweep, tail_mass
from .noise import NoiseModel, TailEnvelope, log_density, sample_noise, tail_envelope
from .pbp import PbpConfig, TabulatedPolicy, brute_force_optimal, pbp_solve, truncated_gaussian_value
from .stiefel import OrthonormalMatrix, project_coords, sample_stiefel
from .team import (
    EstimateWithError,
    LinearPolicy,
    ProblemInstance,
    TeamSpec,
    build_instance,
    cost,
    gaussian_cost,
    mc_cost,
    solve_linear,
)

__version__ = "0.1.0"
