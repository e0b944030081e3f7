"""Optimal estimation of linear functions with networks of qubit sensors."""

from .applications import (
    FunctionSpec,
    PlacementResult,
    build_functional,
    build_interpolation,
    optimize_placement,
    q_gradient,
    q_value,
)
from .errors import (
    InconsistentConstraint,
    InstanceTooLarge,
    ModelError,
    NewtonDivergence,
    NonEstimableError,
    PhaseWrap,
    RankDeficient,
    SensornetError,
    SimulationError,
    UnboundedPrecision,
)
from .estimation import (
    EstimationProblem,
    check_identifiability,
    mse_lower_bound,
    solve_bound,
    solve_dual,
    solve_protocol,
    unentangled_weights,
)
from .field_model import (
    ExplicitLinear,
    GradientMatrix,
    LinearBasis,
    PointSources,
    field_vector,
    finite_diff_gradient,
    gradient_matrix,
    monomials,
)
from .fisher import build_dual_basis, ghz_rank_one_fisher, transform_fisher
from .protocol_sim import (
    ProtocolResult,
    ShotPlan,
    mse_convergence_sweep,
    simulate_ghz_linear,
    simulate_unentangled,
    stage_one_estimate,
    two_step_protocol,
)

__version__ = "0.1.0"
