"""Parameter inference for chaotic ODEs by matching invariant measures.

The pipeline: an upwind finite-volume discretization turns the flow
x' = v(x; theta) into a sparse transfer operator whose teleported,
regularized stationary density approximates the physical invariant
measure; an optimal-transport loss compares it against a reference
histogram; implicit-function-theorem and adjoint solves supply exact
gradients of that loss for descent over theta.
"""

from .analysis import estimate_loss_floor, mc_convergence_sweep, pair_misfit
from .dynamics import (
    DEFAULT_BOUNDS,
    DEFAULT_THETA,
    ParameterVector,
    SystemSpec,
    custom_system,
    make_system,
    velocity,
    velocity_param_jacobian,
)
from .errors import CFLViolation, ConfigError, DataFormatError, NumericalError
from .fvm import (
    FaceVelocities,
    MarkovOperator,
    UpwindOperator,
    assemble_K,
    assemble_dK,
    cfl_constant,
    face_velocities,
    smoothed_heaviside,
)
from .gradient import (
    ForwardArtifacts,
    GradientReport,
    InversionObjective,
    LossConfig,
    build_forward,
    finite_difference_grad,
    loss_and_grad,
    solve_adjoint,
    solve_ift_sensitivity,
)
from .grid import DensityField, Grid
from .io import read_density, write_density
from .optimize import (
    BacktrackingConfig,
    InferenceConfig,
    InferenceTrace,
    backtracking_step,
    coordinate_descent,
    gradient_descent,
)
from .ot import (
    CostSpec,
    DualPotentials,
    LPResult,
    SinkhornResult,
    TransportPlan,
    brute_force_lp,
    c_transform,
    sinkhorn,
    transport_cost_exact_1d,
)
from .simulate import NoiseSpec, Trajectory, integrate, occupation_histogram, subsample
from .stationary import (
    EpsilonSweepResult,
    SparseFactor,
    StationaryInfo,
    epsilon_sweep,
    solve_stationary_direct,
    solve_stationary_power,
)

__version__ = "0.1.0"

__all__ = [
    "BacktrackingConfig",
    "CFLViolation",
    "ConfigError",
    "CostSpec",
    "DEFAULT_BOUNDS",
    "DEFAULT_THETA",
    "DataFormatError",
    "DensityField",
    "DualPotentials",
    "EpsilonSweepResult",
    "FaceVelocities",
    "ForwardArtifacts",
    "GradientReport",
    "Grid",
    "InferenceConfig",
    "InferenceTrace",
    "InversionObjective",
    "LPResult",
    "LossConfig",
    "MarkovOperator",
    "NoiseSpec",
    "NumericalError",
    "ParameterVector",
    "SinkhornResult",
    "SparseFactor",
    "StationaryInfo",
    "SystemSpec",
    "Trajectory",
    "TransportPlan",
    "UpwindOperator",
    "assemble_K",
    "assemble_dK",
    "backtracking_step",
    "brute_force_lp",
    "build_forward",
    "c_transform",
    "cfl_constant",
    "coordinate_descent",
    "custom_system",
    "estimate_loss_floor",
    "face_velocities",
    "finite_difference_grad",
    "gradient_descent",
    "integrate",
    "loss_and_grad",
    "make_system",
    "mc_convergence_sweep",
    "occupation_histogram",
    "pair_misfit",
    "read_density",
    "sinkhorn",
    "smoothed_heaviside",
    "solve_adjoint",
    "solve_ift_sensitivity",
    "solve_stationary_direct",
    "solve_stationary_power",
    "subsample",
    "transport_cost_exact_1d",
    "velocity",
    "velocity_param_jacobian",
    "write_density",
    "epsilon_sweep",
]
