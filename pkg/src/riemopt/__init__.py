"""Riemannian manifold optimization toolkit with a secure-beamforming
benchmark application."""

from .manifolds import (
    FEAS_TOL,
    BaseMismatchError,
    ComplexCircle,
    ComplexSphere,
    DegenerateStepError,
    FeasibilityError,
    GeometryError,
    Grassmann,
    HPD,
    Manifold,
    Oblique,
    Product,
    StepTooLongError,
    Stiefel,
    Tangent,
    grassmann_dist,
)
from .costs import (
    CostFunction,
    OracleProblem,
    brockett,
    hpd_mean,
    phase_align,
    rayleigh,
    standard_battery,
    subspace_fit,
)
from .solvers import (
    SOLVERS,
    SolverConfig,
    SolverReport,
    Termination,
    armijo_linesearch,
    hessian_vec_fd,
    solve_lbfgs,
    solve_rcg,
    solve_rgd,
    solve_rtr,
    truncated_cg,
)
from .verify import check_gradient, check_retraction, grid_oracle, run_battery
from .beamforming import (
    ChannelRealization,
    PortGrid,
    SecrecyScenario,
    TrialResult,
    monte_carlo_sweep,
    mrt_init,
    optimize_beamforming,
    sample_channels,
    secrecy_cost,
    secrecy_rate,
    select_ports,
    steering_vector,
)

__version__ = "0.1.0"
