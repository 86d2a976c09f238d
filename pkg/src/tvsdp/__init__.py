"""Low-rank path following for time-varying semidefinite programs."""

from .geometry import (
    dphi,
    horizontal_project,
    injectivity_radius,
    inverse_radius,
    lower_bound_dphi,
    max_stepsize,
    orbit_distance,
    phi,
    recover_factor,
)
from .initializer import InitResult, detect_rank, solve_fixed
from .kkt import F, KKTPoint, assemble_system, residual, solve_step, sosc_check
from .problem import (
    AffineTVProblem,
    LinearOperatorA,
    SyntheticTVProblem,
    TVProblem,
    adjoint_A,
    apply_A,
    check_nondegeneracy,
    load_problem,
    make_maxcut_tv,
    make_synthetic_tv,
    save_problem,
)
from .tracker import TrackerConfig, Trajectory, check_step_conditions, reconstruct_primal, track

__version__ = "0.1.0"
