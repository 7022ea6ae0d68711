"""Relaxed-control descent for optimal control via pointwise Hamiltonian minimization."""

from .benchmarks import (
    DoubleTankProblem,
    HybridLqrProblem,
    MobileNetworkProblem,
    get_problem,
    mobile_network_costate,
)
from .controls import (
    OrdinaryControl,
    RelaxedMixture,
    collapse_affine,
    convex_combine_controls,
    convex_combine_measures,
    dirac,
    mixture_from_atoms,
    prune_and_merge,
)
from .exceptions import (
    ArmijoStallError,
    GridMismatchError,
    HamDescentError,
    InfeasibleControlError,
    IntegrationDivergedError,
    ProblemLookupError,
)
from .grid import CostateTrajectory, StateTrajectory, TimeGrid
from .integrate import (
    cost_of,
    evaluate_cost,
    evaluate_ordinary_cost,
    integrate_costate_backward,
    integrate_ordinary_state,
    integrate_state_forward,
)
from .problem import (
    BoxHull,
    ControlHull,
    FiniteSetHull,
    ModeBoxHull,
    ProblemDefinition,
    check_problem_consistency,
    hamiltonian,
    relaxed_hamiltonian,
)
from .pwm import duty_counts, project_pwm, pwm_fidelity_report
from .schemas import IterationRecord, PwmConfig, RunConfig, SolverConfig
from .solver import (
    armijo_step,
    cost_reduction_fraction,
    directional_derivative_check,
    iterate,
    iterations_to_fraction,
    optimality_theta,
    run,
    verify_run_log,
)

__version__ = "0.1.0"
