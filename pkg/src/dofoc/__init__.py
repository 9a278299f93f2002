"""Distributed-order fractional optimal control.

Special functions, distributed-order fractional operators on uniform
grids, forward and adjoint solvers, a Pontryagin maximum principle sweep
with needle-variation diagnostics, and the ``dofoc`` command line tool.
"""

from __future__ import annotations

__version__ = "0.1.0"

from dofoc.config import SolverConfig
from dofoc.errors import (
    AccuracyError,
    DegenerateDistributionError,
    DofocError,
    DomainError,
    DynamicsEvaluationError,
    ResolutionError,
    SolverDivergenceError,
    ValidationError,
)
from dofoc.operators import (
    OrderDistribution,
    TimeGrid,
    Trajectory,
    build_distribution,
    bump_distribution,
    caputo_derivative_left,
    caputo_derivative_right,
    do_caputo_left,
    do_caputo_right,
    do_integral_right,
    do_rl_caputo_relation_residual,
    do_rl_left,
    do_rl_right,
    integration_by_parts_residual,
    rl_derivative_left,
    rl_derivative_right,
    rl_integral_left,
    rl_integral_right,
)
from dofoc.pmp import (
    ControlProblem,
    NeedleSpec,
    PMPSolution,
    apply_needle,
    continuity_rate_probe,
    hamiltonian,
    maximize_hamiltonian,
    needle_optimality_check,
    solve_pmp,
    variational_gaps,
    variational_trajectory,
)
from dofoc.solvers import (
    AdjointProblem,
    ForwardProblem,
    residual_forward,
    solve_adjoint,
    solve_forward,
)
from dofoc.special import MLParams, gamma_fn, mittag_leffler

__all__ = [
    "AccuracyError",
    "AdjointProblem",
    "ControlProblem",
    "DegenerateDistributionError",
    "DofocError",
    "DomainError",
    "DynamicsEvaluationError",
    "ForwardProblem",
    "MLParams",
    "NeedleSpec",
    "OrderDistribution",
    "PMPSolution",
    "ResolutionError",
    "SolverConfig",
    "SolverDivergenceError",
    "TimeGrid",
    "Trajectory",
    "ValidationError",
    "apply_needle",
    "build_distribution",
    "bump_distribution",
    "caputo_derivative_left",
    "caputo_derivative_right",
    "continuity_rate_probe",
    "do_caputo_left",
    "do_caputo_right",
    "do_integral_right",
    "do_rl_caputo_relation_residual",
    "do_rl_left",
    "do_rl_right",
    "gamma_fn",
    "hamiltonian",
    "integration_by_parts_residual",
    "maximize_hamiltonian",
    "mittag_leffler",
    "needle_optimality_check",
    "residual_forward",
    "rl_derivative_left",
    "rl_derivative_right",
    "rl_integral_left",
    "rl_integral_right",
    "solve_adjoint",
    "solve_forward",
    "solve_pmp",
    "variational_gaps",
    "variational_trajectory",
]
