"""Predictor-corrector variable-step integration of semi-explicit DAEs."""

from ._core import (
    ControllerConfig,
    DaeState,
    DaeSystem,
    EquilibriumNotFound,
    InvalidHistory,
    NewtonSettings,
    NonConvergence,
    SimulationTrace,
    SingularJacobian,
    StepFailure,
    analytic_error_stats,
    analytic_exact_solution,
    analytic_exact_sum,
    analytic_system,
    compare_traces,
    fixed_step_integrate,
    from_functions,
    iteration_decide,
    linear_system,
    newton_solve,
    pcm_decide,
    pcm_integrate,
    simulate,
    stability_scan,
    swing_system,
    truncation_error,
    vam2_integrate,
    vitm_integrate,
)

__all__ = [name for name in dir() if not name.startswith("_")]
