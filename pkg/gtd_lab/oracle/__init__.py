"""Exact and empirical oracle for projected Bellman error problems."""

from .bellman import (
    AffineBellman,
    bellman_composite,
    bellman_for_scheme,
    bellman_state_dependent,
    fixed_point_residual,
)
from .empirical import TraceChunk, estimate_projected_problem_empirical, trace_chunks
from .optima import (
    AffineBallSlice,
    BallOptimum,
    SaddlePoint,
    TdFixedPoint,
    ball_kkt_residual,
    inner_maximizer,
    mdtd_fixed_point,
    relaxed_gradient,
    relaxed_objective,
    saddle_point,
    solve_ball_quadratic,
    theta_opt_ball,
    unconstrained_kkt_residual,
    unconstrained_saddle,
)
from .problem import (
    ProjectedProblem,
    RegularizerSpec,
    build_projected_problem,
    check_unconstrained_regularity,
    eta_scaled_problem,
    grad_J,
    grad_J_expression_a,
    grad_J_expression_b,
    grad_Jp,
    k_bar,
    objective_J,
    objective_Jp,
    projected_bellman_error,
    psi_o,
    solve_x_theta,
    sufficient_x_radius,
)

__all__ = [
    "AffineBellman",
    "bellman_composite",
    "bellman_for_scheme",
    "bellman_state_dependent",
    "fixed_point_residual",
    "TraceChunk",
    "estimate_projected_problem_empirical",
    "trace_chunks",
    "AffineBallSlice",
    "BallOptimum",
    "SaddlePoint",
    "TdFixedPoint",
    "ball_kkt_residual",
    "inner_maximizer",
    "mdtd_fixed_point",
    "relaxed_gradient",
    "relaxed_objective",
    "saddle_point",
    "solve_ball_quadratic",
    "theta_opt_ball",
    "unconstrained_kkt_residual",
    "unconstrained_saddle",
    "ProjectedProblem",
    "RegularizerSpec",
    "build_projected_problem",
    "check_unconstrained_regularity",
    "eta_scaled_problem",
    "grad_J",
    "grad_J_expression_a",
    "grad_J_expression_b",
    "grad_Jp",
    "k_bar",
    "objective_J",
    "objective_Jp",
    "projected_bellman_error",
    "psi_o",
    "solve_x_theta",
    "sufficient_x_radius",
]
