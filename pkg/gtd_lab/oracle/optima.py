"""Constrained optima, saddle points and TD fixed points of a ProjectedProblem."""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Tuple

import numpy as np
from scipy.linalg import null_space
from scipy.optimize import bisect

from ..algorithms.geometry import project_ball
from ..exceptions import OracleError, SolverConvergenceError
from .problem import (
    ProjectedProblem,
    grad_Jp,
    objective_Jp,
    psi_o,
    smallest_positive_eigenvalue,
    solve_x_theta,
)

logger = logging.getLogger(__name__)

EIG_CUTOFF = 1e-10
BISECT_XTOL = 1e-12
INNER_TOL = 1e-10
OUTER_TOL = 1e-8
OUTER_MAX_ITER = 100_000
INTERIOR_MARGIN = 1e-8
MIN_STEP = 1e-12
MAX_STEP = 1e12


def solve_ball_quadratic(
    H: np.ndarray, g: np.ndarray, r: float
) -> Tuple[np.ndarray, float]:
    """
    Minimize ½θᵀHθ + gᵀθ over ‖θ‖ ≤ r for symmetric PSD H.

    Finds μ ≥ 0 with (H + μI)θ = −g and μ(‖θ‖ − r) = 0 by bisection on μ. When
    μ = 0 and H is singular, returns the minimum-norm minimizer.

    Args:
        H: Symmetric positive semidefinite matrix
        g: Linear term
        r: Ball radius

    Returns:
        Tuple of minimizer and multiplier μ
    """
    eigvals, Q = np.linalg.eigh(0.5 * (H + H.T))
    cutoff = EIG_CUTOFF * max(1.0, float(np.abs(eigvals).max()))
    eigvals = np.where(eigvals > cutoff, eigvals, 0.0)
    g_rot = Q.T @ g
    zero = eigvals == 0.0
    g_norm = float(np.linalg.norm(g))
    null_mass = float(np.linalg.norm(g_rot[zero]))

    if null_mass <= 1e-12 * (1.0 + g_norm):
        coeffs = np.zeros_like(g_rot)
        coeffs[~zero] = -g_rot[~zero] / eigvals[~zero]
        if float(np.linalg.norm(coeffs)) <= r:
            return Q @ coeffs, 0.0

    def rotated(mu: float) -> np.ndarray:
        denom = eigvals + mu
        return np.divide(-g_rot, denom, out=np.zeros_like(g_rot), where=denom > 0)

    def excess(mu: float) -> float:
        return float(np.linalg.norm(rotated(mu))) - r

    # ‖θ(μ)‖ ≤ ‖g‖/μ, and ‖θ(μ)‖ ≥ null_mass/μ
    mu_hi = g_norm / r
    mu_lo = min(mu_hi, null_mass / (2.0 * r)) if null_mass > 0.0 else 0.0
    mu = float(bisect(excess, mu_lo, mu_hi, xtol=BISECT_XTOL, maxiter=500))
    theta = Q @ rotated(mu)
    norm = float(np.linalg.norm(theta))
    if norm > 0.0:
        theta = theta * (r / norm)
    return theta, mu


@dataclass
class AffineBallSlice:
    """The set {center + N z : ‖z‖ ≤ radius} with orthonormal N and center ⟂ N."""

    center: np.ndarray
    basis: np.ndarray
    radius: float

    def project(self, y: np.ndarray) -> np.ndarray:
        if self.basis.shape[1] == 0:
            return self.center
        z = project_ball(self.basis.T @ y, self.radius)
        return self.center + self.basis @ z

    def distance(self, y: np.ndarray) -> float:
        return float(np.linalg.norm(y - self.project(y)))


def _slice_in_ball(point: np.ndarray, directions: np.ndarray, r: float) -> AffineBallSlice:
    """(point + span(directions)) ∩ ball(r), assuming point lies in the ball."""
    if directions.shape[1] == 0:
        return AffineBallSlice(point, directions, 0.0)
    center = point - directions @ (directions.T @ point)
    radius = float(np.sqrt(max(r * r - float(center @ center), 0.0)))
    return AffineBallSlice(center, directions, radius)


def ball_kkt_residual(theta: np.ndarray, grad: np.ndarray, r: float) -> float:
    """‖θ − Π_B(θ − ∇)‖, zero exactly at a constrained stationary point."""
    return float(np.linalg.norm(theta - project_ball(theta - grad, r)))


@dataclass
class BallOptimum:
    """One minimizer of J_p over B_θ plus the exact optimal set for distance queries."""

    theta: np.ndarray
    value: float
    multiplier: float
    singular: bool
    kkt_residual: float
    optimal_set: AffineBallSlice

    def distance(self, theta: np.ndarray) -> float:
        """Euclidean distance from θ to Θ_opt."""
        return self.optimal_set.distance(theta)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "theta": self.theta.tolist(),
            "value": self.value,
            "multiplier": self.multiplier,
            "singular": self.singular,
            "affine_slice_dim": int(self.optimal_set.basis.shape[1]),
            "kkt_residual": self.kkt_residual,
        }


def theta_opt_ball(prob: ProjectedProblem) -> BallOptimum:
    """
    Minimize J_p over B_θ.

    J_p is the quadratic ½θᵀ(AᵀC⁺A + wI)θ + (AᵀC⁺b − wc)ᵀθ + const, solved as a
    trust-region subproblem. With a singular Hessian and an interior solution,
    Θ_opt is the slice of the ball through the minimum-norm optimum along the
    Hessian's null space.
    """
    if not prob.r_theta > 0:
        raise OracleError("r_theta must be positive")
    d = prob.d
    H = prob.J_hessian + prob.regularizer.hessian(d)
    g = prob.A.T @ prob.C_pinv @ prob.b + prob.regularizer.linear_term(d)
    theta, mu = solve_ball_quadratic(H, g, prob.r_theta)

    eigvals = np.linalg.eigvalsh(H)
    singular = bool(eigvals.min() <= EIG_CUTOFF * max(1.0, float(np.abs(eigvals).max())))
    if mu == 0.0 and singular:
        kernel = null_space(H, rcond=EIG_CUTOFF)
        optimal_set = _slice_in_ball(theta, kernel, prob.r_theta)
    else:
        optimal_set = AffineBallSlice(theta, np.zeros((d, 0)), 0.0)

    residual = ball_kkt_residual(theta, grad_Jp(prob, theta), prob.r_theta)
    logger.debug("ball optimum: mu=%.3e kkt=%.3e singular=%s", mu, residual, singular)
    return BallOptimum(
        theta=theta,
        value=objective_Jp(prob, theta),
        multiplier=mu,
        singular=singular,
        kkt_residual=residual,
        optimal_set=optimal_set,
    )


def inner_maximizer(prob: ProjectedProblem, theta: np.ndarray) -> np.ndarray:
    """
    x̃(θ) = argmax over B_x of ψ^o(θ, ·), the component in the column space of C.

    Solved exactly as a ball-constrained quadratic and certified by the
    projected-gradient fixed-point residual.

    Raises:
        OracleError: If the certificate fails
    """
    k = prob.A @ theta + prob.b
    x, _ = solve_ball_quadratic(prob.C, -k, prob.r_x)
    x = prob.column_projector @ x
    x = project_ball(x, prob.r_x)
    ascent = k - prob.C @ x
    scale = 1.0 / max(1.0, float(np.linalg.norm(prob.C, 2)))
    residual = float(np.linalg.norm(x - project_ball(x + scale * ascent, prob.r_x)))
    if residual > INNER_TOL * (1.0 + float(np.linalg.norm(k))):
        raise OracleError(f"inner maximizer not certified (residual {residual:.3e})")
    return x


def relaxed_objective(prob: ProjectedProblem, theta: np.ndarray) -> float:
    """J̃_p(θ) = max over B_x of ψ^o(θ, x)."""
    return psi_o(prob, theta, inner_maximizer(prob, theta))


def relaxed_gradient(prob: ProjectedProblem, theta: np.ndarray) -> np.ndarray:
    """Danskin gradient Aᵀx̃(θ) + ∇p(θ)."""
    return prob.A.T @ inner_maximizer(prob, theta) + prob.regularizer.grad(theta)


@dataclass
class SaddlePoint:
    """A point of D_θ, the unique x̄, the saddle value and certificates."""

    theta: np.ndarray
    x_bar: np.ndarray
    value: float
    x_interior: bool
    kkt_residual: float
    iterations: int
    theta_set: AffineBallSlice

    def distance_theta(self, theta: np.ndarray) -> float:
        return self.theta_set.distance(theta)

    def distance(self, theta: np.ndarray, x: np.ndarray) -> float:
        """Euclidean distance from (θ, x) to D_θ × {x̄}."""
        return float(
            np.hypot(self.distance_theta(theta), np.linalg.norm(x - self.x_bar))
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            "theta": self.theta.tolist(),
            "x_bar": self.x_bar.tolist(),
            "value": self.value,
            "x_interior": self.x_interior,
            "kkt_residual": self.kkt_residual,
            "iterations": self.iterations,
        }


def saddle_point(
    prob: ProjectedProblem,
    *,
    tol: float = OUTER_TOL,
    max_iter: int = OUTER_MAX_ITER,
    theta0: Optional[np.ndarray] = None,
) -> SaddlePoint:
    """
    Saddle point of min over B_θ, max over B_x of ψ^o.

    Minimizes J̃_p by projected gradient descent with Barzilai-Borwein steps and
    backtracking, starting from the ball optimum of J_p (which is already a
    saddle point when x_opt is interior to B_x). If backtracking reaches
    MIN_STEP without sufficient decrease, the search keeps the last accepted
    iterate and stops; its KKT residual is reported.

    Args:
        prob: Problem with positive radii
        tol: KKT residual at which to stop
        max_iter: Iteration cap
        theta0: Starting point; the ball optimum of J_p by default

    Returns:
        SaddlePoint

    Raises:
        SolverConvergenceError: If the cap is reached
    """
    if not (prob.r_theta > 0 and prob.r_x > 0):
        raise OracleError("saddle point needs positive r_theta and r_x")
    r = prob.r_theta
    theta = theta_opt_ball(prob).theta if theta0 is None else project_ball(theta0, r)
    value = relaxed_objective(prob, theta)
    grad = relaxed_gradient(prob, theta)
    lipschitz = (
        float(np.linalg.norm(prob.A, 2)) ** 2 / smallest_positive_eigenvalue(prob.C)
        + prob.regularizer.weight
    )
    step = 1.0 / max(lipschitz, 1e-12)
    step = min(max(step, MIN_STEP), MAX_STEP)
    residual = ball_kkt_residual(theta, grad, r)
    iterations = 0
    while residual > tol:
        if iterations >= max_iter:
            raise SolverConvergenceError(
                f"saddle point search stopped after {max_iter} iterations",
                residuals={"kkt": residual},
            )
        iterations += 1
        accepted = False
        while step >= MIN_STEP:
            candidate = project_ball(theta - step * grad, r)
            move = candidate - theta
            cand_value = relaxed_objective(prob, candidate)
            if cand_value <= value + float(grad @ move) + float(move @ move) / (2 * step):
                accepted = True
                break
            step *= 0.5
        if not accepted:
            logger.warning(
                "saddle point line search stalled at step %.1e, kkt=%.3e",
                MIN_STEP,
                residual,
            )
            break
        cand_grad = relaxed_gradient(prob, candidate)
        s, y = candidate - theta, cand_grad - grad
        curvature = float(s @ y)
        step = float(s @ s) / curvature if curvature > 0 else 2.0 * step
        step = min(max(step, MIN_STEP), MAX_STEP)
        theta, value, grad = candidate, cand_value, cand_grad
        residual = ball_kkt_residual(theta, grad, r)
    logger.debug("saddle point after %d iterations, kkt=%.3e", iterations, residual)

    x_bar = inner_maximizer(prob, theta)
    x_interior = float(np.linalg.norm(x_bar)) < prob.r_x - INTERIOR_MARGIN
    if prob.regularizer.active:
        theta_set = AffineBallSlice(theta, np.zeros((prob.d, 0)), 0.0)
    else:
        theta_set = _slice_in_ball(theta, null_space(prob.A, rcond=EIG_CUTOFF), r)
    return SaddlePoint(
        theta=theta,
        x_bar=x_bar,
        value=value,
        x_interior=x_interior,
        kkt_residual=residual,
        iterations=iterations,
        theta_set=theta_set,
    )


def unconstrained_saddle(prob: ProjectedProblem) -> SaddlePoint:
    """
    Saddle point of ψ^o without constraints, for a strongly convex regularizer.

    Solves the KKT system Aᵀx + ∇p(θ) = 0, Aθ + b − Cx = 0 with x in the
    column space of C.

    Raises:
        OracleError: If the regularizer is not active
    """
    reg = prob.regularizer
    if not reg.active:
        raise OracleError("the unconstrained saddle needs a positive quadratic weight")
    d = prob.d
    H = prob.J_hessian + reg.hessian(d)
    g = prob.A.T @ prob.C_pinv @ prob.b + reg.linear_term(d)
    theta = np.linalg.solve(H, -g)
    x = solve_x_theta(prob, theta)
    residual = unconstrained_kkt_residual(prob, theta, x)
    return SaddlePoint(
        theta=theta,
        x_bar=x,
        value=psi_o(prob, theta, x),
        x_interior=True,
        kkt_residual=residual,
        iterations=0,
        theta_set=AffineBallSlice(theta, np.zeros((d, 0)), 0.0),
    )


def unconstrained_kkt_residual(
    prob: ProjectedProblem, theta: np.ndarray, x: np.ndarray
) -> float:
    """‖(Aᵀx + ∇p(θ), Π_C(Aθ + b − Cx))‖ of the unconstrained saddle system."""
    primal = prob.A.T @ x + prob.regularizer.grad(theta)
    dual = prob.column_projector @ (prob.A @ theta + prob.b - prob.C @ x)
    return float(np.hypot(np.linalg.norm(primal), np.linalg.norm(dual)))


@dataclass
class TdFixedPoint:
    """Solution of Aθ + b = 0 when A is negative definite, with its certificate."""

    negative_definite: bool
    max_symmetric_eigenvalue: float
    theta: Optional[np.ndarray] = None
    residual: Optional[float] = None
    details: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "negative_definite": self.negative_definite,
            "max_symmetric_eigenvalue": self.max_symmetric_eigenvalue,
            "theta": None if self.theta is None else self.theta.tolist(),
            "residual": self.residual,
        }


def mdtd_fixed_point(prob: ProjectedProblem) -> TdFixedPoint:
    """
    TD fixed point θ_TD with Aθ_TD + b = 0, if A is negative definite.

    Negative definiteness is certified by the largest eigenvalue of (A + Aᵀ)/2;
    otherwise a failure certificate is returned.
    """
    sym = 0.5 * (prob.A + prob.A.T)
    top = float(np.linalg.eigvalsh(sym).max())
    if not top < -EIG_CUTOFF:
        return TdFixedPoint(negative_definite=False, max_symmetric_eigenvalue=top)
    theta = np.linalg.solve(prob.A, -prob.b)
    residual = float(np.linalg.norm(prob.A @ theta + prob.b))
    return TdFixedPoint(
        negative_definite=True,
        max_symmetric_eigenvalue=top,
        theta=theta,
        residual=residual,
    )
