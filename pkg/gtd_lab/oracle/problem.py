"""Projected-Bellman-error problem data (A, b, C) and the quantities built on it."""

import logging
import warnings
from dataclasses import dataclass, field, replace
from functools import cached_property
from typing import Any, Dict, Optional

import numpy as np

from ..exceptions import OracleError
from ..mdp import FeatureMap, FiniteMdp, stationary_distribution
from ..schemas import RegularizerConfig
from ..types import ConditionResult, RegularizerKind
from .bellman import AffineBellman

logger = logging.getLogger(__name__)

PINV_RCOND = 1e-10
X_RESIDUAL_TOL = 1e-8
GRADIENT_AGREEMENT_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class RegularizerSpec:
    """p(θ) = (weight/2)‖θ − center‖², or p ≡ 0."""

    kind: RegularizerKind = RegularizerKind.NONE
    weight: float = 0.0
    center: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.weight < 0:
            raise OracleError(f"regularizer weight must be nonnegative, got {self.weight}")

    @classmethod
    def from_config(cls, config: RegularizerConfig, d: int) -> "RegularizerSpec":
        center = None if config.center is None else np.asarray(config.center, float)
        if center is not None and center.shape != (d,):
            raise OracleError(f"regularizer center has {center.shape[0]} entries, d={d}")
        return cls(kind=config.kind, weight=config.weight, center=center)

    @property
    def active(self) -> bool:
        return self.kind is RegularizerKind.QUADRATIC and self.weight > 0

    def _offset(self, theta: np.ndarray) -> np.ndarray:
        return theta if self.center is None else theta - self.center

    def value(self, theta: np.ndarray) -> float:
        if self.kind is RegularizerKind.NONE:
            return 0.0
        diff = self._offset(theta)
        return 0.5 * self.weight * float(diff @ diff)

    def grad(self, theta: np.ndarray) -> np.ndarray:
        if self.kind is RegularizerKind.NONE:
            return np.zeros_like(theta)
        return self.weight * self._offset(theta)

    def hessian(self, d: int) -> np.ndarray:
        if self.kind is RegularizerKind.NONE:
            return np.zeros((d, d))
        return self.weight * np.eye(d)

    def linear_term(self, d: int) -> np.ndarray:
        """Coefficient g of the linear part of p as ½θᵀHθ + gᵀθ + const."""
        if self.kind is RegularizerKind.NONE or self.center is None:
            return np.zeros(d)
        return -self.weight * self.center

    def asymptotic(self, theta: np.ndarray) -> float:
        """p_∞(θ) = lim p(cθ)/c², i.e. (weight/2)‖θ‖² for the quadratic kind."""
        if self.kind is RegularizerKind.NONE:
            return 0.0
        return 0.5 * self.weight * float(theta @ theta)


@dataclass(frozen=True, eq=False)
class ProjectedProblem:
    """
    A = ΦᵀΞ(P^(λ) − I)Φ, b = ΦᵀΞr^(λ), C = ΦᵀΞΦ with constraint radii.

    ``A_stderr`` and ``b_stderr`` are set when A and b are simulation estimates.
    """

    A: np.ndarray
    b: np.ndarray
    C: np.ndarray
    regularizer: RegularizerSpec = field(default_factory=RegularizerSpec)
    r_theta: float = 1.0
    r_x: float = 1.0
    A_stderr: Optional[np.ndarray] = None
    b_stderr: Optional[np.ndarray] = None

    @property
    def d(self) -> int:
        return self.b.shape[0]

    @cached_property
    def C_pinv(self) -> np.ndarray:
        return np.linalg.pinv(self.C, rcond=PINV_RCOND, hermitian=True)

    @cached_property
    def column_projector(self) -> np.ndarray:
        """Orthogonal projector onto the column space of C."""
        return self.C @ self.C_pinv

    @cached_property
    def J_hessian(self) -> np.ndarray:
        """Hessian AᵀC⁺A of J."""
        H = self.A.T @ self.C_pinv @ self.A
        return 0.5 * (H + H.T)

    def with_radii(
        self, r_theta: Optional[float] = None, r_x: Optional[float] = None
    ) -> "ProjectedProblem":
        return replace(
            self,
            r_theta=self.r_theta if r_theta is None else r_theta,
            r_x=self.r_x if r_x is None else r_x,
        )

    def with_regularizer(self, regularizer: RegularizerSpec) -> "ProjectedProblem":
        return replace(self, regularizer=regularizer)

    def invariant_residuals(self) -> Dict[str, float]:
        """Symmetry, PSD and column-space residuals of the problem data."""
        leak = np.eye(self.d) - self.column_projector
        return {
            "C_asymmetry": float(np.max(np.abs(self.C - self.C.T))),
            "C_min_eigenvalue": float(np.linalg.eigvalsh(self.C).min()),
            "b_outside_columns": float(np.linalg.norm(leak @ self.b)),
            "A_outside_columns": float(np.linalg.norm(leak @ self.A)),
        }

    def to_dict(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {
            "A": self.A.tolist(),
            "b": self.b.tolist(),
            "C": self.C.tolist(),
            "r_theta": self.r_theta,
            "r_x": self.r_x,
            "regularizer": {
                "kind": self.regularizer.kind.value,
                "weight": self.regularizer.weight,
            },
        }
        if self.A_stderr is not None:
            out["A_stderr"] = self.A_stderr.tolist()
        if self.b_stderr is not None:
            out["b_stderr"] = self.b_stderr.tolist()
        return out


def build_projected_problem(
    mdp: FiniteMdp,
    features: FeatureMap,
    op: AffineBellman,
    *,
    regularizer: Optional[RegularizerSpec] = None,
    r_theta: float = 1.0,
    r_x: float = 1.0,
    xi: Optional[np.ndarray] = None,
) -> ProjectedProblem:
    """
    Assemble (A, b, C) from an exact Bellman operator.

    Args:
        mdp: Valid model
        features: Feature map
        op: T^(λ) in closed form
        regularizer: Regularizer p; none by default
        r_theta: Radius of B_θ
        r_x: Radius of B_x
        xi: State weighting; the behavior chain's invariant distribution by default

    Returns:
        ProjectedProblem
    """
    features.check_compatible(mdp)
    if xi is None:
        xi = stationary_distribution(mdp)
    phi = features.phi
    weighted = phi.T * xi[None, :]
    A = weighted @ (op.P_lambda @ phi - phi)
    b = weighted @ op.r_lambda
    C = weighted @ phi
    C = 0.5 * (C + C.T)
    prob = ProjectedProblem(
        A=A,
        b=b,
        C=C,
        regularizer=regularizer or RegularizerSpec(),
        r_theta=r_theta,
        r_x=r_x,
    )
    needed = sufficient_x_radius(prob)
    if r_x < needed:
        warnings.warn(
            f"B_x radius {r_x:.6g} is below the sufficient radius {needed:.6g}; "
            "x_θ may lie outside B_x for some θ in B_θ",
            UserWarning,
        )
    return prob


def solve_x_theta(prob: ProjectedProblem, theta: np.ndarray) -> np.ndarray:
    """
    The solution x_θ in the column space of C of Cx = Aθ + b.

    Raises:
        OracleError: If Aθ + b is not in the column space of C
    """
    rhs = prob.A @ theta + prob.b
    x = prob.C_pinv @ rhs
    residual = float(np.linalg.norm(prob.C @ x - rhs))
    if residual > X_RESIDUAL_TOL * (1.0 + float(np.linalg.norm(rhs))):
        raise OracleError(
            f"Aθ + b lies outside the column space of C (residual {residual:.3e})"
        )
    return x


def objective_J(prob: ProjectedProblem, theta: np.ndarray) -> float:
    """J(θ) = ½ x_θᵀ C x_θ."""
    x = solve_x_theta(prob, theta)
    return 0.5 * float(x @ prob.C @ x)


def objective_Jp(prob: ProjectedProblem, theta: np.ndarray) -> float:
    return objective_J(prob, theta) + prob.regularizer.value(theta)


def grad_J_expression_a(prob: ProjectedProblem, theta: np.ndarray) -> np.ndarray:
    """∇J(θ) = Aᵀ x_θ."""
    return prob.A.T @ solve_x_theta(prob, theta)


def grad_J_expression_b(prob: ProjectedProblem, theta: np.ndarray) -> np.ndarray:
    """∇J(θ) = −(Aθ + b) + (A + C)ᵀ x_θ, using ΦᵀΞP^(λ)Φ = A + C."""
    x = solve_x_theta(prob, theta)
    return -(prob.A @ theta + prob.b) + (prob.A + prob.C).T @ x


def grad_J(prob: ProjectedProblem, theta: np.ndarray) -> np.ndarray:
    """
    ∇J(θ) after cross-checking both gradient expressions.

    Raises:
        OracleError: If the two expressions disagree
    """
    a = grad_J_expression_a(prob, theta)
    b = grad_J_expression_b(prob, theta)
    gap = float(np.linalg.norm(a - b))
    if gap > GRADIENT_AGREEMENT_TOL * (1.0 + float(np.linalg.norm(a))):
        raise OracleError(f"gradient expressions disagree by {gap:.3e}")
    return a


def grad_Jp(prob: ProjectedProblem, theta: np.ndarray) -> np.ndarray:
    return grad_J(prob, theta) + prob.regularizer.grad(theta)


def k_bar(prob: ProjectedProblem, theta: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Mean x-direction Aθ + b − Cx."""
    return prob.A @ theta + prob.b - prob.C @ x


def psi_o(prob: ProjectedProblem, theta: np.ndarray, x: np.ndarray) -> float:
    """ψ^o(θ, x) = xᵀ(Aθ + b) − ½xᵀCx + p(θ)."""
    return (
        float(x @ (prob.A @ theta + prob.b))
        - 0.5 * float(x @ prob.C @ x)
        + prob.regularizer.value(theta)
    )


def eta_scaled_problem(prob: ProjectedProblem, eta: float) -> ProjectedProblem:
    """
    Problem whose ψ^o is a·x̃ᵀ(Aθ + b) − (a²/2)x̃ᵀCx̃ + p(θ) with a = √η.

    Its x-ball is B_x/a, so x = a·x̃ maps its saddle points onto the original's.

    Raises:
        OracleError: If eta ≤ 0
    """
    if not eta > 0:
        raise OracleError(f"eta must be positive, got {eta}")
    if eta == 1.0:
        return prob
    a = float(np.sqrt(eta))
    return replace(
        prob,
        A=a * prob.A,
        b=a * prob.b,
        C=(a * a) * prob.C,
        r_x=prob.r_x / a,
        A_stderr=None if prob.A_stderr is None else a * prob.A_stderr,
        b_stderr=None if prob.b_stderr is None else a * prob.b_stderr,
    )


def projected_bellman_error(
    mdp: FiniteMdp,
    features: FeatureMap,
    op: AffineBellman,
    theta: np.ndarray,
    xi: Optional[np.ndarray] = None,
) -> float:
    """
    ½‖Π_ξ(T v_θ − v_θ)‖²_ξ evaluated in state space.

    Independent of the (A, b, C) assembly; used to cross-check J.
    """
    if xi is None:
        xi = stationary_distribution(mdp)
    phi = features.phi
    v = phi @ theta
    residual = op.apply(v) - v
    gram = phi.T @ (xi[:, None] * phi)
    coeffs = np.linalg.pinv(gram, rcond=PINV_RCOND, hermitian=True) @ (
        phi.T @ (xi * residual)
    )
    projected = phi @ coeffs
    return 0.5 * float(np.sum(xi * projected**2))


def smallest_positive_eigenvalue(C: np.ndarray) -> float:
    eigs = np.linalg.eigvalsh(C)
    cutoff = PINV_RCOND * max(float(eigs.max()), 0.0)
    positive = eigs[eigs > cutoff]
    if positive.size == 0:
        raise OracleError("C has no positive eigenvalue")
    return float(positive.min())


def sufficient_x_radius(prob: ProjectedProblem) -> float:
    """
    Radius at which B_x contains x_θ for every θ in B_θ.

    Uses ‖x_θ‖ ≤ (‖A‖₂ r_theta + ‖b‖₂)/c with c the smallest positive
    eigenvalue of C.
    """
    c = smallest_positive_eigenvalue(prob.C)
    return (
        float(np.linalg.norm(prob.A, 2)) * prob.r_theta + float(np.linalg.norm(prob.b))
    ) / c


def check_unconstrained_regularity(prob: ProjectedProblem) -> ConditionResult:
    """
    Regularity needed by the unconstrained variant.

    Requires a quadratic regularizer with positive weight and a positive
    definite Hessian of J + p_∞.
    """
    reg = prob.regularizer
    if not reg.active:
        return ConditionResult(
            "unconstrained_regularity",
            False,
            "a quadratic regularizer with positive weight is required",
        )
    min_eig = float(np.linalg.eigvalsh(prob.J_hessian + reg.hessian(prob.d)).min())
    return ConditionResult(
        "unconstrained_regularity",
        min_eig > 0,
        f"min eigenvalue of the Hessian of J + p_∞ = {min_eig:.6g}",
    )
