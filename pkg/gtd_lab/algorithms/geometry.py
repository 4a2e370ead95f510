"""Ball projections, trace truncation and the power mirror map."""

import math

import numpy as np

from ..exceptions import ConfigError


def project_ball(v: np.ndarray, r: float) -> np.ndarray:
    """
    Euclidean projection onto the closed ball of radius r at the origin.

    Args:
        v: Vector
        r: Positive radius

    Returns:
        v itself when ‖v‖ ≤ r, otherwise v·r/‖v‖
    """
    norm = float(np.linalg.norm(v))
    if norm <= r:
        return v
    return v * (r / norm)


def truncation_factor(e: np.ndarray, K: float) -> float:
    """Scalar c with h_K(e) = c·e."""
    norm = float(np.linalg.norm(e))
    if norm <= K:
        return 1.0
    return K / norm


def truncate_trace(e: np.ndarray, K: float) -> np.ndarray:
    """h_K(e): e below radius K, radially scaled onto the sphere of radius K above."""
    if not K > 0:
        raise ConfigError(f"truncation radius K must be positive, got {K}")
    return project_ball(e, K)


class PowerMirrorMap:
    """
    ψ*(u) = ‖u‖^q / q with ∇ψ*(u) = ‖u‖^(q−2)·u.

    The level set {ψ* ≤ ℓ} is the ball of radius (qℓ)^(1/q). For q = 2 the map
    is the identity.
    """

    def __init__(self, q: float):
        if q < 2:
            raise ConfigError(f"mirror exponent q must be at least 2, got {q}")
        self.q = float(q)

    def value(self, u: np.ndarray) -> float:
        return float(np.linalg.norm(u)) ** self.q / self.q

    def grad(self, u: np.ndarray) -> np.ndarray:
        if self.q == 2.0:
            return u
        norm = float(np.linalg.norm(u))
        if norm == 0.0:
            return np.zeros_like(u)
        return norm ** (self.q - 2.0) * u

    def inverse_grad(self, theta: np.ndarray) -> np.ndarray:
        """u with ∇ψ*(u) = θ."""
        if self.q == 2.0:
            return theta
        norm = float(np.linalg.norm(theta))
        if norm == 0.0:
            return np.zeros_like(theta)
        return norm ** (1.0 / (self.q - 1.0) - 1.0) * theta

    def level_radius(self, ell: float) -> float:
        if not ell > 0:
            raise ConfigError(f"level must be positive, got {ell}")
        if self.q == 2.0:
            return math.sqrt(2.0 * ell)
        return (self.q * ell) ** (1.0 / self.q)

    def level_project(self, u: np.ndarray, ell: float) -> np.ndarray:
        return project_ball(u, self.level_radius(ell))


def mirror_grad(theta_star: np.ndarray, q: float) -> np.ndarray:
    """θ = ∇ψ*(θ*)."""
    return PowerMirrorMap(q).grad(theta_star)


def level_project(theta_star: np.ndarray, ell: float, q: float) -> np.ndarray:
    """Projection of θ* onto D_θ* = {ψ* ≤ ℓ}."""
    return PowerMirrorMap(q).level_project(theta_star, ell)
