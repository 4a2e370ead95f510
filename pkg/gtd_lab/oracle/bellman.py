"""Generalized Bellman operators T^(λ) v = r^(λ) + P^(λ) v."""

import logging
from dataclasses import dataclass

import numpy as np

from ..exceptions import OracleError
from ..mdp import FiniteMdp, true_value_function
from ..traces import (
    CompositeLambda,
    LambdaScheme,
    StateDependentLambda,
    as_composite,
)

logger = logging.getLogger(__name__)

SUBSTOCHASTIC_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class AffineBellman:
    """Affine operator v ↦ r_lambda + P_lambda v."""

    P_lambda: np.ndarray
    r_lambda: np.ndarray

    def apply(self, v: np.ndarray) -> np.ndarray:
        return self.r_lambda + self.P_lambda @ v

    def residual(self, v: np.ndarray) -> float:
        """‖T v − v‖_∞."""
        return float(np.max(np.abs(self.apply(v) - v)))

    def is_substochastic(self, tol: float = SUBSTOCHASTIC_TOL) -> bool:
        return bool(
            np.all(self.P_lambda >= -tol)
            and np.all(self.P_lambda.sum(axis=1) <= 1.0 + tol)
        )


def bellman_state_dependent(mdp: FiniteMdp, lam: np.ndarray) -> AffineBellman:
    """
    T^(λ) for state-dependent λ.

    r^(λ) = (I − PΓΛ)⁻¹ r_π and P^(λ) = (I − PΓΛ)⁻¹ PΓ(I − Λ) with Λ = diag(λ).

    Args:
        mdp: Valid model
        lam: λ(s) per state, in [0, 1]

    Returns:
        AffineBellman for the scheme

    Raises:
        OracleError: If I − PΓΛ is singular
    """
    lam = np.asarray(lam, dtype=float).reshape(-1)
    if lam.shape != (mdp.n_states,):
        raise OracleError(f"λ has {lam.shape[0]} entries, model has {mdp.n_states} states")
    if np.any((lam < 0) | (lam > 1)):
        raise OracleError("λ values must lie in [0, 1]")
    n = mdp.n_states
    system = np.eye(n) - mdp.P_gamma * lam[None, :]
    rhs = np.column_stack([mdp.expected_reward, mdp.P_gamma * (1.0 - lam)[None, :]])
    try:
        solved = np.linalg.solve(system, rhs)
    except np.linalg.LinAlgError as e:
        raise OracleError("I − PΓΛ is singular") from e
    return AffineBellman(P_lambda=solved[:, 1:], r_lambda=solved[:, 0])


def bellman_composite(mdp: FiniteMdp, scheme: CompositeLambda) -> AffineBellman:
    """
    T^(λ) of a composite scheme whose cells are all state-dependent.

    Row s of the operator is row s of the operator of the cell containing s.

    Raises:
        OracleError: If a cell is history-dependent
    """
    composite = as_composite(scheme, mdp.n_states)
    P_lambda = np.empty((mdp.n_states, mdp.n_states))
    r_lambda = np.empty(mdp.n_states)
    for i, cell in enumerate(composite.cells):
        if not isinstance(cell, StateDependentLambda):
            raise OracleError(
                f"composite cell {i} is history-dependent; T^(λ) has no closed form"
            )
        rows = composite.partition == i
        op = bellman_state_dependent(mdp, cell.values)
        P_lambda[rows] = op.P_lambda[rows]
        r_lambda[rows] = op.r_lambda[rows]
    return AffineBellman(P_lambda=P_lambda, r_lambda=r_lambda)


def bellman_for_scheme(mdp: FiniteMdp, scheme: LambdaScheme) -> AffineBellman:
    """Closed-form T^(λ) for a state-dependent or composite-state scheme."""
    if isinstance(scheme, StateDependentLambda):
        return bellman_state_dependent(mdp, scheme.values)
    if isinstance(scheme, CompositeLambda):
        return bellman_composite(mdp, scheme)
    raise OracleError("history-dependent λ has no closed-form T^(λ)")


def fixed_point_residual(mdp: FiniteMdp, op: AffineBellman) -> float:
    """‖v_π − r^(λ) − P^(λ) v_π‖_∞."""
    return op.residual(true_value_function(mdp))
