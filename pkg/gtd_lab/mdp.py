"""Finite MDP instances for off-policy policy evaluation."""

import logging
from dataclasses import dataclass, field
from functools import cached_property
from typing import List, Optional

import numpy as np
from scipy.linalg import null_space
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .exceptions import InfeasibleTransitionError, ModelValidationError
from .types import ConditionResult, ValidationReport

logger = logging.getLogger(__name__)

ROW_SUM_TOL = 1e-12
POWER_ITERATION_TOL = 1e-12
POWER_ITERATION_CAP = 10_000


def _as_matrix(value, name: str, n: int) -> np.ndarray:
    array = np.array(value, dtype=float)
    if array.shape != (n, n):
        raise ModelValidationError(
            f"{name} has shape {array.shape}, expected ({n}, {n})"
        )
    return array


def _renormalize_rows(matrix: np.ndarray) -> np.ndarray:
    """Rescale rows whose sums are already within tolerance of 1."""
    sums = matrix.sum(axis=1)
    close = np.abs(sums - 1.0) <= ROW_SUM_TOL
    out = matrix.copy()
    out[close] = out[close] / sums[close, None]
    return out


def _freeze(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class FiniteMdp:
    """
    Target and behavior Markov chains with state-dependent discounting.

    Rows of the transition matrices that sum to 1 within ``ROW_SUM_TOL`` are
    renormalized; rows further off are kept as given so that ``validate_model``
    can name them.
    """

    target_P: np.ndarray
    behavior_P: np.ndarray
    discount: np.ndarray
    reward_mean: np.ndarray
    reward_noise_scale: Optional[np.ndarray] = field(default=None)

    def __post_init__(self):
        target = np.array(self.target_P, dtype=float)
        if target.ndim != 2 or target.shape[0] != target.shape[1] or target.size == 0:
            raise ModelValidationError(
                f"target_P must be a non-empty square matrix, got shape {target.shape}"
            )
        n = target.shape[0]
        behavior = _as_matrix(self.behavior_P, "behavior_P", n)
        reward = _as_matrix(self.reward_mean, "reward_mean", n)
        if self.reward_noise_scale is None:
            noise = np.zeros((n, n))
        else:
            noise = _as_matrix(self.reward_noise_scale, "reward_noise_scale", n)
        discount = np.array(self.discount, dtype=float)
        if discount.shape != (n,):
            raise ModelValidationError(
                f"discount has shape {discount.shape}, expected ({n},)"
            )

        object.__setattr__(self, "target_P", _freeze(_renormalize_rows(target)))
        object.__setattr__(self, "behavior_P", _freeze(_renormalize_rows(behavior)))
        object.__setattr__(self, "discount", _freeze(discount))
        object.__setattr__(self, "reward_mean", _freeze(reward))
        object.__setattr__(self, "reward_noise_scale", _freeze(noise))

    @property
    def n_states(self) -> int:
        return self.target_P.shape[0]

    @cached_property
    def P_gamma(self) -> np.ndarray:
        """The substochastic matrix PΓ."""
        return _freeze(self.target_P * self.discount[None, :])

    @cached_property
    def expected_reward(self) -> np.ndarray:
        """r_π(s) = Σ_s' P[s,s'] r(s,s')."""
        return _freeze((self.target_P * self.reward_mean).sum(axis=1))

    @cached_property
    def ratios(self) -> np.ndarray:
        """Importance ratios ρ(s,s'); 0 wherever the behavior chain cannot move."""
        out = np.zeros_like(self.target_P)
        feasible = self.behavior_P > 0
        out[feasible] = self.target_P[feasible] / self.behavior_P[feasible]
        return _freeze(out)

    @cached_property
    def behavior_cdf(self) -> np.ndarray:
        """Row-wise cumulative behavior probabilities, used for sampling."""
        cdf = np.cumsum(self.behavior_P, axis=1)
        cdf[:, -1] = 1.0
        return _freeze(cdf)


@dataclass(frozen=True, eq=False)
class FeatureMap:
    """Feature matrix Φ whose s-th row is φ(s)ᵀ. Columns may be dependent."""

    phi: np.ndarray

    def __post_init__(self):
        phi = np.array(self.phi, dtype=float)
        if phi.ndim == 1:
            phi = phi[:, None]
        if phi.ndim != 2:
            raise ModelValidationError(f"features must be a matrix, got {phi.ndim}-d")
        if not np.any(phi != 0.0):
            raise ModelValidationError("at least one feature vector must be nonzero")
        object.__setattr__(self, "phi", _freeze(phi))

    @property
    def d(self) -> int:
        return self.phi.shape[1]

    @property
    def n_states(self) -> int:
        return self.phi.shape[0]

    @cached_property
    def max_norm(self) -> float:
        """max_s ‖φ(s)‖₂."""
        return float(np.max(np.linalg.norm(self.phi, axis=1)))

    @cached_property
    def span_projector(self) -> np.ndarray:
        """Orthogonal projector of ℝ^d onto span{φ(S)}."""
        return _freeze(np.linalg.pinv(self.phi) @ self.phi)

    def span_residual(self, v: np.ndarray) -> float:
        """Distance of v from span{φ(S)}."""
        return float(np.linalg.norm(v - self.span_projector @ v))

    def check_compatible(self, mdp: FiniteMdp) -> None:
        if self.n_states != mdp.n_states:
            raise ModelValidationError(
                f"features have {self.n_states} rows but the model has "
                f"{mdp.n_states} states"
            )


def spectral_radius(matrix: np.ndarray) -> float:
    """
    Spectral radius of a nonnegative matrix by power iteration.

    Iterates on I + M, which has the same Perron vector and is aperiodic, and
    returns the Collatz-Wielandt upper bound once it is within
    ``POWER_ITERATION_TOL`` of the lower bound.

    Args:
        matrix: Square nonnegative matrix

    Returns:
        Upper estimate of the spectral radius
    """
    n = matrix.shape[0]
    shifted = matrix + np.eye(n)
    x = np.ones(n)
    upper = np.inf
    for _ in range(POWER_ITERATION_CAP):
        y = shifted @ x
        quotients = y / x
        upper, lower = float(quotients.max()), float(quotients.min())
        if upper - lower <= POWER_ITERATION_TOL:
            break
        x = y / y.max()
    return upper - 1.0


def communicating_classes(transition: np.ndarray) -> List[List[int]]:
    """Strongly connected components of the graph of positive entries."""
    n_comp, labels = connected_components(
        csr_matrix(transition > 0), directed=True, connection="strong"
    )
    return [np.flatnonzero(labels == k).tolist() for k in range(n_comp)]


def _row_sum_condition(name: str, matrix: np.ndarray) -> ConditionResult:
    sums = matrix.sum(axis=1)
    bad_rows = np.flatnonzero(np.abs(sums - 1.0) > ROW_SUM_TOL).tolist()
    negative = bool(np.any(matrix < 0))
    if bad_rows or negative:
        parts = []
        if bad_rows:
            parts.append(
                "rows "
                + ", ".join(f"{i} (sum={sums[i]:.15g})" for i in bad_rows)
                + " do not sum to 1"
            )
        if negative:
            parts.append("negative entries present")
        return ConditionResult(name, False, "; ".join(parts))
    return ConditionResult(name, True)


def validate_model(mdp: FiniteMdp) -> ValidationReport:
    """
    Check the standing conditions of a model.

    Failures are reported, not raised; constructors that need a valid model
    call ``require_valid``.

    Args:
        mdp: Model to check

    Returns:
        ValidationReport with one entry per condition
    """
    report = ValidationReport()
    report.results.append(_row_sum_condition("target_row_stochastic", mdp.target_P))
    report.results.append(
        _row_sum_condition("behavior_row_stochastic", mdp.behavior_P)
    )

    gamma = mdp.discount
    bad_gamma = np.flatnonzero((gamma < 0) | (gamma > 1)).tolist()
    report.results.append(
        ConditionResult(
            "discount_range",
            not bad_gamma,
            f"discount outside [0, 1] at states {bad_gamma}" if bad_gamma else "",
        )
    )

    negative_noise = bool(np.any(mdp.reward_noise_scale < 0))
    report.results.append(
        ConditionResult(
            "noise_nonnegative",
            not negative_noise,
            "reward_noise_scale has negative entries" if negative_noise else "",
        )
    )

    violations = np.argwhere((mdp.behavior_P <= 0) & (mdp.target_P > 0))
    report.results.append(
        ConditionResult(
            "absolute_continuity",
            violations.size == 0,
            (
                "behavior_P is zero where target_P is positive at "
                + ", ".join(f"({s}, {t})" for s, t in violations.tolist())
            )
            if violations.size
            else "",
        )
    )

    radius = spectral_radius(np.abs(mdp.P_gamma))
    report.results.append(
        ConditionResult(
            "spectral_radius",
            radius < 1.0,
            f"sp.rad.(PΓ) = {radius:.15g}",
        )
    )

    classes = communicating_classes(mdp.behavior_P)
    report.results.append(
        ConditionResult(
            "behavior_irreducible",
            len(classes) == 1,
            "" if len(classes) == 1 else f"communicating classes: {classes}",
        )
    )
    return report


def require_valid(mdp: FiniteMdp) -> ValidationReport:
    """Validate a model and raise if any condition fails."""
    report = validate_model(mdp)
    if not report.ok:
        details = "; ".join(f"{r.name}: {r.detail}" for r in report.failures())
        raise ModelValidationError(f"invalid model: {details}", report=report)
    return report


def stationary_distribution(mdp: FiniteMdp) -> np.ndarray:
    """
    Invariant distribution ξ of the behavior chain.

    Args:
        mdp: Model with an irreducible behavior chain

    Returns:
        Positive probability vector with ξᵀP^o = ξᵀ

    Raises:
        ModelValidationError: If the behavior chain is reducible
    """
    classes = communicating_classes(mdp.behavior_P)
    if len(classes) != 1:
        raise ModelValidationError(
            f"behavior chain is reducible; communicating classes: {classes}"
        )
    n = mdp.n_states
    basis = null_space(mdp.behavior_P.T - np.eye(n))
    if basis.shape[1] != 1:
        raise ModelValidationError(
            f"invariant distribution is not unique (null space dim {basis.shape[1]})"
        )
    xi = basis[:, 0] / basis[:, 0].sum()
    if np.any(xi <= 0):
        raise ModelValidationError(f"non-positive stationary probabilities: {xi}")
    return _freeze(xi)


def importance_ratio(mdp: FiniteMdp, s: int, s_next: int) -> float:
    """
    ρ(s,s') = P[s,s'] / P^o[s,s'].

    Raises:
        InfeasibleTransitionError: If P^o[s,s'] = 0 while P[s,s'] > 0
    """
    p, p_o = mdp.target_P[s, s_next], mdp.behavior_P[s, s_next]
    if p_o == 0.0:
        if p > 0.0:
            raise InfeasibleTransitionError(
                f"behavior probability of ({s}, {s_next}) is 0 but target is {p}"
            )
        return 0.0
    return float(p / p_o)


def true_value_function(mdp: FiniteMdp) -> np.ndarray:
    """
    Solve the Bellman equation v = r_π + PΓv.

    Raises:
        ModelValidationError: If I - PΓ is singular
    """
    n = mdp.n_states
    try:
        v = np.linalg.solve(np.eye(n) - mdp.P_gamma, mdp.expected_reward)
    except np.linalg.LinAlgError as e:
        raise ModelValidationError("I - PΓ is singular") from e
    return v


def random_mdp(
    rng: np.random.Generator,
    n_states: int,
    *,
    discount_range: tuple[float, float] = (0.5, 0.95),
    on_policy: bool = False,
    noise_scale: float = 0.0,
) -> FiniteMdp:
    """
    Draw a model that satisfies every standing condition.

    Behavior rows are Dirichlet draws with full support, so the behavior chain
    is irreducible and absolutely continuity holds for any target.
    """
    behavior = rng.dirichlet(np.ones(n_states), size=n_states)
    target = behavior if on_policy else rng.dirichlet(np.ones(n_states), size=n_states)
    discount = rng.uniform(*discount_range, size=n_states)
    reward = rng.normal(size=(n_states, n_states))
    return FiniteMdp(
        target_P=target,
        behavior_P=behavior,
        discount=discount,
        reward_mean=reward,
        reward_noise_scale=np.full((n_states, n_states), noise_scale),
    )


def random_features(rng: np.random.Generator, n_states: int, d: int) -> FeatureMap:
    """Gaussian feature matrix."""
    return FeatureMap(rng.normal(size=(n_states, d)))
