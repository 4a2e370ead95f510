"""Eligibility traces under state-dependent, history-dependent and composite λ."""

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple, Union

import numpy as np

from .exceptions import ConfigError, InfeasibleTransitionError, TraceError
from .mdp import FeatureMap, FiniteMdp
from .simulation import TransitionStream

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class StateDependentLambda:
    """λ_n = λ(S_n)."""

    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=float).reshape(-1)
        if np.any((values < 0) | (values > 1)):
            raise ConfigError(f"state λ values must lie in [0, 1], got {values}")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def check_states(self, n_states: int) -> None:
        if self.values.shape[0] != n_states:
            raise ConfigError(
                f"{self.values.shape[0]} λ values for a model with {n_states} states"
            )

    def lam(self, s_next: int, gamma_rho: float, e_prev: np.ndarray) -> float:
        return float(self.values[s_next])


@dataclass(frozen=True)
class HistoryDependentLambda:
    """
    λ(y, e) = min(1, C / (γ(s')ρ(s,s')‖e‖₂)) with memory y = (s, s').

    λ(y, e)·e is the projection of e onto the ball of radius C/(γρ), so the
    rule is nonexpansive in e and ‖γρλe‖ ≤ C. A zero denominator gives λ = 1.
    """

    bound: float

    def __post_init__(self):
        if not self.bound > 0:
            raise ConfigError(f"history λ bound must be positive, got {self.bound}")

    def lam(self, s_next: int, gamma_rho: float, e_prev: np.ndarray) -> float:
        denom = gamma_rho * float(np.linalg.norm(e_prev))
        if denom <= self.bound:
            return 1.0
        return self.bound / denom

    def scaled(self, gamma_rho: float, e: np.ndarray) -> np.ndarray:
        """λ(y, e)·e for the memory y with product γ(s')ρ(s,s') = gamma_rho."""
        return self.lam(0, gamma_rho, e) * e


CellScheme = Union[StateDependentLambda, HistoryDependentLambda]


@dataclass(frozen=True, eq=False)
class CompositeLambda:
    """One trace per cell of a state partition; the total trace is their sum."""

    partition: np.ndarray
    cells: Tuple[CellScheme, ...]

    def __post_init__(self):
        partition = np.array(self.partition, dtype=np.int64).reshape(-1)
        cells = tuple(self.cells)
        if not cells:
            raise ConfigError("composite scheme needs at least one cell")
        if any(isinstance(c, CompositeLambda) for c in cells):
            raise ConfigError("composite cells must be state or history schemes")
        if partition.min() < 0 or partition.max() >= len(cells):
            raise ConfigError(f"partition indices must lie in 0..{len(cells) - 1}")
        if set(partition.tolist()) != set(range(len(cells))):
            raise ConfigError("every composite cell must contain at least one state")
        partition.setflags(write=False)
        object.__setattr__(self, "partition", partition)
        object.__setattr__(self, "cells", cells)

    @property
    def n_cells(self) -> int:
        return len(self.cells)


LambdaScheme = Union[StateDependentLambda, HistoryDependentLambda, CompositeLambda]


def as_composite(scheme: LambdaScheme, n_states: int) -> CompositeLambda:
    """A plain scheme viewed as a composite scheme with a single cell."""
    if isinstance(scheme, CompositeLambda):
        if scheme.partition.shape[0] != n_states:
            raise ConfigError(
                f"partition covers {scheme.partition.shape[0]} states, "
                f"model has {n_states}"
            )
        return scheme
    return CompositeLambda(np.zeros(n_states, dtype=np.int64), (scheme,))


def check_scheme(scheme: LambdaScheme, n_states: int) -> None:
    """Raise ConfigError if the scheme does not fit a model with n_states."""
    for cell in as_composite(scheme, n_states).cells:
        if isinstance(cell, StateDependentLambda):
            cell.check_states(n_states)


def is_state_dependent(scheme: LambdaScheme) -> bool:
    """True when every cell is state-dependent, i.e. T^(λ) has a closed form."""
    if isinstance(scheme, CompositeLambda):
        return all(isinstance(c, StateDependentLambda) for c in scheme.cells)
    return isinstance(scheme, StateDependentLambda)


def has_history_cells(scheme: LambdaScheme) -> bool:
    if isinstance(scheme, CompositeLambda):
        return any(isinstance(c, HistoryDependentLambda) for c in scheme.cells)
    return isinstance(scheme, HistoryDependentLambda)


@dataclass
class TraceState:
    """Per-cell traces e^(i) (one row each) and memory (s_prev, s_cur)."""

    sub_traces: np.ndarray
    memory: Tuple[int, int]
    lambdas: Optional[np.ndarray] = field(default=None)

    @property
    def e(self) -> np.ndarray:
        """Total trace Σ_i e^(i)."""
        return self.sub_traces.sum(axis=0)

    @property
    def n_cells(self) -> int:
        return self.sub_traces.shape[0]

    def copy(self) -> "TraceState":
        return TraceState(self.sub_traces.copy(), self.memory, self.lambdas)


def init_trace(
    features: FeatureMap,
    scheme: LambdaScheme,
    s0: int,
    e0: Optional[np.ndarray] = None,
) -> TraceState:
    """
    Start a trace at S₀.

    The cell containing ``s0`` gets φ(s0) (or ``e0`` when given), every other
    cell starts at zero. Memory starts at (s0, s0).
    """
    composite = as_composite(scheme, features.n_states)
    sub = np.zeros((composite.n_cells, features.d))
    sub[composite.partition[s0]] = features.phi[s0] if e0 is None else e0
    return TraceState(sub, (s0, s0))


def _gamma_rho(mdp: FiniteMdp, s: int, s_next: int) -> float:
    if mdp.behavior_P[s, s_next] <= 0.0:
        raise InfeasibleTransitionError(
            f"transition ({s}, {s_next}) has zero behavior probability"
        )
    return float(mdp.discount[s_next] * mdp.ratios[s, s_next])


def next_lambdas(
    trace: TraceState,
    mdp: FiniteMdp,
    scheme: LambdaScheme,
    s: int,
    s_next: int,
) -> np.ndarray:
    """
    λ-values of every cell for the transition (s, s'), without advancing.

    Each cell evaluates its rule at the new memory (s, s') and its own
    pre-update sub-trace.
    """
    composite = as_composite(scheme, mdp.n_states)
    gamma_rho = _gamma_rho(mdp, s, s_next)
    return np.array(
        [
            cell.lam(s_next, gamma_rho, trace.sub_traces[i])
            for i, cell in enumerate(composite.cells)
        ]
    )


def step_trace(
    trace: TraceState,
    mdp: FiniteMdp,
    features: FeatureMap,
    scheme: LambdaScheme,
    s: int,
    s_next: int,
) -> Tuple[TraceState, np.ndarray]:
    """
    Advance e_{n-1} to e_n = λ_n γ(s') ρ(s,s') e_{n-1} + φ(s').

    Under a composite scheme each cell applies its own λ and only the cell
    containing s' receives φ(s').

    Args:
        trace: Trace whose memory ends at ``s``
        mdp: Model
        features: Feature map
        scheme: λ-scheme
        s: State S_{n-1}
        s_next: State S_n

    Returns:
        Tuple of the new trace and the per-cell λ_n

    Raises:
        TraceError: If the trace's current state is not ``s``
        InfeasibleTransitionError: If P^o[s, s'] = 0
    """
    if trace.memory[1] != s:
        raise TraceError(
            f"trace memory ends at state {trace.memory[1]}, transition starts at {s}"
        )
    composite = as_composite(scheme, mdp.n_states)
    gamma_rho = _gamma_rho(mdp, s, s_next)
    lambdas = np.array(
        [
            cell.lam(s_next, gamma_rho, trace.sub_traces[i])
            for i, cell in enumerate(composite.cells)
        ]
    )
    sub = (lambdas * gamma_rho)[:, None] * trace.sub_traces
    sub[composite.partition[s_next]] += features.phi[s_next]
    return TraceState(sub, (s, s_next), lambdas), lambdas


def trace_bound(scheme: LambdaScheme, features: FeatureMap) -> Optional[float]:
    """
    Bound on ‖e_n‖₂ for all n ≥ 1 when every cell is history-dependent.

    Returns None when some cell has no bound.
    """
    cells = scheme.cells if isinstance(scheme, CompositeLambda) else (scheme,)
    if not all(isinstance(c, HistoryDependentLambda) for c in cells):
        return None
    return sum(c.bound for c in cells) + features.max_norm


@dataclass
class CouplingResult:
    """Gap ‖e_n − ê_n‖ along one stream with the analytic envelope."""

    gaps: np.ndarray
    bound: np.ndarray


def coupling_envelope(mdp: FiniteMdp, initial_gap: float, horizon: int) -> np.ndarray:
    """‖e₀ − ê₀‖·1ᵀ(PΓ)ⁿ1 for n = 0..horizon."""
    ones = np.ones(mdp.n_states)
    out = np.empty(horizon + 1)
    row = ones.copy()
    for n in range(horizon + 1):
        out[n] = initial_gap * row.sum()
        row = row @ mdp.P_gamma
    return out


def coupled_trace_decay(
    mdp: FiniteMdp,
    features: FeatureMap,
    scheme: LambdaScheme,
    e0_a: np.ndarray,
    e0_b: np.ndarray,
    horizon: int,
    seed: int,
    initial_state: Optional[int] = None,
) -> CouplingResult:
    """
    Run two traces from different initial vectors on one transition stream.

    Args:
        mdp: Model
        features: Feature map
        scheme: λ-scheme
        e0_a: First initial trace
        e0_b: Second initial trace
        horizon: Number of steps
        seed: Stream seed
        initial_state: Fixed S₀; drawn from ξ when None

    Returns:
        CouplingResult with gaps and envelope for n = 0..horizon
    """
    stream = TransitionStream(mdp, seed, initial_state)
    s0 = stream.initial_state
    a = init_trace(features, scheme, s0, np.asarray(e0_a, dtype=float))
    b = init_trace(features, scheme, s0, np.asarray(e0_b, dtype=float))
    gaps = np.empty(horizon + 1)
    gaps[0] = np.linalg.norm(a.e - b.e)
    for n in range(1, horizon + 1):
        t = next(stream)
        a, _ = step_trace(a, mdp, features, scheme, t.s, t.s_next)
        b, _ = step_trace(b, mdp, features, scheme, t.s, t.s_next)
        gaps[n] = np.linalg.norm(a.e - b.e)
    bound = coupling_envelope(mdp, float(gaps[0]), horizon)
    return CouplingResult(gaps, bound)


def stationary_trace_series(
    mdp: FiniteMdp,
    features: FeatureMap,
    scheme: StateDependentLambda,
    path: Sequence[int],
    depth: int,
) -> np.ndarray:
    """
    Backward series for the trace at the end of a state path.

    Evaluates Σ_{k=0}^{depth} (Π_{j=n-k+1}^{n} λ(S_j)γ(S_j)ρ(S_{j-1},S_j)) φ(S_{n-k})
    with n the last index of ``path``.

    Args:
        mdp: Model
        features: Feature map
        scheme: State-dependent λ
        path: Visited states S_0..S_n with n ≥ depth
        depth: Truncation depth K

    Returns:
        Truncated series value
    """
    if len(path) <= depth:
        raise ValueError(f"path of length {len(path)} is too short for depth {depth}")
    n = len(path) - 1
    total = features.phi[path[n]].copy()
    weight = 1.0
    for k in range(1, depth + 1):
        j = n - k + 1
        s_prev, s_cur = path[j - 1], path[j]
        weight *= (
            scheme.values[s_cur]
            * mdp.discount[s_cur]
            * mdp.ratios[s_prev, s_cur]
        )
        total += weight * features.phi[path[n - k]]
    return total
