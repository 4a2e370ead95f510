"""Simulation-based estimates of (A, b) for any λ-scheme."""

import logging
import warnings
from dataclasses import dataclass
from typing import Iterator, Optional

import numpy as np

from ..exceptions import EstimationError
from ..mdp import FeatureMap, FiniteMdp, stationary_distribution
from ..simulation import TransitionStream
from ..stats import DEFAULT_BATCHES, BatchMeans, TailSample
from ..traces import LambdaScheme, init_trace, step_trace
from .problem import ProjectedProblem, RegularizerSpec

logger = logging.getLogger(__name__)

MIN_RECOMMENDED_HORIZON = 10_000
CHUNK = 4096


@dataclass
class TraceChunk:
    """
    Consecutive steps n of a stationary-trace run.

    Row i holds the sub-traces e_n^(i), the transition (S_n, S_{n+1}), its
    observed reward, ρ(S_n, S_{n+1}), γ(S_{n+1}) and the per-cell λ_{n+1}.
    """

    sub_traces: np.ndarray
    s: np.ndarray
    s_next: np.ndarray
    reward: np.ndarray
    rho: np.ndarray
    gamma_next: np.ndarray
    next_lambdas: np.ndarray

    @property
    def size(self) -> int:
        return self.s.shape[0]

    @property
    def e(self) -> np.ndarray:
        return self.sub_traces.sum(axis=1)


def trace_chunks(
    mdp: FiniteMdp,
    features: FeatureMap,
    scheme: LambdaScheme,
    horizon: int,
    seed: int,
    *,
    align: int = 0,
    initial_state: Optional[int] = None,
    tail: Optional[TailSample] = None,
) -> Iterator[TraceChunk]:
    """
    Simulate ``horizon`` steps and yield them in chunks.

    Chunks never cross a multiple of ``align`` (when positive), so each lies in
    one batch of a BatchMeans accumulator with block size ``align``.
    """
    stream = TransitionStream(mdp, seed, initial_state)
    trace = init_trace(features, scheme, stream.initial_state)
    n_cells, d = trace.sub_traces.shape
    done = 0
    while done < horizon:
        m = min(CHUNK, horizon - done)
        if align > 0:
            m = min(m, align - done % align)
        sub = np.empty((m, n_cells, d))
        lambdas = np.empty((m, n_cells))
        s = np.empty(m, dtype=np.int64)
        s_next = np.empty(m, dtype=np.int64)
        reward = np.empty(m)
        for i in range(m):
            t = next(stream)
            sub[i] = trace.sub_traces
            s[i], s_next[i], reward[i] = t.s, t.s_next, t.reward
            trace, lambdas[i] = step_trace(trace, mdp, features, scheme, t.s, t.s_next)
            if tail is not None:
                tail.update(float(np.linalg.norm(trace.e)))
        done += m
        yield TraceChunk(
            sub_traces=sub,
            s=s,
            s_next=s_next,
            reward=reward,
            rho=mdp.ratios[s, s_next],
            gamma_next=mdp.discount[s_next],
            next_lambdas=lambdas,
        )


def estimate_projected_problem_empirical(
    mdp: FiniteMdp,
    features: FeatureMap,
    scheme: LambdaScheme,
    horizon: int,
    seed: int,
    *,
    regularizer: Optional[RegularizerSpec] = None,
    r_theta: float = 1.0,
    r_x: float = 1.0,
    n_batches: int = DEFAULT_BATCHES,
    initial_state: Optional[int] = None,
) -> ProjectedProblem:
    """
    Long-run averages for A and b with batch-means standard errors.

    A is the average of e_n ρ_n (γ_{n+1}φ(S_{n+1}) − φ(S_n))ᵀ and b the average
    of e_n ρ_n r(S_n, S_{n+1}); C = ΦᵀΞΦ is exact.

    Args:
        mdp: Valid model
        features: Feature map
        scheme: Any λ-scheme
        horizon: Number of simulated steps
        seed: Stream seed
        regularizer: Regularizer attached to the result
        r_theta: Radius of B_θ
        r_x: Radius of B_x
        n_batches: Batches of the standard-error estimate
        initial_state: Fixed S₀; drawn from ξ when None

    Returns:
        ProjectedProblem with A_stderr and b_stderr set

    Raises:
        EstimationError: If the horizon is too short or an average is not finite
    """
    if horizon < n_batches:
        raise EstimationError(f"horizon {horizon} is shorter than {n_batches} batches")
    if horizon < MIN_RECOMMENDED_HORIZON:
        warnings.warn(
            f"estimation horizon {horizon} is below {MIN_RECOMMENDED_HORIZON}; "
            "standard errors may be unreliable",
            UserWarning,
        )
    phi = features.phi
    d = features.d
    A_acc = BatchMeans(horizon, (d, d), n_batches)
    b_acc = BatchMeans(horizon, (d,), n_batches)
    logger.info("estimating (A, b) over %d steps, seed %d", horizon, seed)
    for chunk in trace_chunks(
        mdp,
        features,
        scheme,
        horizon,
        seed,
        align=A_acc.block_size,
        initial_state=initial_state,
    ):
        e = chunk.e
        direction = chunk.gamma_next[:, None] * phi[chunk.s_next] - phi[chunk.s]
        A_acc.add_sum(np.einsum("i,ij,ik->jk", chunk.rho, e, direction), chunk.size)
        b_acc.add_sum(e.T @ (chunk.rho * chunk.reward), chunk.size)

    A, b = A_acc.mean, b_acc.mean
    if not (np.all(np.isfinite(A)) and np.all(np.isfinite(b))):
        raise EstimationError("non-finite long-run average")
    xi = stationary_distribution(mdp)
    C = phi.T @ (xi[:, None] * phi)
    return ProjectedProblem(
        A=A,
        b=b,
        C=0.5 * (C + C.T),
        regularizer=regularizer or RegularizerSpec(),
        r_theta=r_theta,
        r_x=r_x,
        A_stderr=A_acc.stderr,
        b_stderr=b_acc.stderr,
    )
