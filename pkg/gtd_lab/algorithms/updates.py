"""One-step update rules for every GTD-family variant."""

import logging
from dataclasses import dataclass
from typing import Callable, Dict, Optional

import numpy as np

from ..exceptions import ConfigError, DivergenceError, NumericalError
from ..mdp import FeatureMap, FiniteMdp
from ..oracle.problem import RegularizerSpec
from ..schemas import AlgorithmSpec
from ..traces import LambdaScheme, TraceState, next_lambdas
from ..types import AlgorithmVariant, Transition
from .geometry import PowerMirrorMap, project_ball, truncation_factor

logger = logging.getLogger(__name__)


@dataclass
class IterateState:
    """Iterates (θ, x) and, for mirror variants, the dual iterate θ* with θ = ∇ψ*(θ*)."""

    theta: np.ndarray
    x: np.ndarray
    theta_star: Optional[np.ndarray] = None
    n: int = 0

    def norm(self) -> float:
        return float(np.hypot(np.linalg.norm(self.theta), np.linalg.norm(self.x)))


@dataclass(frozen=True)
class StepContext:
    """Everything a step needs besides the iterate, the sample and the trace."""

    spec: AlgorithmSpec
    mdp: FiniteMdp
    features: FeatureMap
    scheme: LambdaScheme
    regularizer: RegularizerSpec
    mirror: PowerMirrorMap

    @classmethod
    def build(
        cls,
        spec: AlgorithmSpec,
        mdp: FiniteMdp,
        features: FeatureMap,
        scheme: LambdaScheme,
    ) -> "StepContext":
        return cls(
            spec=spec,
            mdp=mdp,
            features=features,
            scheme=scheme,
            regularizer=RegularizerSpec.from_config(spec.regularizer, features.d),
            mirror=PowerMirrorMap(spec.q),
        )

    @property
    def x_radius(self) -> float:
        """Radius of the x-ball in the coordinates the iterate is stored in."""
        if (
            self.spec.variant is AlgorithmVariant.GTDA_1TS_ETA
            and self.spec.eta_form == "x_tilde"
        ):
            return self.spec.r_x / float(np.sqrt(self.spec.eta))
        return self.spec.r_x


def _vector(values, d: int, name: str) -> np.ndarray:
    if values is None:
        return np.zeros(d)
    out = np.array(values, dtype=float)
    if out.shape != (d,):
        raise ConfigError(f"{name} has {out.size} entries, expected {d}")
    return out


def initial_iterate(spec: AlgorithmSpec, d: int) -> IterateState:
    """θ₀, x₀ (and θ*₀) from the AlgorithmSpec; zeros by default."""
    theta = _vector(spec.theta0, d, "theta0")
    x = _vector(spec.x0, d, "x0")
    if not spec.variant.is_mirror:
        return IterateState(theta=theta, x=x)
    mirror = PowerMirrorMap(spec.q)
    if spec.theta_star0 is not None:
        theta_star = _vector(spec.theta_star0, d, "theta_star0")
    else:
        theta_star = mirror.inverse_grad(theta)
    theta_star = project_ball(theta_star, spec.level_radius)
    return IterateState(theta=mirror.grad(theta_star), x=x, theta_star=theta_star)


@dataclass
class _Quantities:
    """Sampled terms of one step, with e_n already passed through h_K if needed."""

    rho: float
    gamma_next: float
    phi: np.ndarray
    phi_next: np.ndarray
    e: np.ndarray
    sub: np.ndarray
    delta: float


def _quantities(
    state: IterateState, sample: Transition, trace: TraceState, ctx: StepContext
) -> _Quantities:
    s, s_next = sample.s, sample.s_next
    phi = ctx.features.phi[s]
    phi_next = ctx.features.phi[s_next]
    rho = float(ctx.mdp.ratios[s, s_next])
    gamma_next = float(ctx.mdp.discount[s_next])
    delta = rho * (
        sample.reward + gamma_next * float(phi_next @ state.theta) - float(phi @ state.theta)
    )
    e, sub = trace.e, trace.sub_traces
    if ctx.spec.variant.is_biased:
        assert ctx.spec.K is not None
        factor = truncation_factor(e, ctx.spec.K)
        if factor != 1.0:
            e, sub = factor * e, factor * sub
    return _Quantities(rho, gamma_next, phi, phi_next, e, sub, delta)


def _gtda_direction(q: _Quantities, x: np.ndarray) -> np.ndarray:
    """ρ_n(φ(S_n) − γ_{n+1}φ(S_{n+1}))·(e_nᵀx_n)."""
    return q.rho * (q.phi - q.gamma_next * q.phi_next) * float(q.e @ x)


def _gtdb_direction(
    q: _Quantities,
    x: np.ndarray,
    state_trace: TraceState,
    sample: Transition,
    ctx: StepContext,
) -> np.ndarray:
    """e_nδ_n − Σ_i ρ_n(1 − λ^(i)_{n+1})γ_{n+1}φ(S_{n+1})·(e^(i)_nᵀx_n)."""
    lambdas = next_lambdas(state_trace, ctx.mdp, ctx.scheme, sample.s, sample.s_next)
    weight = float(np.sum((1.0 - lambdas) * (q.sub @ x)))
    return q.e * q.delta - q.rho * q.gamma_next * q.phi_next * weight


def _x_direction(q: _Quantities, x: np.ndarray) -> np.ndarray:
    """e_nδ_n − φ(S_n)φ(S_n)ᵀx_n."""
    return q.e * q.delta - q.phi * float(q.phi @ x)


def _ascend(
    base: np.ndarray, alpha: float, direction: np.ndarray, grad_p: np.ndarray
) -> np.ndarray:
    return base + alpha * direction - alpha * grad_p


def _finite(state: IterateState) -> IterateState:
    arrays = [state.theta, state.x]
    if state.theta_star is not None:
        arrays.append(state.theta_star)
    if not all(np.all(np.isfinite(a)) for a in arrays):
        raise NumericalError(f"non-finite iterate at step {state.n}", step=state.n)
    return state


def _gtd_step(
    state: IterateState,
    sample: Transition,
    trace: TraceState,
    ctx: StepContext,
    *,
    gtdb: bool,
    project: bool = True,
) -> IterateState:
    spec = ctx.spec
    q = _quantities(state, sample, trace, ctx)
    alpha = spec.alpha(state.n)
    beta = spec.x_stepsize(state.n)
    if gtdb:
        direction = _gtdb_direction(q, state.x, trace, sample, ctx)
    else:
        direction = _gtda_direction(q, state.x)
    theta = _ascend(state.theta, alpha, direction, ctx.regularizer.grad(state.theta))
    x = state.x + beta * _x_direction(q, state.x)
    if project:
        theta = project_ball(theta, spec.r_theta)
        x = project_ball(x, spec.r_x)
    return _finite(IterateState(theta=theta, x=x, n=state.n + 1))


def step_gtda_2ts(
    state: IterateState, sample: Transition, trace: TraceState, ctx: StepContext
) -> IterateState:
    """
    Constrained two-time-scale GTDa.

    θ ← Π_θ(θ + α ρ(φ − γ'φ')(eᵀx) − α∇p(θ)) and x ← Π_x(x + β(eδ − φφᵀx)),
    both from the same (θ_n, x_n).
    """
    return _gtd_step(state, sample, trace, ctx, gtdb=False)


def step_gtdb_2ts(
    state: IterateState, sample: Transition, trace: TraceState, ctx: StepContext
) -> IterateState:
    """
    Constrained two-time-scale GTDb.

    The θ-direction is eδ minus the (1 − λ_{n+1}) correction, summed per cell
    under a composite scheme. λ_{n+1} is read from the scheme without
    advancing the trace.
    """
    return _gtd_step(state, sample, trace, ctx, gtdb=True)


def step_gtda_1ts(
    state: IterateState, sample: Transition, trace: TraceState, ctx: StepContext
) -> IterateState:
    """Single-time-scale GTDa: β_n = α_n."""
    return _gtd_step(state, sample, trace, ctx, gtdb=False)


def step_gtda_1ts_eta(
    state: IterateState, sample: Transition, trace: TraceState, ctx: StepContext
) -> IterateState:
    """
    Single-time-scale GTDa with x-stepsize ηα_n.

    In the x̃-form the stored iterate is x̃ = x/√η, updated as
    x̃ ← Π(x̃ + α(√η eδ − ηφφᵀx̃)) on the ball of radius r_x/√η, and θ sees √η x̃.
    """
    spec = ctx.spec
    if spec.eta_form == "x":
        return _gtd_step(state, sample, trace, ctx, gtdb=False)
    a = float(np.sqrt(spec.eta))
    q = _quantities(state, sample, trace, ctx)
    alpha = spec.alpha(state.n)
    direction = _gtda_direction(q, a * state.x)
    theta = _ascend(state.theta, alpha, direction, ctx.regularizer.grad(state.theta))
    x_dir = a * q.e * q.delta - spec.eta * q.phi * float(q.phi @ state.x)
    x = state.x + alpha * x_dir
    theta = project_ball(theta, spec.r_theta)
    x = project_ball(x, ctx.x_radius)
    return _finite(IterateState(theta=theta, x=x, n=state.n + 1))


def step_biased(
    state: IterateState, sample: Transition, trace: TraceState, ctx: StepContext
) -> IterateState:
    """
    Biased variants: e_n is replaced by h_K(e_n) inside the updates only.

    Under a composite scheme every sub-trace is scaled by the same factor.
    """
    gtdb = ctx.spec.variant is AlgorithmVariant.BIASED_GTDB_2TS
    return _gtd_step(state, sample, trace, ctx, gtdb=gtdb)


def step_gtda_unconstrained(
    state: IterateState, sample: Transition, trace: TraceState, ctx: StepContext
) -> IterateState:
    """
    Single-time-scale GTDa without projections.

    Raises:
        DivergenceError: If ‖(θ, x)‖ exceeds ``divergence_guard``
    """
    new = _gtd_step(state, sample, trace, ctx, gtdb=False, project=False)
    norm = new.norm()
    if norm > ctx.spec.divergence_guard:
        logger.warning("divergence guard tripped at step %d (norm %.3e)", new.n, norm)
        raise DivergenceError(
            f"iterate norm {norm:.3e} exceeds guard {ctx.spec.divergence_guard:.3e}",
            step=new.n,
            norm=norm,
        )
    return new


def _mirror_step(
    state: IterateState,
    sample: Transition,
    trace: TraceState,
    ctx: StepContext,
    *,
    gtdb: bool,
) -> IterateState:
    spec = ctx.spec
    assert state.theta_star is not None
    q = _quantities(state, sample, trace, ctx)
    alpha = spec.alpha(state.n)
    beta = spec.x_stepsize(state.n)
    if gtdb:
        direction = _gtdb_direction(q, state.x, trace, sample, ctx)
    else:
        direction = _gtda_direction(q, state.x)
    theta_star = _ascend(
        state.theta_star, alpha, direction, ctx.regularizer.grad(state.theta)
    )
    theta_star = project_ball(theta_star, spec.level_radius)
    x = project_ball(state.x + beta * _x_direction(q, state.x), spec.r_x)
    return _finite(
        IterateState(
            theta=ctx.mirror.grad(theta_star),
            x=x,
            theta_star=theta_star,
            n=state.n + 1,
        )
    )


def step_mdgtda(
    state: IterateState, sample: Transition, trace: TraceState, ctx: StepContext
) -> IterateState:
    """Mirror-descent GTDa: the GTDa θ-direction moves θ*, and θ = ∇ψ*(θ*)."""
    return _mirror_step(state, sample, trace, ctx, gtdb=False)


def step_mdgtdb(
    state: IterateState, sample: Transition, trace: TraceState, ctx: StepContext
) -> IterateState:
    """Mirror-descent GTDb."""
    return _mirror_step(state, sample, trace, ctx, gtdb=True)


def step_mdtd(
    state: IterateState, sample: Transition, trace: TraceState, ctx: StepContext
) -> IterateState:
    """Mirror-descent TD: θ* ← Π_D(θ* + α e δ), θ = ∇ψ*(θ*). No x-iterate."""
    spec = ctx.spec
    assert state.theta_star is not None
    q = _quantities(state, sample, trace, ctx)
    theta_star = state.theta_star + spec.alpha(state.n) * (q.e * q.delta)
    theta_star = project_ball(theta_star, spec.level_radius)
    return _finite(
        IterateState(
            theta=ctx.mirror.grad(theta_star),
            x=state.x,
            theta_star=theta_star,
            n=state.n + 1,
        )
    )


StepFunction = Callable[[IterateState, Transition, TraceState, StepContext], IterateState]

STEP_FUNCTIONS: Dict[AlgorithmVariant, StepFunction] = {
    AlgorithmVariant.GTDA_2TS: step_gtda_2ts,
    AlgorithmVariant.GTDB_2TS: step_gtdb_2ts,
    AlgorithmVariant.GTDA_1TS: step_gtda_1ts,
    AlgorithmVariant.GTDA_1TS_ETA: step_gtda_1ts_eta,
    AlgorithmVariant.GTDA_UNCONSTRAINED: step_gtda_unconstrained,
    AlgorithmVariant.BIASED_GTDA_2TS: step_biased,
    AlgorithmVariant.BIASED_GTDB_2TS: step_biased,
    AlgorithmVariant.BIASED_GTDA_1TS: step_biased,
    AlgorithmVariant.MD_GTDA: step_mdgtda,
    AlgorithmVariant.MD_GTDB: step_mdgtdb,
    AlgorithmVariant.MD_TD: step_mdtd,
}


def step(
    state: IterateState, sample: Transition, trace: TraceState, ctx: StepContext
) -> IterateState:
    """Dispatch to the rule of ``ctx.spec.variant``."""
    return STEP_FUNCTIONS[ctx.spec.variant](state, sample, trace, ctx)
