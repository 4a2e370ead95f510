"""Pydantic models for gtd-lab configuration documents."""

import math
from typing import Any, Dict, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .types import (
    AlgorithmVariant,
    LambdaKind,
    MetricName,
    RegularizerKind,
    StepsizeKind,
)

Matrix = List[List[float]]


class ModelDocument(BaseModel):
    """Inline description of a finite MDP and its features."""

    n_states: int = Field(..., gt=0, description="Number of states |S|")
    target_P: Matrix = Field(..., description="Target transition matrix P, row-major")
    behavior_P: Matrix = Field(
        ..., description="Behavior transition matrix P^o, row-major"
    )
    discount: Union[float, List[float]] = Field(
        ..., description="Per-state discount γ(s), or one value for every state"
    )
    reward_mean: Union[float, Matrix] = Field(
        ..., description="Expected transition reward r(s,s'), or a constant"
    )
    reward_noise_scale: Union[float, Matrix] = Field(
        0.0, description="Standard deviation of the Gaussian reward noise"
    )
    features: Matrix = Field(..., description="Feature matrix Φ, one row per state")

    @model_validator(mode="after")
    def _check_dimensions(self) -> "ModelDocument":
        n = self.n_states
        for name in ("target_P", "behavior_P"):
            rows = getattr(self, name)
            if len(rows) != n or any(len(row) != n for row in rows):
                raise ValueError(f"{name} must be {n}x{n}")
        for name in ("reward_mean", "reward_noise_scale"):
            value = getattr(self, name)
            if isinstance(value, list) and (
                len(value) != n or any(len(row) != n for row in value)
            ):
                raise ValueError(f"{name} must be {n}x{n}")
        if isinstance(self.discount, list) and len(self.discount) != n:
            raise ValueError(f"discount must have {n} entries")
        if len(self.features) != n:
            raise ValueError(f"features must have {n} rows")
        widths = {len(row) for row in self.features}
        if len(widths) != 1 or 0 in widths:
            raise ValueError("feature rows must share one positive width")
        return self


class LambdaConfig(BaseModel):
    """λ-scheme: state-dependent, history-dependent or composite."""

    kind: LambdaKind = Field(..., description="Scheme family")
    values: Optional[Union[float, List[float]]] = Field(
        None, description="λ(s) per state (state kind); a scalar applies to all states"
    )
    bound: Optional[float] = Field(
        None, gt=0, description="Trace bound C for the history-dependent rule"
    )
    partition: Optional[List[int]] = Field(
        None, description="0-based cell index of every state (composite kind)"
    )
    cells: Optional[List["LambdaConfig"]] = Field(
        None, description="Per-cell state or history schemes (composite kind)"
    )

    @model_validator(mode="after")
    def _check_kind(self) -> "LambdaConfig":
        if self.kind is LambdaKind.STATE:
            if self.values is None:
                raise ValueError("state scheme requires 'values'")
            values = self.values if isinstance(self.values, list) else [self.values]
            if any(not 0.0 <= v <= 1.0 for v in values):
                raise ValueError("state λ values must lie in [0, 1]")
        elif self.kind is LambdaKind.HISTORY:
            if self.bound is None:
                raise ValueError("history scheme requires a positive 'bound'")
        else:
            if not self.partition or not self.cells:
                raise ValueError("composite scheme requires 'partition' and 'cells'")
            if any(c.kind is LambdaKind.COMPOSITE for c in self.cells):
                raise ValueError("composite cells must be state or history schemes")
            used = set(self.partition)
            if min(used) < 0 or max(used) >= len(self.cells):
                raise ValueError(
                    f"partition indices must lie in 0..{len(self.cells) - 1}"
                )
            if used != set(range(len(self.cells))):
                raise ValueError("every composite cell must contain at least one state")
        return self

    @property
    def is_history_only(self) -> bool:
        """Whether every state follows a history-dependent rule."""
        if self.kind is LambdaKind.COMPOSITE:
            return all(c.kind is LambdaKind.HISTORY for c in self.cells or [])
        return self.kind is LambdaKind.HISTORY


class StepsizeSchedule(BaseModel):
    """Stepsize sequence a, a(n+1)^-c or a/(n+1), indexed from n = 0."""

    model_config = ConfigDict(frozen=True)

    kind: StepsizeKind = Field(StepsizeKind.POWER, description="Schedule family")
    a: float = Field(1.0, ge=0, description="Scale")
    c: float = Field(1.0, ge=0, description="Decay exponent (power kind)")

    def __call__(self, n: int) -> float:
        if self.kind is StepsizeKind.CONSTANT:
            return self.a
        if self.kind is StepsizeKind.ONE_OVER_N:
            return self.a / (n + 1)
        return self.a * (n + 1) ** (-self.c)

    @property
    def rate(self) -> float:
        """Polynomial decay exponent of the sequence."""
        if self.kind is StepsizeKind.CONSTANT:
            return 0.0
        if self.kind is StepsizeKind.ONE_OVER_N:
            return 1.0
        return self.c

    @property
    def is_square_summable(self) -> bool:
        """Σ a_n = ∞ and Σ a_n² < ∞."""
        return 0.5 < self.rate <= 1.0

    @property
    def is_one_over_n_order(self) -> bool:
        return math.isclose(self.rate, 1.0)


class RegularizerConfig(BaseModel):
    """Regularizer p(θ) = (weight/2)‖θ - center‖² or p ≡ 0."""

    kind: RegularizerKind = Field(RegularizerKind.NONE, description="Regularizer family")
    weight: float = Field(0.0, ge=0, description="Quadratic weight")
    center: Optional[List[float]] = Field(
        None, description="Quadratic center; zeros when omitted"
    )


class AlgorithmSpec(BaseModel):
    """Algorithm variant and its parameters."""

    variant: AlgorithmVariant = Field(..., description="Update rule")
    r_theta: float = Field(1.0, gt=0, description="Radius of B_θ")
    r_x: float = Field(1.0, gt=0, description="Radius of B_x")
    level: Optional[float] = Field(
        None,
        gt=0,
        description="ψ*-level ℓ of D_θ* (mirror variants); defaults to the level "
        "whose ball has radius r_theta",
    )
    K: Optional[float] = Field(None, gt=0, description="Trace truncation radius of h_K")
    q: float = Field(2.0, ge=2, description="Mirror map exponent")
    eta: float = Field(1.0, gt=0, description="x-stepsize scale of the η-variant")
    eta_form: Literal["x", "x_tilde"] = Field(
        "x", description="Run the η-variant in x or in rescaled x̃ coordinates"
    )
    alpha: StepsizeSchedule = Field(
        default_factory=StepsizeSchedule, description="θ-stepsizes α_n"
    )
    beta: Optional[StepsizeSchedule] = Field(
        None, description="x-stepsizes β_n (two-time-scale variants)"
    )
    regularizer: RegularizerConfig = Field(
        default_factory=RegularizerConfig, description="Regularizer p"
    )
    divergence_guard: float = Field(
        1e6, gt=0, description="Abort when ‖(θ, x)‖ exceeds this value"
    )
    theta0: Optional[List[float]] = Field(None, description="Initial θ; zeros by default")
    x0: Optional[List[float]] = Field(None, description="Initial x; zeros by default")
    theta_star0: Optional[List[float]] = Field(
        None, description="Initial mirror iterate θ*; zeros by default"
    )

    @model_validator(mode="after")
    def _check_variant(self) -> "AlgorithmSpec":
        if self.variant.is_biased and self.K is None:
            raise ValueError(f"{self.variant.value} requires a positive K")
        if self.variant.is_two_time_scale and self.beta is None:
            raise ValueError(f"{self.variant.value} requires a 'beta' schedule")
        return self

    @property
    def level_value(self) -> float:
        """ψ*-level ℓ, defaulting to r_theta^q / q."""
        if self.level is not None:
            return self.level
        return self.r_theta**self.q / self.q

    @property
    def level_radius(self) -> float:
        """Radius (qℓ)^(1/q) of the level set D_θ*."""
        if self.level is None:
            return self.r_theta
        if self.q == 2.0:
            return math.sqrt(2.0 * self.level)
        return (self.q * self.level) ** (1.0 / self.q)

    def x_stepsize(self, n: int) -> float:
        """Stepsize applied to the x-iterate at step n."""
        if self.variant.is_two_time_scale:
            assert self.beta is not None
            return self.beta(n)
        if self.variant is AlgorithmVariant.GTDA_1TS_ETA:
            return self.eta * self.alpha(n)
        return self.alpha(n)


class AveragingConfig(BaseModel):
    """Running average of θ from step burn_in on."""

    enabled: bool = Field(True, description="Maintain the running average")
    burn_in: int = Field(0, ge=0, description="First step n₀ included in the average")


class OracleConfig(BaseModel):
    """Settings for the oracle reference used by metrics."""

    empirical_horizon: int = Field(
        100_000,
        gt=0,
        description="Horizon of the empirical (A, b) estimate for history schemes",
    )
    empirical_seed: int = Field(0, description="Seed of the empirical estimate")


class CheckConfig(BaseModel):
    """Parameters of the verification suite."""

    checks: List[str] = Field(
        default_factory=lambda: [
            "stationary",
            "gradients",
            "mean_ode",
            "reductions",
            "traces",
            "coupling",
        ],
        description="Checks to run",
    )
    stationary_horizon: int = Field(100_000, gt=0, description="Steps per seed")
    stationary_seeds: List[int] = Field(default_factory=lambda: [0], description="Seeds")
    n_sigma: float = Field(3.0, gt=0, description="Standard-error multiple to pass")
    gradient_points: int = Field(20, gt=0, description="Random θ per gradient check")
    trace_samples: int = Field(10_000, gt=0, description="Nonexpansiveness trials")
    trace_horizon: int = Field(100_000, gt=0, description="Steps of the bound check")
    coupling_seeds: int = Field(50, gt=1, description="Seeds of the coupling check")
    coupling_horizon: int = Field(50, gt=0, description="Steps of the coupling check")
    reduction_horizon: int = Field(1_000, gt=0, description="Steps per reduction pair")
    seed: int = Field(0, description="Seed of random probes and streams")


class ExperimentConfig(BaseModel):
    """Complete experiment document."""

    model_config = ConfigDict(populate_by_name=True)

    model: Union[str, ModelDocument] = Field(
        ..., description="Inline model or the name of a built-in model"
    )
    features: Optional[Matrix] = Field(
        None, description="Feature matrix overriding the model's own"
    )
    scheme: LambdaConfig = Field(..., alias="lambda", description="λ-scheme")
    algorithm: AlgorithmSpec = Field(..., description="Algorithm and parameters")
    horizon: int = Field(..., ge=0, description="Number of algorithm steps")
    seeds: List[int] = Field(default_factory=lambda: [0], description="Run seeds")
    checkpoint_every: int = Field(1000, gt=0, description="Checkpoint stride")
    metrics: List[MetricName] = Field(
        default_factory=list,
        description="Metrics recorded at checkpoints after the fixed run columns",
    )
    averaging: AveragingConfig = Field(
        default_factory=AveragingConfig, description="Iterate averaging"
    )
    initial_state: Optional[int] = Field(
        None, ge=0, description="Fixed S₀; drawn from ξ when omitted"
    )
    summary_window: int = Field(
        0, ge=0, description="Steps at the end of a run covered by window maxima"
    )
    oracle: OracleConfig = Field(default_factory=OracleConfig, description="Oracle")
    check: CheckConfig = Field(default_factory=CheckConfig, description="Checks")
    sweep: Dict[str, List[Any]] = Field(
        default_factory=dict,
        description="Grid of dotted config paths to value lists (sweep subcommand)",
    )

    @field_validator("seeds")
    @classmethod
    def _seeds_nonempty(cls, seeds: List[int]) -> List[int]:
        if not seeds:
            raise ValueError("at least one seed is required")
        return seeds

    @property
    def recorded_metrics(self) -> List[MetricName]:
        """Fixed run columns followed by the configured extras, without repeats."""
        fixed = [MetricName.DIST_THETA_OPT, MetricName.J_GAP]
        if self.algorithm.variant.has_x:
            fixed += [MetricName.X_TRACKING, MetricName.DIST_SADDLE]
        return fixed + [m for m in dict.fromkeys(self.metrics) if m not in fixed]


LambdaConfig.model_rebuild()
