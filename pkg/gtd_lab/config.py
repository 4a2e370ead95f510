"""Configuration loading, built-in models and experiment setup."""

import json
import logging
import os
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
from pydantic import BaseModel, Field, ValidationError

from .algorithms.stepsizes import stepsize_problems
from .exceptions import ConfigError, ModelValidationError
from .mdp import FeatureMap, FiniteMdp, validate_model
from .oracle.problem import RegularizerSpec
from .schemas import ExperimentConfig, LambdaConfig, ModelDocument
from .traces import (
    CompositeLambda,
    HistoryDependentLambda,
    LambdaScheme,
    StateDependentLambda,
    check_scheme,
)
from .types import AlgorithmVariant, LambdaKind, MetricName

logger = logging.getLogger(__name__)


def _format_validation_error(error: ValidationError) -> List[str]:
    problems = []
    for item in error.errors():
        loc = ".".join(str(part) for part in item["loc"]) or "<root>"
        problems.append(f"{loc}: {item['msg']}")
    return problems


def parse_config(data: Dict[str, Any]) -> ExperimentConfig:
    """
    Validate a config tree.

    Raises:
        ConfigError: Listing every offending key path
    """
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        problems = _format_validation_error(e)
        raise ConfigError(
            "invalid experiment config:\n  " + "\n  ".join(problems), problems
        ) from e


def load_config(path: Union[str, Path]) -> ExperimentConfig:
    """
    Load an experiment document from a JSON file.

    Args:
        path: File to read

    Returns:
        Validated ExperimentConfig

    Raises:
        ConfigError: If the file is unreadable, not JSON, or fails validation
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(
            f"{path}: line {e.lineno} column {e.colno}: {e.msg}",
            [f"line {e.lineno}: {e.msg}"],
        ) from e
    return parse_config(data)


def save_config(config: ExperimentConfig, path: Union[str, Path]) -> None:
    """Write a config as JSON, using the document key names."""
    with open(path, "w") as f:
        json.dump(config.model_dump(mode="json", by_alias=True), f, indent=2)


def with_overrides(config: ExperimentConfig, overrides: Dict[str, Any]) -> ExperimentConfig:
    """
    Copy of ``config`` with dotted-path overrides applied and re-validated.

    Example: ``{"algorithm.K": 4, "algorithm.alpha.c": 0.8}``.
    """
    data = config.model_dump(mode="json", by_alias=True)
    for dotted, value in overrides.items():
        node = data
        parts = dotted.split(".")
        for part in parts[:-1]:
            if not isinstance(node.get(part), dict):
                raise ConfigError(f"override path {dotted!r} does not name a section")
            node = node[part]
        node[parts[-1]] = value
    return parse_config(data)


class ModelPresets:
    """Built-in models."""

    @staticmethod
    def mdp_a() -> ModelDocument:
        """
        Two states, uniform on-policy chain, γ = 0.9, unit rewards, one constant feature.

        A = −0.1, b = 1, C = 1 at λ ≡ 0, so θ_opt = 10 and J(0) = 0.5.
        """
        return ModelDocument(
            n_states=2,
            target_P=[[0.5, 0.5], [0.5, 0.5]],
            behavior_P=[[0.5, 0.5], [0.5, 0.5]],
            discount=0.9,
            reward_mean=1.0,
            reward_noise_scale=0.0,
            features=[[1.0], [1.0]],
        )

    @staticmethod
    def mdp_b() -> ModelDocument:
        """
        Two states, sticky target chain, uniform behavior, γ = 0.8, r(s,s') = s' + 1.
        """
        return ModelDocument(
            n_states=2,
            target_P=[[0.9, 0.1], [0.1, 0.9]],
            behavior_P=[[0.5, 0.5], [0.5, 0.5]],
            discount=0.8,
            reward_mean=[[1.0, 2.0], [1.0, 2.0]],
            reward_noise_scale=0.0,
            features=[[1.0, 0.0], [1.0, 1.0]],
        )


PRESETS = {
    "mdp_a": ModelPresets.mdp_a,
    "mdp_b": ModelPresets.mdp_b,
}


def create_model(preset: Optional[str] = None, **kwargs) -> ModelDocument:
    """
    Create a model document, optionally from a preset.

    Args:
        preset: Preset name ("mdp_a", "mdp_b")
        **kwargs: Field overrides

    Returns:
        ModelDocument
    """
    if preset:
        if preset not in PRESETS:
            raise ConfigError(f"unknown model preset {preset!r}; known: {sorted(PRESETS)}")
        base = PRESETS[preset]().model_dump()
        base.update(kwargs)
        kwargs = base
    try:
        return ModelDocument(**kwargs)
    except ValidationError as e:
        problems = _format_validation_error(e)
        raise ConfigError("invalid model: " + "; ".join(problems), problems) from e


def resolve_model(config: ExperimentConfig) -> ModelDocument:
    """Model document of a config, with the feature override applied."""
    doc = create_model(config.model) if isinstance(config.model, str) else config.model
    if config.features is not None:
        doc = create_model(**{**doc.model_dump(), "features": config.features})
    return doc


def _square(value, n: int) -> np.ndarray:
    if isinstance(value, list):
        return np.array(value, dtype=float)
    return np.full((n, n), float(value))


def build_model(doc: ModelDocument) -> Tuple[FiniteMdp, FeatureMap]:
    """FiniteMdp and FeatureMap of a model document, without validating conditions."""
    n = doc.n_states
    discount = (
        np.array(doc.discount, dtype=float)
        if isinstance(doc.discount, list)
        else np.full(n, float(doc.discount))
    )
    mdp = FiniteMdp(
        target_P=np.array(doc.target_P, dtype=float),
        behavior_P=np.array(doc.behavior_P, dtype=float),
        discount=discount,
        reward_mean=_square(doc.reward_mean, n),
        reward_noise_scale=_square(doc.reward_noise_scale, n),
    )
    features = FeatureMap(np.array(doc.features, dtype=float))
    features.check_compatible(mdp)
    return mdp, features


def _state_values(values, n_states: int) -> np.ndarray:
    if isinstance(values, list):
        return np.array(values, dtype=float)
    return np.full(n_states, float(values))


def build_scheme(config: LambdaConfig, n_states: int) -> LambdaScheme:
    """λ-scheme object of a scheme document."""
    if config.kind is LambdaKind.STATE:
        scheme: LambdaScheme = StateDependentLambda(_state_values(config.values, n_states))
    elif config.kind is LambdaKind.HISTORY:
        assert config.bound is not None
        scheme = HistoryDependentLambda(config.bound)
    else:
        assert config.partition is not None and config.cells is not None
        cells = tuple(build_scheme(cell, n_states) for cell in config.cells)
        scheme = CompositeLambda(np.array(config.partition), cells)  # type: ignore[arg-type]
    check_scheme(scheme, n_states)
    return scheme


@dataclass
class Setup:
    """Model, features and scheme of one experiment."""

    mdp: FiniteMdp
    features: FeatureMap
    scheme: LambdaScheme


def build_setup(config: ExperimentConfig, validate: bool = True) -> Setup:
    """
    Build model, features and scheme.

    Raises:
        ConfigError: If the config fails ``validate_experiment`` (when validating)
    """
    if validate:
        ensure_valid(config)
    mdp, features = build_model(resolve_model(config))
    scheme = build_scheme(config.scheme, mdp.n_states)
    return Setup(mdp, features, scheme)


class RuntimeSettings(BaseModel):
    """I/O settings; never numeric parameters."""

    workers: int = Field(1, ge=1, description="Worker processes for seeds and sweep cells")
    out_dir: str = Field("out", description="Output directory")
    log_level: str = Field("WARNING", description="Logging level name")

    @classmethod
    def from_env(cls) -> "RuntimeSettings":
        """
        Create settings from environment variables.

        Returns:
            RuntimeSettings instance
        """
        kwargs: Dict[str, Any] = {}
        env_mapping = {
            "GTD_LAB_WORKERS": ("workers", int),
            "GTD_LAB_OUT": ("out_dir", str),
            "GTD_LAB_LOG_LEVEL": ("log_level", lambda x: x.upper()),
        }
        for env_var, (param, converter) in env_mapping.items():
            value = os.environ.get(env_var)
            if value is not None:
                try:
                    kwargs[param] = converter(value)
                except (ValueError, TypeError):
                    logger.warning("ignoring invalid %s=%r", env_var, value)
        return cls(**kwargs)


def _metric_problems(config: ExperimentConfig) -> List[str]:
    variant = config.algorithm.variant
    problems = []
    for metric in config.metrics:
        if metric is MetricName.DIST_TD and variant is not AlgorithmVariant.MD_TD:
            problems.append("metric dist_td applies only to md_td")
        if metric in (MetricName.X_TRACKING, MetricName.DIST_SADDLE) and not variant.has_x:
            problems.append(f"metric {metric.value} needs an x-iterate; md_td has none")
    return problems


def validate_experiment(config: ExperimentConfig) -> List[str]:
    """
    Problems that make an experiment unrunnable, as readable strings.

    Covers the model's standing conditions, feature and scheme dimensions,
    stepsize compatibility, averaging and metric settings.
    """
    problems: List[str] = []
    try:
        doc = resolve_model(config)
        mdp, features = build_model(doc)
    except (ConfigError, ModelValidationError) as e:
        return [str(e)]

    report = validate_model(mdp)
    problems.extend(f"model {r.name}: {r.detail}" for r in report.failures())

    try:
        build_scheme(config.scheme, mdp.n_states)
    except ConfigError as e:
        problems.append(f"lambda: {e}")

    spec = config.algorithm
    problems.extend(
        stepsize_problems(spec.variant, spec.alpha, spec.beta, config.scheme)
    )
    if spec.variant is AlgorithmVariant.GTDA_UNCONSTRAINED:
        reg = RegularizerSpec.from_config(spec.regularizer, features.d)
        if not reg.active:
            problems.append(
                "unconstrained variant requires a quadratic regularizer with weight > 0"
            )
    if spec.eta_form == "x_tilde" and spec.variant is not AlgorithmVariant.GTDA_1TS_ETA:
        problems.append("eta_form 'x_tilde' applies only to gtda_1ts_eta")
    for name in ("theta0", "x0", "theta_star0"):
        value = getattr(spec, name)
        if value is not None and len(value) != features.d:
            problems.append(f"algorithm.{name} has {len(value)} entries, d={features.d}")
    if spec.regularizer.center is not None and len(spec.regularizer.center) != features.d:
        problems.append("algorithm.regularizer.center does not match the feature dimension")

    if config.averaging.enabled and config.horizon > 0:
        if config.averaging.burn_in >= config.horizon:
            problems.append(
                f"averaging.burn_in {config.averaging.burn_in} must be below "
                f"horizon {config.horizon}"
            )
    if config.initial_state is not None and config.initial_state >= mdp.n_states:
        problems.append(f"initial_state {config.initial_state} out of range")
    problems.extend(_metric_problems(config))

    if config.horizon % config.checkpoint_every:
        warnings.warn(
            f"checkpoint_every {config.checkpoint_every} does not divide horizon "
            f"{config.horizon}; the final step is recorded as an extra checkpoint",
            UserWarning,
        )
    return problems


def ensure_valid(config: ExperimentConfig) -> None:
    """
    Raises:
        ConfigError: Carrying the list from ``validate_experiment``
    """
    problems = validate_experiment(config)
    if problems:
        raise ConfigError("invalid experiment:\n  " + "\n  ".join(problems), problems)
