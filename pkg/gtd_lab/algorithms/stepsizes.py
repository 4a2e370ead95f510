"""Stepsize regime checks."""

from typing import List, Optional

from ..schemas import LambdaConfig, StepsizeSchedule
from ..types import AlgorithmVariant, StepsizeKind


def two_time_scale_compatible(
    alpha: StepsizeSchedule, beta: StepsizeSchedule
) -> bool:
    """
    Whether α_n/β_n → 0.

    Holds when α decays strictly faster, or for a constant pair with α < β
    (the constant-stepsize regime, where the ratio stays small instead).
    """
    if alpha.kind is StepsizeKind.CONSTANT and beta.kind is StepsizeKind.CONSTANT:
        return alpha.a < beta.a
    if alpha.a == 0.0:
        return True
    return alpha.rate > beta.rate


def stepsize_problems(
    variant: AlgorithmVariant,
    alpha: StepsizeSchedule,
    beta: Optional[StepsizeSchedule],
    scheme: Optional[LambdaConfig] = None,
) -> List[str]:
    """Human-readable stepsize problems for a variant; empty when compatible."""
    problems: List[str] = []
    if variant.is_two_time_scale:
        if beta is None:
            problems.append(f"{variant.value} requires a beta schedule")
        elif not two_time_scale_compatible(alpha, beta):
            problems.append(
                f"stepsize compatibility: {variant.value} needs alpha_n/beta_n -> 0 "
                f"(alpha rate {alpha.rate:g} must exceed beta rate {beta.rate:g}, "
                "or constant alpha < beta)"
            )
    if variant is AlgorithmVariant.GTDA_UNCONSTRAINED:
        if not alpha.is_square_summable:
            problems.append(
                "unconstrained variant requires square-summable stepsizes "
                f"(rate in (1/2, 1], got {alpha.rate:g})"
            )
        if scheme is not None and not scheme.is_history_only:
            problems.append(
                "unconstrained variant requires a history-dependent λ in every state"
            )
    return problems
