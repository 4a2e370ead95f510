"""Type definitions shared across gtd-lab."""

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, Dict, List, Optional


class LambdaKind(str, Enum):
    """How λ-parameters are set along a trajectory."""
    STATE = "state"
    HISTORY = "history"
    COMPOSITE = "composite"


class RegularizerKind(str, Enum):
    """Family of the regularizer p(θ)."""
    NONE = "none"
    QUADRATIC = "quadratic"


class StepsizeKind(str, Enum):
    """Family of a stepsize sequence."""
    CONSTANT = "constant"  # a
    POWER = "power"  # a * (n + 1) ** -c
    ONE_OVER_N = "one_over_n"  # a / (n + 1)


class AlgorithmVariant(str, Enum):
    """Every algorithm the lab can run."""
    GTDA_2TS = "gtda_2ts"
    GTDB_2TS = "gtdb_2ts"
    GTDA_1TS = "gtda_1ts"
    GTDA_1TS_ETA = "gtda_1ts_eta"
    GTDA_UNCONSTRAINED = "gtda_unconstrained"
    BIASED_GTDA_2TS = "biased_gtda_2ts"
    BIASED_GTDB_2TS = "biased_gtdb_2ts"
    BIASED_GTDA_1TS = "biased_gtda_1ts"
    MD_GTDA = "md_gtda"
    MD_GTDB = "md_gtdb"
    MD_TD = "md_td"

    @property
    def is_biased(self) -> bool:
        return self in _BIASED

    @property
    def is_mirror(self) -> bool:
        return self in _MIRROR

    @property
    def is_two_time_scale(self) -> bool:
        return self in _TWO_TIME_SCALE

    @property
    def uses_gtdb_direction(self) -> bool:
        return self in (
            AlgorithmVariant.GTDB_2TS,
            AlgorithmVariant.BIASED_GTDB_2TS,
            AlgorithmVariant.MD_GTDB,
        )

    @property
    def has_x(self) -> bool:
        return self is not AlgorithmVariant.MD_TD


_BIASED = frozenset(
    {
        AlgorithmVariant.BIASED_GTDA_2TS,
        AlgorithmVariant.BIASED_GTDB_2TS,
        AlgorithmVariant.BIASED_GTDA_1TS,
    }
)
_MIRROR = frozenset(
    {AlgorithmVariant.MD_GTDA, AlgorithmVariant.MD_GTDB, AlgorithmVariant.MD_TD}
)
_TWO_TIME_SCALE = frozenset(
    {
        AlgorithmVariant.GTDA_2TS,
        AlgorithmVariant.GTDB_2TS,
        AlgorithmVariant.BIASED_GTDA_2TS,
        AlgorithmVariant.BIASED_GTDB_2TS,
        AlgorithmVariant.MD_GTDA,
        AlgorithmVariant.MD_GTDB,
    }
)


class MetricName(str, Enum):
    """Metrics recorded at checkpoints."""
    DIST_THETA_OPT = "dist_theta_opt"
    J_GAP = "J_gap"
    X_TRACKING = "x_tracking"
    DIST_SADDLE = "dist_saddle"
    ITERATE_NORMS = "iterate_norms"
    DIST_TD = "dist_td"


@dataclass(frozen=True)
class Transition:
    """One observed behavior transition (S_n, S_{n+1}) with reward R_{n+1}."""
    s: int
    s_next: int
    reward: float


@dataclass
class ConditionResult:
    """Outcome of one model condition."""
    name: str
    passed: bool
    detail: str = ""


@dataclass
class ValidationReport:
    """Pass/fail per standing condition of a model."""
    results: List[ConditionResult] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return all(r.passed for r in self.results)

    def failures(self) -> List[ConditionResult]:
        return [r for r in self.results if not r.passed]

    def get(self, name: str) -> Optional[ConditionResult]:
        for result in self.results:
            if result.name == name:
                return result
        return None

    def to_dict(self) -> Dict[str, Any]:
        return {
            "ok": self.ok,
            "conditions": [
                {"name": r.name, "passed": r.passed, "detail": r.detail}
                for r in self.results
            ],
        }


@dataclass
class CheckResult:
    """Machine-readable outcome of one verification check."""
    name: str
    passed: bool
    margin: float
    threshold: float
    details: Dict[str, Any] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "passed": self.passed,
            "margin": self.margin,
            "threshold": self.threshold,
            "details": self.details,
        }


@dataclass
class VerificationReport:
    """A list of check results; passes only if every check passes."""
    checks: List[CheckResult] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def extend(self, other: "VerificationReport") -> None:
        self.checks.extend(other.checks)

    def failed(self) -> List[CheckResult]:
        return [c for c in self.checks if not c.passed]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "passed": self.passed,
            "checks": [c.to_dict() for c in self.checks],
        }
