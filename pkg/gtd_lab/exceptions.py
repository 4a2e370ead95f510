"""Custom exceptions for gtd-lab."""

from typing import Any, Dict, Optional


class GtdLabError(Exception):
    """Base exception for gtd-lab."""
    pass


class ConfigError(GtdLabError):
    """Configuration document could not be parsed or is inconsistent."""

    def __init__(self, message: str, problems: Optional[list[str]] = None):
        super().__init__(message)
        self.problems = problems or []


class ModelValidationError(GtdLabError):
    """Finite MDP or feature map violates a standing condition."""

    def __init__(self, message: str, report: Optional[Any] = None):
        super().__init__(message)
        self.report = report


class InfeasibleTransitionError(ModelValidationError):
    """Transition with zero probability under the behavior chain."""
    pass


class TraceError(GtdLabError):
    """Trace step inconsistent with the trace's memory state."""
    pass


class OracleError(GtdLabError):
    """Matrix-analytic computation found an inconsistent system."""
    pass


class SolverConvergenceError(OracleError):
    """Iterative solver hit its iteration cap."""

    def __init__(self, message: str, residuals: Optional[Dict[str, float]] = None):
        super().__init__(message)
        self.residuals = residuals or {}


class EstimationError(GtdLabError):
    """Simulation-based estimate is not usable."""
    pass


class NumericalError(GtdLabError):
    """Iterate became non-finite."""

    def __init__(self, message: str, step: int):
        super().__init__(message)
        self.step = step


class DivergenceError(NumericalError):
    """Iterate norm exceeded the divergence guard."""

    def __init__(self, message: str, step: int, norm: float):
        super().__init__(message, step)
        self.norm = norm
