"""gtd-lab: Off-policy gradient TD algorithms checked against an exact matrix oracle."""

from .config import (
    ModelPresets,
    RuntimeSettings,
    Setup,
    build_model,
    build_scheme,
    build_setup,
    create_model,
    ensure_valid,
    load_config,
    parse_config,
    save_config,
    validate_experiment,
    with_overrides,
)
from .exceptions import (
    ConfigError,
    DivergenceError,
    EstimationError,
    GtdLabError,
    InfeasibleTransitionError,
    ModelValidationError,
    NumericalError,
    OracleError,
    SolverConvergenceError,
    TraceError,
)
from .harness import (
    BatchRunner,
    OracleReference,
    RunRecord,
    SweepCell,
    averaged_iterates,
    build_oracle_reference,
    run_experiment,
    run_sweep,
    write_sweep_summary,
)
from .mdp import (
    FeatureMap,
    FiniteMdp,
    importance_ratio,
    stationary_distribution,
    true_value_function,
    validate_model,
)
from .schemas import AlgorithmSpec, ExperimentConfig, LambdaConfig, ModelDocument
from .simulation import TransitionStream, simulate_transition
from .telemetry import MetricRecorder, RunSummary, print_summary
from .traces import (
    CompositeLambda,
    HistoryDependentLambda,
    StateDependentLambda,
    TraceState,
    coupled_trace_decay,
    init_trace,
    step_trace,
)
from .types import (
    AlgorithmVariant,
    CheckResult,
    LambdaKind,
    MetricName,
    Transition,
    ValidationReport,
    VerificationReport,
)
from .verification import run_check, run_checks

__version__ = "0.1.0"

__all__ = [
    # Model
    "FiniteMdp",
    "FeatureMap",
    "validate_model",
    "stationary_distribution",
    "importance_ratio",
    "true_value_function",
    # Simulation and traces
    "TransitionStream",
    "simulate_transition",
    "StateDependentLambda",
    "HistoryDependentLambda",
    "CompositeLambda",
    "TraceState",
    "init_trace",
    "step_trace",
    "coupled_trace_decay",
    # Configuration
    "ModelDocument",
    "LambdaConfig",
    "AlgorithmSpec",
    "ExperimentConfig",
    "ModelPresets",
    "RuntimeSettings",
    "Setup",
    "create_model",
    "build_model",
    "build_scheme",
    "build_setup",
    "load_config",
    "parse_config",
    "save_config",
    "with_overrides",
    "validate_experiment",
    "ensure_valid",
    # Experiments
    "OracleReference",
    "RunRecord",
    "SweepCell",
    "BatchRunner",
    "build_oracle_reference",
    "run_experiment",
    "averaged_iterates",
    "run_sweep",
    "write_sweep_summary",
    # Telemetry
    "MetricRecorder",
    "RunSummary",
    "print_summary",
    # Verification
    "run_check",
    "run_checks",
    # Types
    "AlgorithmVariant",
    "LambdaKind",
    "MetricName",
    "Transition",
    "ValidationReport",
    "CheckResult",
    "VerificationReport",
    # Exceptions
    "GtdLabError",
    "ConfigError",
    "ModelValidationError",
    "InfeasibleTransitionError",
    "TraceError",
    "OracleError",
    "SolverConvergenceError",
    "EstimationError",
    "NumericalError",
    "DivergenceError",
]
