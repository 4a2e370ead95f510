"""Update rules, constraint geometry and stepsize regimes."""

from .geometry import (
    PowerMirrorMap,
    level_project,
    mirror_grad,
    project_ball,
    truncate_trace,
    truncation_factor,
)
from .stepsizes import stepsize_problems, two_time_scale_compatible
from .updates import (
    STEP_FUNCTIONS,
    IterateState,
    StepContext,
    initial_iterate,
    step,
    step_biased,
    step_gtda_1ts,
    step_gtda_1ts_eta,
    step_gtda_2ts,
    step_gtda_unconstrained,
    step_gtdb_2ts,
    step_mdgtda,
    step_mdgtdb,
    step_mdtd,
)

__all__ = [
    "PowerMirrorMap",
    "level_project",
    "mirror_grad",
    "project_ball",
    "truncate_trace",
    "truncation_factor",
    "stepsize_problems",
    "two_time_scale_compatible",
    "STEP_FUNCTIONS",
    "IterateState",
    "StepContext",
    "initial_iterate",
    "step",
    "step_biased",
    "step_gtda_1ts",
    "step_gtda_1ts_eta",
    "step_gtda_2ts",
    "step_gtda_unconstrained",
    "step_gtdb_2ts",
    "step_mdgtda",
    "step_mdgtdb",
    "step_mdtd",
]
