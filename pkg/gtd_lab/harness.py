"""Experiment loop, oracle reference, batch runner and parameter sweeps."""

import csv
import itertools
import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Union

import numpy as np

from .algorithms.updates import IterateState, StepContext, initial_iterate, step
from .config import Setup, build_setup, ensure_valid, with_overrides
from .exceptions import ConfigError, GtdLabError, NumericalError
from .oracle.bellman import bellman_for_scheme
from .oracle.empirical import estimate_projected_problem_empirical
from .oracle.optima import (
    BallOptimum,
    SaddlePoint,
    TdFixedPoint,
    inner_maximizer,
    mdtd_fixed_point,
    saddle_point,
    theta_opt_ball,
    unconstrained_kkt_residual,
    unconstrained_saddle,
)
from .oracle.problem import (
    ProjectedProblem,
    RegularizerSpec,
    build_projected_problem,
    check_unconstrained_regularity,
    eta_scaled_problem,
    objective_Jp,
    solve_x_theta,
)
from .schemas import ExperimentConfig
from .simulation import TransitionStream
from .stats import TailSample
from .telemetry import CheckpointRow, MetricRecorder, RunSummary
from .traces import has_history_cells, init_trace, step_trace
from .types import AlgorithmVariant, MetricName

logger = logging.getLogger(__name__)


@dataclass
class OracleReference:
    """
    Reference quantities the metrics are measured against.

    ``problem`` is in θ/x coordinates; ``x_problem`` is the problem in the
    coordinates the x-iterate is stored in (the η-scaled one for the x̃-form).
    """

    problem: ProjectedProblem
    x_problem: ProjectedProblem
    ball: BallOptimum
    source: str
    saddle: Optional[SaddlePoint] = None
    td: Optional[TdFixedPoint] = None

    @property
    def jp_star(self) -> float:
        return self.ball.value

    def to_dict(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {
            "source": self.source,
            "problem": self.problem.to_dict(),
            "theta_opt": self.ball.to_dict(),
            "Jp_star": self.jp_star,
        }
        if self.saddle is not None:
            out["saddle"] = self.saddle.to_dict()
        if self.td is not None:
            out["td_fixed_point"] = self.td.to_dict()
        return out


def theta_radius(config: ExperimentConfig) -> float:
    """Radius of the θ-constraint set: B_θ, or ∇ψ*(D_θ*) for mirror variants."""
    spec = config.algorithm
    if spec.variant.is_mirror:
        return spec.level_radius ** (spec.q - 1.0)
    return spec.r_theta


def oracle_problem(config: ExperimentConfig, setup: Setup) -> ProjectedProblem:
    """
    (A, b, C) for the experiment: closed form for state-dependent schemes,
    the long-run empirical estimate when any cell is history-dependent.
    """
    spec = config.algorithm
    reg = RegularizerSpec.from_config(spec.regularizer, setup.features.d)
    r_theta = theta_radius(config)
    if has_history_cells(setup.scheme):
        return estimate_projected_problem_empirical(
            setup.mdp,
            setup.features,
            setup.scheme,
            config.oracle.empirical_horizon,
            config.oracle.empirical_seed,
            regularizer=reg,
            r_theta=r_theta,
            r_x=spec.r_x,
        )
    op = bellman_for_scheme(setup.mdp, setup.scheme)
    return build_projected_problem(
        setup.mdp, setup.features, op, regularizer=reg, r_theta=r_theta, r_x=spec.r_x
    )


def build_oracle_reference(
    config: ExperimentConfig, setup: Setup, full: bool = False
) -> OracleReference:
    """
    Solve the oracle problems the configured metrics need.

    Args:
        config: Validated config
        setup: Model, features and scheme of ``config``
        full: Compute the saddle point and TD fixed point regardless of metrics

    Raises:
        ConfigError: If the unconstrained regularity condition fails, or
            dist_td is requested while A is not negative definite
    """
    spec = config.algorithm
    metrics = set(config.recorded_metrics)
    prob = oracle_problem(config, setup)
    source = "empirical" if has_history_cells(setup.scheme) else "exact"
    x_prob = prob
    if spec.variant is AlgorithmVariant.GTDA_1TS_ETA and spec.eta_form == "x_tilde":
        x_prob = eta_scaled_problem(prob, spec.eta)

    saddle = None
    if spec.variant is AlgorithmVariant.GTDA_UNCONSTRAINED:
        regularity = check_unconstrained_regularity(prob)
        if not regularity.passed:
            raise ConfigError(
                f"unconstrained regularity: {regularity.detail}", [regularity.detail]
            )
        saddle = unconstrained_saddle(prob)
        # a ball strictly containing the unconstrained minimizer leaves it unchanged
        radius = 2.0 * float(np.linalg.norm(saddle.theta)) + 1.0
        ball = theta_opt_ball(prob.with_radii(r_theta=radius))
    else:
        ball = theta_opt_ball(prob)
        wants_saddle = MetricName.DIST_SADDLE in metrics
        if spec.variant.has_x and (full or wants_saddle):
            saddle = saddle_point(x_prob)

    td = None
    if spec.variant is AlgorithmVariant.MD_TD or MetricName.DIST_TD in metrics or full:
        td = mdtd_fixed_point(prob)
        if MetricName.DIST_TD in metrics and not td.negative_definite:
            raise ConfigError(
                "dist_td needs a negative definite A "
                f"(largest symmetric eigenvalue {td.max_symmetric_eigenvalue:.3e})"
            )
    logger.info("oracle reference (%s): Jp* = %.6g", source, ball.value)
    return OracleReference(
        problem=prob, x_problem=x_prob, ball=ball, source=source, saddle=saddle, td=td
    )


def compute_metrics(
    state: IterateState,
    config: ExperimentConfig,
    reference: OracleReference,
) -> Dict[str, float]:
    """Values of every configured metric at one iterate."""
    unconstrained = config.algorithm.variant is AlgorithmVariant.GTDA_UNCONSTRAINED
    out: Dict[str, float] = {}
    for metric in config.recorded_metrics:
        if metric is MetricName.DIST_THETA_OPT:
            value = reference.ball.distance(state.theta)
        elif metric is MetricName.J_GAP:
            value = objective_Jp(reference.problem, state.theta) - reference.jp_star
        elif metric is MetricName.X_TRACKING:
            if unconstrained:
                x_bar = solve_x_theta(reference.x_problem, state.theta)
            else:
                x_bar = inner_maximizer(reference.x_problem, state.theta)
            value = float(np.linalg.norm(state.x - x_bar))
        elif metric is MetricName.DIST_SADDLE:
            assert reference.saddle is not None
            value = reference.saddle.distance(state.theta, state.x)
        elif metric is MetricName.ITERATE_NORMS:
            value = state.norm()
        else:
            assert reference.td is not None and reference.td.theta is not None
            value = float(np.linalg.norm(state.theta - reference.td.theta))
        out[metric.value] = float(value)
    return out


class RunningAverage:
    """Exact running mean of the θ-iterates from step n0 on."""

    def __init__(self, n0: int, d: int):
        self.n0 = n0
        self._sum = np.zeros(d)
        self.count = 0

    def update(self, n: int, theta: np.ndarray) -> None:
        """Add θ_n when n ≥ n0."""
        if n >= self.n0:
            self._sum += theta
            self.count += 1

    @property
    def mean(self) -> Optional[np.ndarray]:
        if self.count == 0:
            return None
        return self._sum / self.count


@dataclass
class RunRecord:
    """Outcome of one seeded run."""

    seed: int
    metric_names: List[str]
    rows: List[CheckpointRow] = field(default_factory=list)
    final_average: Optional[np.ndarray] = None
    burn_in: int = 0
    wall_time: float = 0.0
    diverged: bool = False
    divergence_step: Optional[int] = None
    error: Optional[str] = None
    summary: Optional[RunSummary] = None

    @property
    def failed(self) -> bool:
        return self.error is not None and not self.diverged

    def final_metric(self, name: str) -> float:
        if not self.rows:
            return float("nan")
        return self.rows[-1].metrics[name]

    def csv_header(self) -> List[str]:
        d = self.rows[0].theta.shape[0] if self.rows else 0
        return (
            ["n"]
            + [f"theta_{i}" for i in range(d)]
            + [f"x_{i}" for i in range(d)]
            + list(self.metric_names)
        )

    def to_csv(self, path: Union[str, Path]) -> None:
        """Write the checkpoint rows; floats with 17 significant digits, LF endings."""
        with open(path, "w", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(self.csv_header())
            for row in self.rows:
                writer.writerow(
                    [str(row.n)]
                    + ["%.17g" % v for v in row.theta]
                    + ["%.17g" % v for v in row.x]
                    + ["%.17g" % row.metrics[name] for name in self.metric_names]
                )


def averaged_iterates(record: RunRecord, n0: Optional[int] = None) -> List[tuple]:
    """
    Checkpointed running means θ̄_n = (1/(n − n0)) Σ_{i=n0}^{n−1} θ_i as (n, θ̄_n).

    The means are maintained inside the run loop; this only reads them back.

    Raises:
        ConfigError: If ``n0`` differs from the burn-in the run averaged from
    """
    if n0 is not None and n0 != record.burn_in:
        raise ConfigError(
            f"record was averaged from n0={record.burn_in}, not {n0}; rerun with "
            "averaging.burn_in set"
        )
    return [(row.n, row.theta_avg) for row in record.rows if row.theta_avg is not None]


def run_experiment(
    config: ExperimentConfig,
    seed: int,
    *,
    setup: Optional[Setup] = None,
    reference: Optional[OracleReference] = None,
) -> RunRecord:
    """
    Run one seed: sample, step the algorithm on (θ_n, x_n, e_n), advance the trace.

    Checkpoints are taken at n = 0, every ``checkpoint_every`` steps and at the
    horizon. A tripped divergence guard or a non-finite iterate ends the run
    early with ``diverged`` set.

    Args:
        config: Experiment config
        seed: Stream seed
        setup: Prebuilt setup; built (and validated) from ``config`` when None
        reference: Prebuilt oracle reference; solved when None

    Returns:
        RunRecord
    """
    if setup is None:
        setup = build_setup(config)
    if reference is None:
        reference = build_oracle_reference(config, setup)
    spec = config.algorithm
    d = setup.features.d
    names = [m.value for m in config.recorded_metrics]
    recorder = MetricRecorder(names, window=config.summary_window)
    averaging = config.averaging
    average = RunningAverage(averaging.burn_in, d) if averaging.enabled else None
    tail = TailSample()

    ctx = StepContext.build(spec, setup.mdp, setup.features, setup.scheme)
    state = initial_iterate(spec, d)
    stream = TransitionStream(setup.mdp, seed, initial_state=config.initial_state)
    trace = init_trace(setup.features, setup.scheme, stream.state)

    logger.info(
        "run %s seed=%d horizon=%d", spec.variant.value, seed, config.horizon
    )
    start = time.time()
    recorder.record(0, state.theta, state.x, compute_metrics(state, config, reference))
    diverged, divergence_step, error = False, None, None
    for n in range(config.horizon):
        if average is not None:
            average.update(n, state.theta)
        tail.update(float(np.linalg.norm(trace.e)))
        sample = next(stream)
        try:
            state = step(state, sample, trace, ctx)
        except NumericalError as e:
            diverged, divergence_step, error = True, e.step, str(e)
            logger.warning("seed %d diverged at step %d: %s", seed, e.step, e)
            break
        trace, _ = step_trace(
            trace, setup.mdp, setup.features, setup.scheme, sample.s, sample.s_next
        )
        done = n + 1
        if done % config.checkpoint_every == 0 or done == config.horizon:
            recorder.record(
                done,
                state.theta,
                state.x,
                compute_metrics(state, config, reference),
                None if average is None else average.mean,
            )
    wall_time = time.time() - start

    final_average = None if average is None else average.mean
    kkt = None
    if spec.variant is AlgorithmVariant.GTDA_UNCONSTRAINED and not diverged:
        kkt = unconstrained_kkt_residual(reference.problem, state.theta, state.x)
    summary = recorder.summary(
        seed=seed,
        horizon=config.horizon,
        wall_time_s=wall_time,
        diverged=diverged,
        divergence_step=divergence_step,
        error=error,
        averaged_theta=None if final_average is None else final_average.tolist(),
        burn_in=averaging.burn_in,
        trace_stats=tail.summary(),
        final_kkt_residual=kkt,
        oracle={"source": reference.source, "Jp_star": reference.jp_star},
    )
    logger.info("seed %d finished in %.2fs", seed, wall_time)
    return RunRecord(
        seed=seed,
        metric_names=names,
        rows=recorder.rows,
        final_average=final_average,
        burn_in=averaging.burn_in,
        wall_time=wall_time,
        diverged=diverged,
        divergence_step=divergence_step,
        error=error,
        summary=summary,
    )


def _run_seed(
    config: ExperimentConfig, seed: int, setup: Setup, reference: OracleReference
) -> RunRecord:
    try:
        return run_experiment(config, seed, setup=setup, reference=reference)
    except GtdLabError as e:
        logger.warning("seed %d failed: %s", seed, e)
        return RunRecord(
            seed=seed,
            metric_names=[m.value for m in config.recorded_metrics],
            burn_in=config.averaging.burn_in,
            error=f"{type(e).__name__}: {e}",
        )


class BatchRunner:
    """Runs seeds of one config, in worker processes when ``max_workers > 1``."""

    def __init__(self, max_workers: int = 1):
        """
        Args:
            max_workers: Worker processes; 1 runs serially in this process
        """
        self.max_workers = max(1, max_workers)

    def run(
        self,
        config: ExperimentConfig,
        seeds: Optional[Sequence[int]] = None,
    ) -> List[RunRecord]:
        """
        Run every seed and return records in seed-list order.

        A failing seed yields a record with ``error`` set instead of aborting
        the batch.

        Raises:
            ConfigError: If the config itself is invalid
        """
        seeds = list(config.seeds if seeds is None else seeds)
        setup = build_setup(config)
        reference = build_oracle_reference(config, setup)
        if self.max_workers == 1 or len(seeds) == 1:
            return [_run_seed(config, s, setup, reference) for s in seeds]
        with ProcessPoolExecutor(max_workers=self.max_workers) as pool:
            futures = [
                pool.submit(_run_seed, config, s, setup, reference) for s in seeds
            ]
            return [f.result() for f in futures]


@dataclass
class SweepCell:
    """One grid point of a sweep: its overrides and runs, or why it was skipped."""

    overrides: Dict[str, Any]
    records: List[RunRecord] = field(default_factory=list)
    skipped: Optional[str] = None

    def summary_row(self, metric_names: List[str]) -> Dict[str, Any]:
        """Overrides plus median final metrics and divergence count."""
        row: Dict[str, Any] = dict(self.overrides)
        row["status"] = "skipped" if self.skipped else "ok"
        row["reason"] = self.skipped or ""
        completed = [r for r in self.records if r.rows and not r.failed]
        row["runs"] = len(self.records)
        row["diverged"] = sum(r.diverged for r in self.records)
        for name in metric_names:
            finals = [
                r.final_metric(name)
                for r in completed
                if not r.diverged and name in r.metric_names
            ]
            row[f"median_final_{name}"] = float(np.median(finals)) if finals else None
        return row


def sweep_grid(sweep: Dict[str, List[Any]]) -> List[Dict[str, Any]]:
    """Cartesian product of a sweep declaration, in declaration order."""
    if not sweep:
        return [{}]
    keys = list(sweep)
    return [dict(zip(keys, values)) for values in itertools.product(*sweep.values())]


def run_sweep(
    config: ExperimentConfig,
    runner: Optional[BatchRunner] = None,
    on_cell: Optional[Callable[[SweepCell], None]] = None,
) -> List[SweepCell]:
    """
    Run every cell of ``config.sweep``.

    Cells whose overridden config is invalid are skipped with the reason;
    a diverging run is recorded and the sweep continues.

    Args:
        config: Base config with a sweep declaration
        runner: Batch runner; serial by default
        on_cell: Called with each finished cell
    """
    runner = runner or BatchRunner()
    cells = []
    for overrides in sweep_grid(config.sweep):
        cell = SweepCell(overrides=overrides)
        try:
            cell_config = with_overrides(config, overrides)
            ensure_valid(cell_config)
            cell.records = runner.run(cell_config)
        except ConfigError as e:
            reason = "; ".join(e.problems) if e.problems else str(e)
            logger.info("sweep cell %s skipped: %s", overrides, reason)
            cell.skipped = reason
        except GtdLabError as e:
            logger.warning("sweep cell %s failed: %s", overrides, e)
            cell.skipped = f"{type(e).__name__}: {e}"
        cells.append(cell)
        if on_cell is not None:
            on_cell(cell)
    return cells


def write_sweep_summary(
    cells: List[SweepCell], metric_names: List[str], path: Union[str, Path]
) -> None:
    """One CSV row per sweep cell."""
    rows = [cell.summary_row(metric_names) for cell in cells]
    columns: List[str] = []
    for row in rows:
        for key in row:
            if key not in columns:
                columns.append(key)
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=columns, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow(
                {
                    k: ("%.17g" % v if isinstance(v, float) else v)
                    for k, v in row.items()
                }
            )
