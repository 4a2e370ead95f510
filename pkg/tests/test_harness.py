"""Tests for the experiment loop, batch runner and sweeps."""

import csv
import math
import os

import numpy as np
import pytest

from gtd_lab.config import build_setup, with_overrides
from gtd_lab.exceptions import ConfigError
from gtd_lab.harness import (
    BatchRunner,
    RunningAverage,
    averaged_iterates,
    build_oracle_reference,
    oracle_problem,
    run_experiment,
    run_sweep,
    sweep_grid,
    theta_radius,
    write_sweep_summary,
)
from gtd_lab.oracle.empirical import trace_chunks
from gtd_lab.oracle.problem import solve_x_theta, sufficient_x_radius
from gtd_lab.stats import TailSample
from gtd_lab.traces import StateDependentLambda

UNCONSTRAINED = {
    "lambda": {"kind": "history", "bound": 2.0},
    "algorithm": {
        "variant": "gtda_unconstrained",
        "beta": None,
        "alpha": {"kind": "power", "a": 0.5, "c": 0.8},
        "regularizer": {"kind": "quadratic", "weight": 0.5},
    },
    "oracle": {"empirical_horizon": 20_000},
}


def test_checkpoints_and_metrics(base_config):
    """Test checkpoints at 0, every stride and the horizon with nonnegative metrics."""
    record = run_experiment(base_config, 0)
    assert [row.n for row in record.rows] == [0, 50, 100, 150, 200]
    assert not record.failed and not record.diverged
    for row in record.rows:
        assert row.metrics["dist_theta_opt"] >= 0.0
        assert row.metrics["J_gap"] >= -1e-12
    assert record.summary.steps_completed == 200
    assert record.summary.oracle["source"] == "exact"


def test_extra_final_checkpoint(config_factory):
    """Test that a stride not dividing the horizon still records the last step."""
    with pytest.warns(UserWarning, match="does not divide"):
        record = run_experiment(config_factory(checkpoint_every=70), 0)
    assert [row.n for row in record.rows] == [0, 70, 140, 200]


def test_runs_are_seed_deterministic(base_config):
    """Test identical rows for one seed and different rows across seeds."""
    first = run_experiment(base_config, 5)
    second = run_experiment(base_config, 5)
    other = run_experiment(base_config, 6)
    for a, b in zip(first.rows, second.rows):
        np.testing.assert_array_equal(a.theta, b.theta)
        np.testing.assert_array_equal(a.x, b.x)
    assert not np.array_equal(first.rows[-1].theta, other.rows[-1].theta)


def test_csv_format(tmp_path, base_config):
    """Test the header, one line per checkpoint and full-precision floats."""
    record = run_experiment(base_config, 0)
    path = tmp_path / "run.csv"
    record.to_csv(path)
    raw = path.read_bytes()
    assert b"\r\n" not in raw
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    assert rows[0] == [
        "n",
        "theta_0",
        "theta_1",
        "x_0",
        "x_1",
        "dist_theta_opt",
        "J_gap",
        "x_tracking",
        "dist_saddle",
    ]
    assert len(rows) == 1 + len(record.rows)
    last = record.rows[-1]
    assert float(rows[-1][1]) == last.theta[0]
    assert float(rows[-1][-1]) == last.metrics["dist_saddle"]


def test_extra_metrics_follow_fixed_columns(config_factory):
    """Test that configured metrics come after the fixed columns, without repeats."""
    config = config_factory(metrics=["iterate_norms", "J_gap"])
    assert [m.value for m in config.recorded_metrics] == [
        "dist_theta_opt",
        "J_gap",
        "x_tracking",
        "dist_saddle",
        "iterate_norms",
    ]
    mdtd = config_factory(algorithm={"variant": "md_td", "beta": None})
    assert [m.value for m in mdtd.recorded_metrics] == ["dist_theta_opt", "J_gap"]


def test_batch_runner_keeps_seed_order(config_factory):
    """Test that records come back in seed-list order."""
    records = BatchRunner().run(config_factory(seeds=[3, 1, 2]))
    assert [r.seed for r in records] == [3, 1, 2]


def test_running_average():
    """Test that θ_n enters the mean only from n0 on."""
    avg = RunningAverage(2, 1)
    for n in range(5):
        avg.update(n, np.array([float(n)]))
    assert avg.count == 3
    np.testing.assert_allclose(avg.mean, [3.0])
    assert RunningAverage(0, 1).mean is None


def test_averaged_iterates(config_factory):
    """Test that averages start after the burn-in and n0 must match it."""
    record = run_experiment(config_factory(averaging={"burn_in": 60}), 0)
    averaged = averaged_iterates(record)
    assert [n for n, _ in averaged] == [100, 150, 200]
    np.testing.assert_array_equal(averaged[-1][1], record.final_average)
    with pytest.raises(ConfigError, match="n0=60"):
        averaged_iterates(record, n0=0)


def test_x_metrics(config_factory):
    """Test x-tracking and saddle distance against a saddle reference."""
    config = config_factory(metrics=["x_tracking", "dist_saddle", "iterate_norms"])
    record = run_experiment(config, 0)
    final = record.rows[-1]
    norm = np.hypot(np.linalg.norm(final.theta), np.linalg.norm(final.x))
    assert final.metrics["iterate_norms"] == pytest.approx(norm)
    assert all(np.isfinite(v) for v in final.metrics.values())


def test_mdtd_reaches_td_point(config_factory):
    """Test dist_td → 0 for MD-TD on the deterministic MDP-A."""
    config = config_factory(
        model="mdp_a",
        **{"lambda": {"kind": "state", "values": 0.0}},
        algorithm={
            "variant": "md_td",
            "beta": None,
            "alpha": {"kind": "constant", "a": 0.5},
            "r_theta": 20.0,
        },
        metrics=["dist_td"],
        horizon=400,
    )
    record = run_experiment(config, 0)
    assert record.final_metric("dist_td") < 1e-6
    assert theta_radius(config) == pytest.approx(20.0)


def test_unconstrained_run_reports_kkt_residual(config_factory):
    """Test the empirical oracle and the final KKT residual of the unconstrained variant."""
    record = run_experiment(config_factory(**UNCONSTRAINED), 0)
    assert record.summary.oracle["source"] == "empirical"
    assert record.summary.final_kkt_residual is not None
    assert np.isfinite(record.summary.final_kkt_residual)


def test_divergence_is_recorded(config_factory):
    """Test that a tripped guard ends the run with a record, not an exception."""
    overrides = dict(UNCONSTRAINED)
    overrides["algorithm"] = {**UNCONSTRAINED["algorithm"], "divergence_guard": 1e-3}
    record = run_experiment(config_factory(**overrides), 0)
    assert record.diverged
    assert record.divergence_step == 1
    assert [row.n for row in record.rows] == [0]
    assert record.summary.final_kkt_residual is None


def test_unconstrained_reference_needs_regularity(config_factory):
    """Test that the reference refuses an unregularized unconstrained problem."""
    overrides = dict(UNCONSTRAINED)
    overrides["algorithm"] = {
        **UNCONSTRAINED["algorithm"],
        "regularizer": {"kind": "quadratic", "weight": 0.0},
    }
    config = config_factory(**overrides)
    with pytest.raises(ConfigError, match="unconstrained regularity"):
        build_oracle_reference(config, build_setup(config, validate=False))


def test_sweep_grid_order():
    """Test the Cartesian product in declaration order."""
    grid = sweep_grid({"a": [1, 2], "b": ["x", "y"]})
    assert grid == [
        {"a": 1, "b": "x"},
        {"a": 1, "b": "y"},
        {"a": 2, "b": "x"},
        {"a": 2, "b": "y"},
    ]
    assert sweep_grid({}) == [{}]


def test_sweep_skips_invalid_cells(tmp_path, config_factory):
    """Test that an incompatible stepsize cell is skipped and the rest run."""
    config = config_factory(sweep={"algorithm.alpha.c": [0.5, 0.9]}, seeds=[0])
    seen = []
    cells = run_sweep(config, on_cell=seen.append)
    assert len(seen) == 2
    assert "stepsize compatibility" in cells[0].skipped
    assert cells[1].skipped is None and len(cells[1].records) == 1
    path = tmp_path / "sweep.csv"
    write_sweep_summary(cells, ["J_gap"], path)
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    assert [r["status"] for r in rows] == ["skipped", "ok"]
    assert rows[0]["median_final_J_gap"] == ""
    assert float(rows[1]["median_final_J_gap"]) >= 0.0


ACCEPTANCE_RUN = {
    "horizon": 200_000,
    "checkpoint_every": 20_000,
    "seeds": list(range(20)),
}


def _runner():
    return BatchRunner(max_workers=os.cpu_count() or 1)


def _with_sufficient_x_ball(config):
    """Copy of ``config`` whose B_x contains x_θ for every θ in B_θ."""
    prob = oracle_problem(config, build_setup(config, validate=False))
    return with_overrides(
        config, {"algorithm.r_x": float(math.ceil(sufficient_x_radius(prob)))}
    )


def _median_curve(records, name):
    assert not any(r.failed or r.diverged for r in records)
    curves = np.array([[row.metrics[name] for row in r.rows] for r in records])
    return np.median(curves, axis=0)


@pytest.mark.slow
@pytest.mark.parametrize("variant", ["gtda_2ts", "gtdb_2ts"])
def test_two_time_scale_converges_to_ball_optimum(config_factory, variant):
    """Test the median distance to Θ_opt on MDP-B over 20 seeds and 2·10⁵ steps."""
    config = _with_sufficient_x_ball(
        config_factory(
            **{"lambda": {"kind": "state", "values": [0.5, 0.5]}},
            algorithm={"variant": variant, "r_theta": 15.0},
            **ACCEPTANCE_RUN,
        )
    )
    prob = oracle_problem(config, build_setup(config))
    assert config.algorithm.r_theta >= 2.0 * np.linalg.norm(
        np.linalg.solve(prob.A, -prob.b)
    )
    median = _median_curve(_runner().run(config), "dist_theta_opt")
    assert median[-1] < 0.1 * median[0]
    assert np.all(np.diff(median[-5:]) <= 1e-3 * median[0])


@pytest.mark.slow
def test_single_time_scale_converges_to_saddle(config_factory):
    """Test the median distance to (θ*, x̄) for GTDa with α = β = 1/n^0.7."""
    config = _with_sufficient_x_ball(
        config_factory(
            **{"lambda": {"kind": "state", "values": [0.5, 0.5]}},
            algorithm={
                "variant": "gtda_1ts",
                "beta": None,
                "alpha": {"kind": "power", "a": 1.0, "c": 0.7},
                "r_theta": 15.0,
            },
            **ACCEPTANCE_RUN,
        )
    )
    median = _median_curve(_runner().run(config), "dist_saddle")
    assert median[-1] < 0.1 * median[0]


@pytest.mark.slow
def test_single_time_scale_follows_constrained_saddle(config_factory):
    """Test that with r_x below ‖x_opt‖ the iterates settle at the constrained saddle."""
    base = config_factory(
        **{"lambda": {"kind": "state", "values": [0.5, 0.5]}},
        algorithm={
            "variant": "gtda_1ts",
            "beta": None,
            "alpha": {"kind": "power", "a": 1.0, "c": 0.7},
            "r_theta": 3.0,
            "r_x": 1e3,
        },
        **ACCEPTANCE_RUN,
    )
    reference = build_oracle_reference(base, build_setup(base, validate=False))
    x_opt = solve_x_theta(reference.problem, reference.ball.theta)
    config = with_overrides(
        base, {"algorithm.r_x": 0.5 * float(np.linalg.norm(x_opt))}
    )
    shrunk = build_oracle_reference(config, build_setup(config))
    assert shrunk.saddle is not None and not shrunk.saddle.x_interior
    median = _median_curve(_runner().run(config), "dist_saddle")
    assert median[-1] < 0.1 * median[0]


@pytest.mark.slow
@pytest.mark.parametrize("model", ["mdp_a", "mdp_b"])
def test_unconstrained_kkt_residual_at_scale(config_factory, model):
    """Test no guard trips and a median final KKT residual below 0.05."""
    config = config_factory(
        model=model,
        **{"lambda": {"kind": "history", "bound": 2.0}},
        algorithm={
            "variant": "gtda_unconstrained",
            "beta": None,
            "alpha": {"kind": "power", "a": 1.0, "c": 0.7},
            "regularizer": {"kind": "quadratic", "weight": 0.1},
        },
        oracle={"empirical_horizon": 1_000_000},
        **ACCEPTANCE_RUN,
    )
    records = _runner().run(config)
    assert not any(r.diverged or r.failed for r in records)
    residuals = [r.summary.final_kkt_residual for r in records]
    assert np.median(residuals) < 0.05


@pytest.mark.slow
def test_biased_distance_non_increasing_in_K(config_factory, mdp_b):
    """Test that the median final distance to Θ_opt does not grow with K."""
    values = [0.9, 0.9]
    mdp, features = mdp_b
    tail = TailSample()
    for _ in trace_chunks(
        mdp, features, StateDependentLambda(np.array(values)), 100_000, 0, tail=tail
    ):
        pass
    assert tail.summary()["max"] > 16.0
    base = _with_sufficient_x_ball(
        config_factory(
            **{"lambda": {"kind": "state", "values": values}},
            algorithm={"variant": "biased_gtda_2ts", "K": 1.0, "r_theta": 15.0},
            horizon=100_000,
            checkpoint_every=20_000,
            seeds=list(range(10)),
        )
    )
    runner = _runner()
    medians, stderrs = [], []
    for K in (1.0, 4.0, 16.0):
        records = runner.run(with_overrides(base, {"algorithm.K": K}))
        assert not any(r.failed or r.diverged for r in records)
        finals = np.array([r.final_metric("dist_theta_opt") for r in records])
        medians.append(float(np.median(finals)))
        stderrs.append(1.2533 * finals.std(ddof=1) / np.sqrt(len(finals)))
    for i in range(2):
        slack = 2.0 * np.hypot(stderrs[i], stderrs[i + 1])
        assert medians[i + 1] <= medians[i] + slack


@pytest.mark.slow
def test_averaging_reduces_seed_variance(config_factory):
    """Test that averaged final iterates vary less across seeds than raw ones."""
    config = config_factory(
        algorithm={
            "variant": "gtda_1ts",
            "beta": None,
            "alpha": {"kind": "constant", "a": 0.01},
        },
        averaging={"enabled": True, "burn_in": 10_000},
        horizon=50_000,
        checkpoint_every=10_000,
        seeds=list(range(20)),
    )
    records = _runner().run(config)
    assert not any(r.failed or r.diverged for r in records)
    raw = np.array([r.rows[-1].theta for r in records])
    averaged = np.array([r.final_average for r in records])
    assert averaged.var(axis=0).sum() <= raw.var(axis=0).sum()
