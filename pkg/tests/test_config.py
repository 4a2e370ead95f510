"""Tests for config loading, presets and experiment validation."""

import json

import numpy as np
import pytest

from gtd_lab.config import (
    RuntimeSettings,
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
from gtd_lab.exceptions import ConfigError
from gtd_lab.schemas import LambdaConfig
from gtd_lab.traces import CompositeLambda, HistoryDependentLambda


def test_load_round_trip(tmp_path, base_config):
    """Test that a saved config loads back with the 'lambda' key intact."""
    path = tmp_path / "exp.json"
    save_config(base_config, path)
    assert "lambda" in json.loads(path.read_text())
    loaded = load_config(path)
    assert loaded == base_config


def test_load_reports_json_line(tmp_path):
    """Test that malformed JSON names the offending line."""
    path = tmp_path / "bad.json"
    path.write_text('{\n  "model": "mdp_a",\n  "horizon": ,\n}')
    with pytest.raises(ConfigError, match="line 3") as info:
        load_config(path)
    assert info.value.problems[0].startswith("line 3")


def test_load_missing_file(tmp_path):
    """Test that an unreadable path is a ConfigError."""
    with pytest.raises(ConfigError, match="cannot read"):
        load_config(tmp_path / "missing.json")


def test_parse_lists_key_paths():
    """Test that schema failures name every offending key path."""
    with pytest.raises(ConfigError) as info:
        parse_config(
            {
                "model": "mdp_b",
                "lambda": {"kind": "state", "values": [0.5, 1.5]},
                "algorithm": {"variant": "biased_gtda_2ts", "beta": {}},
                "horizon": -1,
            }
        )
    joined = " ".join(info.value.problems)
    assert "horizon" in joined
    assert "lambda" in joined
    assert "requires a positive K" in joined


def test_with_overrides(base_config):
    """Test dotted overrides and rejection of paths through scalars."""
    changed = with_overrides(base_config, {"algorithm.alpha.c": 0.9, "horizon": 100})
    assert changed.algorithm.alpha.c == 0.9
    assert changed.horizon == 100
    assert base_config.algorithm.alpha.c == 0.8
    with pytest.raises(ConfigError, match="does not name a section"):
        with_overrides(base_config, {"horizon.value": 1})


def test_presets_and_overrides():
    """Test both built-in models and a keyword override."""
    mdp, features = build_model(create_model("mdp_a"))
    assert features.d == 1
    np.testing.assert_allclose(mdp.discount, 0.9)
    mdp, _ = build_model(create_model("mdp_b", discount=0.5))
    np.testing.assert_allclose(mdp.discount, 0.5)
    with pytest.raises(ConfigError, match="unknown model preset"):
        create_model("mdp_c")
    with pytest.raises(ConfigError, match="features must have 2 rows"):
        create_model("mdp_b", features=[[1.0, 0.0]])


def test_build_composite_scheme():
    """Test that a composite scheme document builds a CompositeLambda."""
    doc = LambdaConfig.model_validate(
        {
            "kind": "composite",
            "partition": [0, 1],
            "cells": [{"kind": "state", "values": 0.3}, {"kind": "history", "bound": 1.5}],
        }
    )
    scheme = build_scheme(doc, 2)
    assert isinstance(scheme, CompositeLambda)
    assert isinstance(scheme.cells[1], HistoryDependentLambda)
    np.testing.assert_allclose(scheme.cells[0].values, [0.3, 0.3])


def test_valid_experiment_has_no_problems(base_config):
    """Test the shared MDP-B experiment validates cleanly."""
    assert validate_experiment(base_config) == []
    setup = build_setup(base_config)
    assert setup.mdp.n_states == 2


def test_incompatible_stepsizes(config_factory):
    """Test that c_α ≤ c_β is reported as a compatibility problem."""
    config = config_factory(algorithm={"alpha": {"kind": "power", "a": 1.0, "c": 0.5}})
    problems = validate_experiment(config)
    assert any("stepsize compatibility" in p for p in problems)
    with pytest.raises(ConfigError, match="stepsize compatibility"):
        ensure_valid(config)


def test_burn_in_and_initial_state(config_factory):
    """Test burn_in ≥ horizon and an out-of-range initial state."""
    config = config_factory(averaging={"burn_in": 200}, initial_state=5)
    problems = validate_experiment(config)
    assert any("burn_in" in p for p in problems)
    assert any("initial_state" in p for p in problems)


def test_metric_and_eta_form_problems(config_factory):
    """Test metrics that do not apply and an x̃-form outside the η-variant."""
    config = config_factory(
        metrics=["dist_td"], algorithm={"eta_form": "x_tilde"}
    )
    problems = validate_experiment(config)
    assert any("dist_td applies only" in p for p in problems)
    assert any("eta_form" in p for p in problems)
    mdtd = config_factory(
        metrics=["x_tracking"], algorithm={"variant": "md_td", "beta": None}
    )
    assert any("needs an x-iterate" in p for p in validate_experiment(mdtd))


def test_unconstrained_needs_regularizer_and_history_lambda(config_factory):
    """Test the requirements of the unconstrained variant."""
    config = config_factory(algorithm={"variant": "gtda_unconstrained", "beta": None})
    problems = validate_experiment(config)
    assert any("quadratic regularizer" in p for p in problems)
    assert any("history-dependent" in p for p in problems)


def test_model_conditions_are_reported(config_factory):
    """Test that a row-sum failure is named with the offending row."""
    doc = create_model("mdp_b", behavior_P=[[0.5, 0.4], [0.5, 0.5]]).model_dump()
    problems = validate_experiment(config_factory(model=doc))
    assert any("behavior_row_stochastic" in p and "rows 0" in p for p in problems)


def test_dimension_mismatches(config_factory):
    """Test λ values and θ₀ of the wrong length."""
    config = config_factory(
        **{"lambda": {"kind": "state", "values": [0.5, 0.5, 0.5]}},
        algorithm={"theta0": [1.0]},
    )
    problems = validate_experiment(config)
    assert any(p.startswith("lambda:") for p in problems)
    assert any("theta0" in p for p in problems)


def test_checkpoint_stride_warning(config_factory):
    """Test the warning when checkpoint_every does not divide the horizon."""
    with pytest.warns(UserWarning, match="does not divide"):
        validate_experiment(config_factory(checkpoint_every=70))


def test_runtime_settings_from_env(monkeypatch):
    """Test environment parsing and that bad values fall back to defaults."""
    monkeypatch.setenv("GTD_LAB_WORKERS", "3")
    monkeypatch.setenv("GTD_LAB_LOG_LEVEL", "debug")
    settings = RuntimeSettings.from_env()
    assert settings.workers == 3
    assert settings.log_level == "DEBUG"
    monkeypatch.setenv("GTD_LAB_WORKERS", "many")
    assert RuntimeSettings.from_env().workers == 1
