"""Shared fixtures: the built-in models and small random models."""

import numpy as np
import pytest

from gtd_lab.config import build_model, create_model
from gtd_lab.mdp import random_features, random_mdp
from gtd_lab.schemas import ExperimentConfig
from gtd_lab.traces import HistoryDependentLambda, StateDependentLambda


@pytest.fixture
def mdp_a():
    """MDP-A and its single constant feature."""
    return build_model(create_model("mdp_a"))


@pytest.fixture
def mdp_b():
    """MDP-B and its two features."""
    return build_model(create_model("mdp_b"))


@pytest.fixture
def random_models():
    """Twenty valid random models with features, |S| ≤ 8 and d ≤ 4."""
    rng = np.random.default_rng(2024)
    models = []
    for _ in range(20):
        n = int(rng.integers(2, 9))
        d = int(rng.integers(1, min(n, 4) + 1))
        models.append((random_mdp(rng, n), random_features(rng, n, d)))
    return models


@pytest.fixture
def state_lambda_b():
    return StateDependentLambda(np.array([0.5, 0.8]))


@pytest.fixture
def history_lambda():
    return HistoryDependentLambda(2.0)


def _make_config(**overrides) -> ExperimentConfig:
    """MDP-B GTDa2TS experiment with small horizon, overridable per key."""
    data = {
        "model": "mdp_b",
        "lambda": {"kind": "state", "values": [0.5, 0.8]},
        "algorithm": {
            "variant": "gtda_2ts",
            "alpha": {"kind": "power", "a": 1.0, "c": 0.8},
            "beta": {"kind": "power", "a": 1.0, "c": 0.6},
            "r_theta": 50.0,
            "r_x": 50.0,
        },
        "horizon": 200,
        "checkpoint_every": 50,
        "seeds": [0, 1],
    }
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(data.get(key), dict):
            data[key] = {**data[key], **value}
        else:
            data[key] = value
    return ExperimentConfig.model_validate(data)


@pytest.fixture
def config_factory():
    """Builds configs from the small MDP-B GTDa2TS experiment."""
    return _make_config


@pytest.fixture
def base_config():
    return _make_config()
