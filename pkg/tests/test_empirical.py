"""Tests for simulation-based (A, b) estimates."""

import warnings

import numpy as np
import pytest

from gtd_lab.config import build_model, create_model
from gtd_lab.exceptions import EstimationError
from gtd_lab.oracle.bellman import bellman_state_dependent
from gtd_lab.oracle.empirical import estimate_projected_problem_empirical, trace_chunks
from gtd_lab.oracle.problem import build_projected_problem
from gtd_lab.stats import TailSample
from gtd_lab.traces import trace_bound


def test_estimate_matches_closed_form(mdp_b, state_lambda_b):
    """Test that the long-run averages agree with the exact (A, b) within 5 stderr."""
    mdp, features = mdp_b
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        exact = build_projected_problem(
            mdp, features, bellman_state_dependent(mdp, state_lambda_b.values)
        )
    est = estimate_projected_problem_empirical(mdp, features, state_lambda_b, 100_000, 0)
    assert np.all(np.abs(est.A - exact.A) <= 5.0 * est.A_stderr + 1e-3)
    assert np.all(np.abs(est.b - exact.b) <= 5.0 * est.b_stderr + 1e-3)
    np.testing.assert_allclose(est.C, exact.C, atol=1e-15)


def test_estimate_is_seed_deterministic(mdp_b, history_lambda):
    """Test that one seed always yields the same estimate."""
    mdp, features = mdp_b
    first = estimate_projected_problem_empirical(mdp, features, history_lambda, 20_000, 3)
    second = estimate_projected_problem_empirical(mdp, features, history_lambda, 20_000, 3)
    np.testing.assert_array_equal(first.A, second.A)
    np.testing.assert_array_equal(first.b, second.b)


def test_short_horizon_warns_and_too_short_raises(mdp_a, state_lambda_b):
    """Test the short-horizon warning and the minimum batch count."""
    mdp, features = mdp_a
    with pytest.warns(UserWarning, match="below"):
        estimate_projected_problem_empirical(mdp, features, state_lambda_b, 1_000, 0)
    with pytest.raises(EstimationError, match="shorter"):
        estimate_projected_problem_empirical(mdp, features, state_lambda_b, 10, 0)


def test_chunks_respect_alignment(mdp_b, history_lambda):
    """Test that chunks never cross a multiple of the alignment and cover the horizon."""
    mdp, features = mdp_b
    tail = TailSample()
    done = 0
    for chunk in trace_chunks(
        mdp, features, history_lambda, 10_000, 1, align=1_500, tail=tail
    ):
        assert done // 1_500 == (done + chunk.size - 1) // 1_500
        assert chunk.sub_traces.shape == (chunk.size, 1, 2)
        done += chunk.size
    assert done == 10_000
    assert tail.count == 10_000
    assert tail.summary()["max"] <= trace_bound(history_lambda, features) + 1e-12


def test_chunk_rows_are_pre_update_traces(mdp_b, state_lambda_b):
    """Test that row n holds e_n with e_0 = φ(S_0) and the transition from S_n."""
    mdp, features = mdp_b
    chunk = next(trace_chunks(mdp, features, state_lambda_b, 100, 2, initial_state=0))
    np.testing.assert_array_equal(chunk.e[0], features.phi[0])
    assert chunk.s[0] == 0
    np.testing.assert_array_equal(chunk.s[1:], chunk.s_next[:-1])
    np.testing.assert_allclose(chunk.rho, mdp.ratios[chunk.s, chunk.s_next])
    np.testing.assert_allclose(
        chunk.next_lambdas[:, 0], state_lambda_b.values[chunk.s_next]
    )


def test_estimate_uses_observed_rewards(state_lambda_b):
    """Test that reward noise reaches b while A stays on the same trace path."""
    clean = build_model(create_model("mdp_b"))
    noisy = build_model(create_model("mdp_b", reward_noise_scale=2.0))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        exact = build_projected_problem(
            *noisy, bellman_state_dependent(noisy[0], state_lambda_b.values)
        )
    base = estimate_projected_problem_empirical(*clean, state_lambda_b, 100_000, 0)
    est = estimate_projected_problem_empirical(*noisy, state_lambda_b, 100_000, 0)
    np.testing.assert_array_equal(est.A, base.A)
    assert not np.array_equal(est.b, base.b)
    assert np.all(np.abs(est.b - exact.b) <= 5.0 * est.b_stderr + 1e-3)
