"""Tests for eligibility traces and λ-schemes."""

import numpy as np
import pytest

from gtd_lab.exceptions import ConfigError, InfeasibleTransitionError, TraceError
from gtd_lab.mdp import FeatureMap, FiniteMdp
from gtd_lab.simulation import TransitionStream
from gtd_lab.traces import (
    CompositeLambda,
    HistoryDependentLambda,
    StateDependentLambda,
    as_composite,
    check_scheme,
    coupled_trace_decay,
    coupling_envelope,
    has_history_cells,
    init_trace,
    is_state_dependent,
    next_lambdas,
    stationary_trace_series,
    step_trace,
    trace_bound,
)


def _run(mdp, features, scheme, seed, steps):
    stream = TransitionStream(mdp, seed)
    trace = init_trace(features, scheme, stream.initial_state)
    path = [stream.initial_state]
    for _ in range(steps):
        t = next(stream)
        trace, _ = step_trace(trace, mdp, features, scheme, t.s, t.s_next)
        path.append(t.s_next)
    return trace, path


def test_init_trace(mdp_b, state_lambda_b):
    """Test that e₀ = φ(S₀) with memory (S₀, S₀)."""
    _, features = mdp_b
    trace = init_trace(features, state_lambda_b, 1)
    np.testing.assert_array_equal(trace.e, features.phi[1])
    assert trace.memory == (1, 1)


def test_state_dependent_recursion(mdp_b, state_lambda_b):
    """Test e_n = λ(S_n)γ(S_n)ρ(S_{n-1},S_n)e_{n-1} + φ(S_n) step by step."""
    mdp, features = mdp_b
    stream = TransitionStream(mdp, seed=4)
    trace = init_trace(features, state_lambda_b, stream.initial_state)
    e = features.phi[stream.initial_state].copy()
    for _ in range(300):
        t = next(stream)
        trace, lambdas = step_trace(trace, mdp, features, state_lambda_b, t.s, t.s_next)
        lam = state_lambda_b.values[t.s_next]
        e = lam * mdp.discount[t.s_next] * mdp.ratios[t.s, t.s_next] * e
        e = e + features.phi[t.s_next]
        assert lambdas[0] == lam
        np.testing.assert_allclose(trace.e, e, rtol=1e-12, atol=1e-12)


def test_memory_mismatch_raises(mdp_b, state_lambda_b):
    """Test that a transition not starting at the trace's state is rejected."""
    mdp, features = mdp_b
    trace = init_trace(features, state_lambda_b, 0)
    with pytest.raises(TraceError, match="memory ends at state 0"):
        step_trace(trace, mdp, features, state_lambda_b, 1, 0)


def test_infeasible_transition_raises():
    """Test that a step along a zero-behavior-probability edge is rejected."""
    mdp = FiniteMdp(
        target_P=np.array([[0.0, 1.0], [1.0, 0.0]]),
        behavior_P=np.array([[0.0, 1.0], [1.0, 0.0]]),
        discount=np.full(2, 0.5),
        reward_mean=np.zeros((2, 2)),
    )
    features = FeatureMap(np.eye(2))
    scheme = StateDependentLambda(np.ones(2))
    trace = init_trace(features, scheme, 0)
    with pytest.raises(InfeasibleTransitionError):
        step_trace(trace, mdp, features, scheme, 0, 0)


def test_history_rule_bounds_the_trace(mdp_b, history_lambda):
    """Test ‖e_n‖ ≤ C + max‖φ‖ under the history-dependent rule."""
    mdp, features = mdp_b
    bound = trace_bound(history_lambda, features)
    assert bound == pytest.approx(2.0 + np.sqrt(2.0))
    stream = TransitionStream(mdp, seed=9)
    trace = init_trace(features, history_lambda, stream.initial_state)
    for _ in range(20_000):
        t = next(stream)
        trace, _ = step_trace(trace, mdp, features, history_lambda, t.s, t.s_next)
        assert np.linalg.norm(trace.e) <= bound + 1e-12


def test_history_rule_is_nonexpansive():
    """Test ‖λ(y,e)e − λ(y,e′)e′‖ ≤ ‖e − e′‖ over random triples."""
    rng = np.random.default_rng(0)
    scheme = HistoryDependentLambda(1.5)
    for _ in range(2000):
        e, e2 = rng.normal(scale=3.0, size=(2, 3))
        gamma_rho = float(rng.uniform(0.0, 3.0))
        lhs = np.linalg.norm(scheme.scaled(gamma_rho, e) - scheme.scaled(gamma_rho, e2))
        assert lhs <= np.linalg.norm(e - e2) + 1e-12


def test_history_lambda_values():
    """Test λ = 1 below the bound and C/(γρ‖e‖) above it."""
    scheme = HistoryDependentLambda(2.0)
    assert scheme.lam(0, 0.0, np.array([5.0])) == 1.0
    assert scheme.lam(0, 1.0, np.array([1.0])) == 1.0
    assert scheme.lam(0, 2.0, np.array([4.0])) == pytest.approx(0.25)


def test_single_cell_composite_equals_plain(mdp_b, state_lambda_b):
    """Test that a one-cell composite scheme reproduces the plain trace exactly."""
    mdp, features = mdp_b
    composite = CompositeLambda(np.zeros(2, dtype=np.int64), (state_lambda_b,))
    plain, _ = _run(mdp, features, state_lambda_b, 3, 500)
    comp, _ = _run(mdp, features, composite, 3, 500)
    np.testing.assert_array_equal(plain.e, comp.e)


def test_composite_feeds_only_the_cell_of_the_next_state(mdp_b, history_lambda):
    """Test that φ(s′) enters only the sub-trace of the cell containing s′."""
    mdp, features = mdp_b
    scheme = CompositeLambda(
        np.array([0, 1]), (StateDependentLambda(np.zeros(2)), history_lambda)
    )
    trace = init_trace(features, scheme, 0)
    np.testing.assert_array_equal(trace.sub_traces[1], 0.0)
    trace, lambdas = step_trace(trace, mdp, features, scheme, 0, 1)
    assert lambdas.shape == (2,)
    np.testing.assert_array_equal(trace.sub_traces[0], 0.0)
    np.testing.assert_array_equal(trace.sub_traces[1], features.phi[1])


def test_next_lambdas_matches_step(mdp_b, history_lambda):
    """Test that next_lambdas previews the λ-values step_trace applies."""
    mdp, features = mdp_b
    trace, path = _run(mdp, features, history_lambda, 5, 50)
    s = path[-1]
    preview = next_lambdas(trace, mdp, history_lambda, s, 0)
    _, applied = step_trace(trace, mdp, features, history_lambda, s, 0)
    np.testing.assert_array_equal(preview, applied)


def test_scheme_validation():
    """Test the λ-scheme constructors and state-count checks."""
    with pytest.raises(ConfigError, match=r"\[0, 1\]"):
        StateDependentLambda(np.array([0.5, 1.5]))
    with pytest.raises(ConfigError, match="positive"):
        HistoryDependentLambda(0.0)
    with pytest.raises(ConfigError, match="at least one state"):
        CompositeLambda(np.array([0, 0]), (HistoryDependentLambda(1.0),) * 2)
    with pytest.raises(ConfigError, match="3 λ values"):
        check_scheme(StateDependentLambda(np.ones(3)), 2)
    with pytest.raises(ConfigError, match="partition covers"):
        wide = CompositeLambda(np.array([0, 0, 0]), (HistoryDependentLambda(1.0),))
        as_composite(wide, 2)


def test_scheme_classification(state_lambda_b, history_lambda):
    """Test the closed-form and history-cell predicates."""
    mixed = CompositeLambda(np.array([0, 1]), (state_lambda_b, history_lambda))
    assert is_state_dependent(state_lambda_b) and not has_history_cells(state_lambda_b)
    assert has_history_cells(history_lambda) and not is_state_dependent(history_lambda)
    assert has_history_cells(mixed) and not is_state_dependent(mixed)
    assert trace_bound(state_lambda_b, None) is None


def test_stationary_series_matches_recursion(mdp_b, state_lambda_b):
    """Test the backward series at full depth equals the recursive trace."""
    mdp, features = mdp_b
    trace, path = _run(mdp, features, state_lambda_b, 8, 60)
    series = stationary_trace_series(mdp, features, state_lambda_b, path, 60)
    np.testing.assert_allclose(series, trace.e, rtol=1e-10, atol=1e-12)
    with pytest.raises(ValueError, match="too short"):
        stationary_trace_series(mdp, features, state_lambda_b, path[:5], 10)


def test_coupling_with_zero_lambda_merges_after_one_step(mdp_b):
    """Test that λ ≡ 0 forgets the initial trace after one transition."""
    mdp, features = mdp_b
    scheme = StateDependentLambda(np.zeros(2))
    result = coupled_trace_decay(
        mdp, features, scheme, np.array([5.0, 0.0]), np.zeros(2), horizon=10, seed=0
    )
    assert result.gaps[0] == pytest.approx(5.0)
    np.testing.assert_array_equal(result.gaps[1:], 0.0)
    assert result.bound.shape == (11,)


def test_coupling_envelope(mdp_a):
    """Test the envelope ‖e₀ − ê₀‖·1ᵀ(PΓ)ⁿ1 on MDP-A, where it is 2·0.9ⁿ."""
    mdp, _ = mdp_a
    envelope = coupling_envelope(mdp, 1.0, 5)
    np.testing.assert_allclose(envelope, 2.0 * 0.9 ** np.arange(6), rtol=1e-12)
