"""Tests for seeded transition sampling."""

import numpy as np
import pytest

from gtd_lab.mdp import stationary_distribution
from gtd_lab.simulation import TransitionStream, simulate_transition, spawn_generators


def test_same_seed_same_stream(mdp_b):
    """Test that two streams with the same seed produce identical transitions."""
    mdp, _ = mdp_b
    a = TransitionStream(mdp, seed=7)
    b = TransitionStream(mdp, seed=7)
    assert a.initial_state == b.initial_state
    for _ in range(5000):
        assert next(a) == next(b)


def test_different_seeds_differ(mdp_b):
    """Test that different seeds give different paths."""
    mdp, _ = mdp_b
    s_a, _, _ = TransitionStream(mdp, seed=1).take(200)
    s_b, _, _ = TransitionStream(mdp, seed=2).take(200)
    assert not np.array_equal(s_a, s_b)


def test_stream_is_a_markov_path(mdp_b):
    """Test that each transition starts where the previous one ended."""
    mdp, _ = mdp_b
    stream = TransitionStream(mdp, seed=3, initial_state=1)
    prev = stream.initial_state
    assert prev == 1
    for t in (next(stream) for _ in range(1000)):
        assert t.s == prev
        prev = t.s_next
    assert stream.state == prev


def test_initial_state_out_of_range(mdp_a):
    """Test that a fixed S₀ outside the state space is rejected."""
    with pytest.raises(ValueError, match="out of range"):
        TransitionStream(mdp_a[0], seed=0, initial_state=5)


def test_empirical_behavior_frequencies(mdp_b):
    """Test that visit frequencies approach ξ and MDP-B rewards equal s' + 1."""
    mdp, _ = mdp_b
    s, s_next, reward = TransitionStream(mdp, seed=11).take(20_000)
    xi = stationary_distribution(mdp)
    freq = np.bincount(s, minlength=mdp.n_states) / s.shape[0]
    np.testing.assert_allclose(freq, xi, atol=0.02)
    np.testing.assert_array_equal(reward, s_next + 1.0)


def test_simulate_transition_uses_generator(mdp_a):
    """Test the single-step sampler is reproducible from its generator."""
    mdp, _ = mdp_a
    first = [simulate_transition(0, mdp, np.random.default_rng(5)) for _ in range(2)]
    assert first[0] == first[1]
    s_next, reward = first[0]
    assert s_next in (0, 1) and reward == 1.0


def test_spawn_generators_are_independent():
    """Test that the three child generators produce different draws."""
    gens = spawn_generators(0)
    assert len(gens) == 3
    draws = [g.random() for g in gens]
    assert len(set(draws)) == 3
    again = [g.random() for g in spawn_generators(0)]
    assert draws == again
