"""Seeded sampling of the behavior chain."""

import bisect
import logging
from typing import List, Optional, Tuple

import numpy as np

from .mdp import FiniteMdp, stationary_distribution
from .types import Transition

logger = logging.getLogger(__name__)

BLOCK = 4096


def spawn_generators(seed: int) -> Tuple[np.random.Generator, ...]:
    """
    Independent generators for the initial state, transitions and reward noise.

    The same seed always yields the same three streams.
    """
    children = np.random.SeedSequence(seed).spawn(3)
    return tuple(np.random.default_rng(child) for child in children)


def simulate_transition(
    s: int, mdp: FiniteMdp, rng: np.random.Generator
) -> Tuple[int, float]:
    """
    Draw S' ~ P^o[s, ·] and R = r(s,S') + σ(s,S')·Z.

    Uses exactly one uniform and then one standard normal from ``rng``.

    Args:
        s: Current state
        mdp: Model
        rng: Generator

    Returns:
        Tuple of next state and reward
    """
    u = rng.random()
    z = rng.standard_normal()
    s_next = _next_state(mdp.behavior_cdf[s], u)
    reward = mdp.reward_mean[s, s_next] + mdp.reward_noise_scale[s, s_next] * z
    return s_next, float(reward)


def _next_state(cdf_row, u: float) -> int:
    return min(bisect.bisect_right(cdf_row, u), len(cdf_row) - 1)


class TransitionStream:
    """
    Reproducible stream of behavior transitions.

    Uniforms and normals come from separate generators and are drawn in blocks,
    which yields the same values as per-step draws. Two streams with the same
    seed and the same behavior chain visit the same states.
    """

    def __init__(
        self,
        mdp: FiniteMdp,
        seed: int,
        initial_state: Optional[int] = None,
    ):
        """
        Args:
            mdp: Model supplying the behavior chain and rewards
            seed: Stream seed
            initial_state: Fixed S₀; drawn from ξ when None
        """
        self.mdp = mdp
        self.seed = seed
        init_rng, self._transition_rng, self._noise_rng = spawn_generators(seed)
        if initial_state is None:
            xi = stationary_distribution(mdp)
            initial_state = int(init_rng.choice(mdp.n_states, p=xi))
        elif not 0 <= initial_state < mdp.n_states:
            raise ValueError(f"initial state {initial_state} out of range")
        self.state = int(initial_state)
        self.initial_state = self.state
        self._cdf: List[List[float]] = mdp.behavior_cdf.tolist()
        self._u = np.empty(0)
        self._z = np.empty(0)
        self._pos = 0

    def _refill(self) -> None:
        self._u = self._transition_rng.random(BLOCK)
        self._z = self._noise_rng.standard_normal(BLOCK)
        self._pos = 0

    def __iter__(self):
        return self

    def __next__(self) -> Transition:
        if self._pos >= self._u.shape[0]:
            self._refill()
        u, z = self._u[self._pos], self._z[self._pos]
        self._pos += 1
        s = self.state
        s_next = _next_state(self._cdf[s], u)
        reward = (
            self.mdp.reward_mean[s, s_next]
            + self.mdp.reward_noise_scale[s, s_next] * z
        )
        self.state = s_next
        return Transition(s, s_next, float(reward))

    def take(self, n: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Next ``n`` transitions as arrays (s, s_next, reward)."""
        s = np.empty(n, dtype=np.int64)
        s_next = np.empty(n, dtype=np.int64)
        reward = np.empty(n)
        for i in range(n):
            t = next(self)
            s[i], s_next[i], reward[i] = t.s, t.s_next, t.reward
        return s, s_next, reward
