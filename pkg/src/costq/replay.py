"""Circular experience memory storing whole episodes.

Capacity is counted in episodes while batches are counted in steps: one-step
targets sample individual transitions uniformly, multi-step targets sample
whole episodes until a step budget is met.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .env import Observation
from .errors import NotReadyError

Array = np.ndarray


@dataclass
class Transition:
    """One experienced step, including the behavior policy's probability of the
    taken action at experience time (needed for off-policy correction)."""

    observation: Observation
    action: int
    reward: float
    next_observation: Observation | None
    behavior_prob: float
    legal_next_actions: Array | None

    @property
    def terminal(self) -> bool:
        return self.next_observation is None


Episode = list[Transition]


def validate_episode(episode: Episode) -> None:
    if len(episode) == 0:
        raise ValueError("empty episode")
    for i, tr in enumerate(episode):
        if not 0.0 < tr.behavior_prob <= 1.0:
            raise ValueError(f"behavior_prob {tr.behavior_prob} outside (0, 1] at step {i}")
        is_last = i == len(episode) - 1
        if tr.terminal != is_last:
            raise ValueError(
                "episode must contain exactly one terminal transition, at the end"
            )


class ReplayBuffer:
    """FIFO episode store with uniform transition- and episode-level sampling."""

    def __init__(self, capacity_episodes: int, rng: np.random.Generator | None = None):
        if capacity_episodes <= 0:
            raise ValueError("capacity must be positive")
        self.capacity_episodes = capacity_episodes
        self.rng = rng if rng is not None else np.random.default_rng()
        self._episodes: deque[Episode] = deque(maxlen=capacity_episodes)
        self._lengths: deque[int] = deque(maxlen=capacity_episodes)
        self._total_steps = 0
        self._cumlen: Array | None = None  # rebuilt lazily after any push

    def __len__(self) -> int:
        return len(self._episodes)

    @property
    def total_steps(self) -> int:
        return self._total_steps

    def push_episode(self, episode: Episode) -> None:
        """Append a finished episode, evicting the oldest when full."""
        validate_episode(episode)
        if len(self._episodes) == self.capacity_episodes:
            self._total_steps -= self._lengths[0]
        self._episodes.append(episode)
        self._lengths.append(len(episode))
        self._total_steps += len(episode)
        self._cumlen = None

    def episodes(self) -> list[Episode]:
        return list(self._episodes)

    def _cumulative_lengths(self) -> Array:
        if self._cumlen is None:
            self._cumlen = np.cumsum(np.fromiter(self._lengths, dtype=np.int64,
                                                 count=len(self._lengths)))
        return self._cumlen

    def sample_transitions(self, count: int) -> list[Transition]:
        """Uniform i.i.d. draw over all stored transitions."""
        if len(self._episodes) == 0:
            raise NotReadyError("replay buffer is empty")
        if count == 0:
            return []
        cum = self._cumulative_lengths()
        flat = self.rng.integers(self._total_steps, size=count)
        episode_idx = np.searchsorted(cum, flat, side="right")
        out = []
        for ep_i, flat_i in zip(episode_idx, flat):
            start = 0 if ep_i == 0 else cum[ep_i - 1]
            out.append(self._episodes[ep_i][flat_i - start])
        return out

    def sample_episodes(self, target_step_budget: int) -> list[Episode]:
        """Uniformly chosen episodes until their total steps reach the budget.

        Episodes are drawn without replacement while the buffer lasts; a budget
        larger than the stored step count falls back to replacement. At least
        one episode is always returned and the final one may overshoot.
        """
        if len(self._episodes) == 0:
            raise NotReadyError("replay buffer is empty")
        order = self.rng.permutation(len(self._episodes))
        out: list[Episode] = []
        steps = 0
        for idx in order:
            ep = self._episodes[idx]
            out.append(ep)
            steps += len(ep)
            if steps >= target_step_budget:
                return out
        while steps < target_step_budget:
            ep = self._episodes[int(self.rng.integers(len(self._episodes)))]
            out.append(ep)
            steps += len(ep)
        return out
