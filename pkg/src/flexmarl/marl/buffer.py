"""Fixed-capacity ring buffer of joint transitions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class Batch:
    obs: np.ndarray  # (B, n, obs_dim)
    actions: np.ndarray  # (B, n, 3)
    rewards: np.ndarray  # (B,)
    next_obs: np.ndarray
    states: np.ndarray  # (B, state_dim)
    next_states: np.ndarray
    done: np.ndarray  # (B,) float
    demo: np.ndarray  # (B,) bool
    demo_actions: np.ndarray  # (B, n, 3)

    def __len__(self) -> int:
        return len(self.rewards)

    @staticmethod
    def concat(parts) -> "Batch":
        parts = [p for p in parts if len(p)]
        return Batch(*(np.concatenate([getattr(p, f) for p in parts])
                       for f in Batch.__dataclass_fields__))


class ReplayBuffer:
    def __init__(self, capacity: int, n_agents: int, obs_dim: int, state_dim: int):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.inserted = 0
        c, n = capacity, n_agents
        self._data = Batch(obs=np.zeros((c, n, obs_dim)), actions=np.zeros((c, n, 3)), rewards=np.zeros(c),
                           next_obs=np.zeros((c, n, obs_dim)), states=np.zeros((c, state_dim)),
                           next_states=np.zeros((c, state_dim)), done=np.zeros(c),
                           demo=np.zeros(c, dtype=bool), demo_actions=np.zeros((c, n, 3)))

    def __len__(self) -> int:
        return min(self.inserted, self.capacity)

    def add(self, obs, actions, reward, next_obs, state, next_state, done, demo_actions=None):
        k = self.inserted % self.capacity
        d = self._data
        d.obs[k] = obs
        d.actions[k] = actions
        d.rewards[k] = reward
        d.next_obs[k] = next_obs
        d.states[k] = state
        d.next_states[k] = next_state
        d.done[k] = float(done)
        d.demo[k] = demo_actions is not None
        d.demo_actions[k] = 0.0 if demo_actions is None else demo_actions
        self.inserted += 1

    def sample(self, size: int, rng: np.random.Generator) -> Batch:
        if len(self) == 0:
            raise ValueError("cannot sample from an empty buffer")
        idx = rng.integers(0, len(self), size)
        return self.take(idx)

    def take(self, idx) -> Batch:
        return Batch(*(getattr(self._data, f)[idx] for f in Batch.__dataclass_fields__))
