from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidArgument


@dataclass
class Batch:
    obs: np.ndarray
    action: np.ndarray
    reward: np.ndarray
    next_obs: np.ndarray

    def __len__(self):
        return len(self.reward)


class ReplayMemory:
    """Fixed-capacity ring buffer of ``(s, a, r, s')`` with seeded uniform sampling."""

    def __init__(self, capacity: int, obs_dim: int, action_dim: int, seed: int = 0):
        if capacity < 1:
            raise InvalidArgument("capacity must be >= 1")
        self.capacity = capacity
        self.obs = np.zeros((capacity, obs_dim))
        self.action = np.zeros((capacity, action_dim))
        self.reward = np.zeros(capacity)
        self.next_obs = np.zeros((capacity, obs_dim))
        # insertion serial of each slot, lets tests identify evicted entries
        self.serial = np.full(capacity, -1, dtype=np.int64)
        self.inserted = 0
        self.rng = np.random.default_rng(seed)

    def __len__(self):
        return min(self.inserted, self.capacity)

    def push(self, obs, action, reward, next_obs) -> None:
        i = self.inserted % self.capacity
        self.obs[i] = obs
        self.action[i] = np.ravel(action)
        self.reward[i] = reward
        self.next_obs[i] = next_obs
        self.serial[i] = self.inserted
        self.inserted += 1

    def sample_indices(self, n: int) -> np.ndarray:
        if len(self) == 0:
            raise InvalidArgument("cannot sample from an empty replay memory")
        return self.rng.integers(0, len(self), size=n)

    def sample(self, n: int) -> Batch:
        idx = self.sample_indices(n)
        return Batch(self.obs[idx], self.action[idx], self.reward[idx], self.next_obs[idx])
