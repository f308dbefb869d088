"""Running a fixed policy through whole episodes and collecting delay statistics."""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .. import env as mdp
from ..delay import DelayBreakdown

Policy = Callable[[mdp.SystemState], object]


@dataclass
class EpisodeStats:
    rewards: list[float] = field(default_factory=list)
    migration: float = 0.0
    access: float = 0.0
    backhaul: float = 0.0
    computation: float = 0.0
    migrations: int = 0
    attachment_changes: int = 0
    decision_seconds: list[float] = field(default_factory=list)
    slot_ct: list[float] = field(default_factory=list)
    decisions: list[np.ndarray] = field(default_factory=list)

    @property
    def total(self) -> float:
        return self.migration + (self.access + self.backhaul) + self.computation

    @property
    def episode_reward(self) -> float:
        return float(sum(self.rewards))


def _split(out):
    if isinstance(out, tuple):
        return np.asarray(out[0]), out[1]
    return np.asarray(out), None


def run_episode(config: mdp.EnvConfig, traces, policy: Policy, episode: int = 0,
                log: mdp.EpisodeLog | None = None, time_decisions: bool = False) -> EpisodeStats:
    """Roll ``policy`` through one episode. Policies return node ids or ``(ids, alloc_logits)``."""
    state = mdp.reset(config, traces, episode)
    stats = EpisodeStats()
    prev_attached = state.attached
    while not state.done:
        if time_decisions:
            t0 = time.perf_counter()
            out = policy(state)
            stats.decision_seconds.append(time.perf_counter() - t0)
        else:
            out = policy(state)
        x, logits = _split(out)
        stats.migrations += int(np.count_nonzero(x != state.hosting))
        if state.t > 0:
            stats.attachment_changes += int(np.count_nonzero(state.attached != prev_attached))
        prev_attached = state.attached
        slot = state.t
        state, reward, bd = mdp.step(state, x, logits)
        stats.rewards.append(reward)
        stats.decisions.append(x.copy())
        _accumulate(stats, bd)
        if log is not None:
            log.record(slot, x, bd)
    return stats


def _accumulate(stats: EpisodeStats, bd: DelayBreakdown) -> None:
    stats.migration += float(np.sum(bd.migration))
    stats.access += float(np.sum(bd.access))
    stats.backhaul += float(np.sum(bd.backhaul))
    ct = float(np.sum(bd.computation))
    stats.computation += ct
    stats.slot_ct.append(ct)


def replay_decisions(config: mdp.EnvConfig, traces, decisions, episode: int = 0) -> EpisodeStats:
    """Re-run a recorded decision stream (e.g. under another allocation mode)."""
    stream = iter(decisions)
    return run_episode(config, traces, lambda _s: next(stream), episode)
