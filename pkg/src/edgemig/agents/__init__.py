from .actor_critic import (ActorCritic, AgentConfig, LearnedPolicy, PolicyKind, TrainResult, actor_update,
                           critic_update, noise_sigma, select_action, train)
from .baselines import GAParams, GAPolicy, am_policy, ga_policy, nm_policy
from .replay import Batch, ReplayMemory
from .rollout import EpisodeStats, replay_decisions, run_episode

__all__ = [
    "ActorCritic", "AgentConfig", "Batch", "EpisodeStats", "GAParams", "GAPolicy", "LearnedPolicy",
    "PolicyKind", "ReplayMemory", "TrainResult", "actor_update", "am_policy", "critic_update",
    "ga_policy", "nm_policy", "noise_sigma", "replay_decisions", "run_episode", "select_action", "train",
]
