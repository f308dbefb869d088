"""Actor-critic migration agents: the delayed-update learner, one-step DDPG and JSR.

The actor maps an observation to a ``U x M`` matrix of bounded node scores;
the environment executes the per-row argmax while replay and the critic see
the continuous scores. The critic scores ``[observation, scores]``.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Callable, Sequence

import numpy as np

from .. import env as mdp
from ..errors import ContractViolation, InvalidArgument
from ..nn import (NetworkSpec, OptimizerState, ParameterSet, adam_step, backward, forward,
                  forward_cached, global_norm, init_params, soft_update)
from ..traces import VehicleTrace
from .replay import Batch, ReplayMemory

log = logging.getLogger(__name__)


class PolicyKind(str, Enum):
    SRCL = "SRCL"
    DDPG = "DDPG"
    JSR = "JSR"
    AM = "AM"
    NM = "NM"
    GA = "GA"

    @property
    def learned(self) -> bool:
        return self in (PolicyKind.SRCL, PolicyKind.DDPG, PolicyKind.JSR)


@dataclass
class AgentConfig:
    lr_actor: float = 1e-5
    lr_critic: float = 1e-4
    gamma: float = 0.95
    omega: float = 1e-2
    delay: int = 5
    batch_size: int = 512
    replay_capacity: int = 10_000
    noise_sigma: float = 0.15
    noise_floor: float = 0.05  # sigma never decays below this fraction of noise_sigma
    clip_norm: float = 2.0
    episodes: int = 200
    hidden: tuple[int, ...] = (512, 256)
    reward_scale: float = 1.0  # applied to rewards inside the critic target only
    seed: int = 0

    def __post_init__(self):
        self.hidden = tuple(int(h) for h in self.hidden)
        if self.delay < 1:
            raise InvalidArgument("delay must be >= 1")
        if not 0 < self.gamma < 1:
            raise InvalidArgument("gamma must lie in (0, 1)")
        if self.batch_size < 1 or self.replay_capacity < 1 or self.episodes < 1:
            raise InvalidArgument("batch_size, replay_capacity and episodes must be >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["hidden"] = list(self.hidden)
        return d


def noise_sigma(cfg: AgentConfig, episode: int) -> float:
    return cfg.noise_sigma * max(cfg.noise_floor, 1.0 - episode / cfg.episodes)


def split_scores(scores, n_vehicles: int, n_nodes: int):
    """Split a flat actor output into the score matrix and the optional allocation logits."""
    s = np.asarray(scores, dtype=float).reshape(-1)
    node_scores = s[: n_vehicles * n_nodes].reshape(n_vehicles, n_nodes)
    logits = s[n_vehicles * n_nodes:]
    return node_scores, (logits if logits.size else None)


def select_action(actor: ParameterSet, obs, sigma: float, rng: np.random.Generator,
                  n_vehicles: int, n_nodes: int):
    """Noisy actor output plus per-vehicle argmax decisions (lowest index on ties)."""
    out = forward(actor, obs)
    if out.size < n_vehicles * n_nodes:
        raise InvalidArgument(f"actor emits {out.size} values, need at least {n_vehicles * n_nodes}")
    if sigma > 0:
        out = out + rng.normal(0.0, sigma, size=out.shape)
    node_scores, _ = split_scores(out, n_vehicles, n_nodes)
    return out, np.argmax(node_scores, axis=1)


def critic_update(batch: Batch, critic: ParameterSet, target_actor: ParameterSet,
                  target_critic: ParameterSet, gamma: float, opt: OptimizerState,
                  clip_norm: float = np.inf, reward_scale: float = 1.0) -> float:
    """One clipped Adam step on the TD mean squared error; returns the pre-step loss."""
    next_a = forward(target_actor, batch.next_obs)
    q_next = forward(target_critic, np.hstack([batch.next_obs, next_a]))[:, 0]
    y = reward_scale * batch.reward + gamma * q_next
    if not np.all(np.isfinite(y)):
        raise FloatingPointError("non-finite critic targets")
    x = np.hstack([batch.obs, batch.action])
    q, cache = forward_cached(critic, x)
    diff = q[:, 0] - y
    loss = float(np.mean(diff * diff))
    grads, _ = backward(critic, x, (2.0 / len(diff)) * diff[:, None], cache)
    adam_step(critic, grads, opt, clip_norm)
    return loss


def policy_gradient(batch: Batch, actor: ParameterSet, critic: ParameterSet):
    """Gradient of ``-mean(critic(s, actor(s)))`` w.r.t. the actor parameters."""
    obs = batch.obs
    n = len(obs)
    a, acache = forward_cached(actor, obs)
    x = np.hstack([obs, a])
    _, ccache = forward_cached(critic, x)
    _, dx = backward(critic, x, np.full((n, 1), -1.0 / n), ccache)
    grads, _ = backward(actor, obs, dx[:, obs.shape[1]:], acache)
    return grads


def actor_update(batch: Batch, actor: ParameterSet, critic: ParameterSet, opt: OptimizerState,
                 clip_norm: float = np.inf) -> float:
    """Ascend the critic's value of the actor's actions by one clipped Adam step.

    Returns the (pre-clipping) policy-gradient norm.
    """
    grads = policy_gradient(batch, actor, critic)
    norm = global_norm(grads)
    adam_step(actor, grads, opt, clip_norm)
    return norm


class ActorCritic:
    """Networks, optimizers, replay and the update schedule of one learning agent."""

    def __init__(self, obs_dim: int, n_vehicles: int, n_nodes: int, cfg: AgentConfig,
                 kind: PolicyKind = PolicyKind.SRCL):
        kind = PolicyKind(kind)
        if not kind.learned:
            raise InvalidArgument(f"{kind.value} is not a learning policy")
        self.kind, self.cfg = kind, cfg
        self.n_vehicles, self.n_nodes, self.obs_dim = n_vehicles, n_nodes, obs_dim
        self.action_dim = n_vehicles * n_nodes + (n_vehicles if kind is PolicyKind.JSR else 0)
        # one-step DDPG updates actor and targets after every critic update
        self.delay = 1 if kind is PolicyKind.DDPG else cfg.delay
        ss = np.random.SeedSequence([cfg.seed, 0xAC])
        a_seed, c_seed, mem_seed, noise_seed = (int(s.generate_state(1)[0]) for s in ss.spawn(4))
        self.actor = init_params(NetworkSpec((obs_dim, *cfg.hidden, self.action_dim), "tanh"), a_seed)
        self.critic = init_params(NetworkSpec((obs_dim + self.action_dim, *cfg.hidden, 1)), c_seed)
        self.target_actor = self.actor.copy()
        self.target_critic = self.critic.copy()
        self.actor_opt = OptimizerState.for_params(self.actor, cfg.lr_actor)
        self.critic_opt = OptimizerState.for_params(self.critic, cfg.lr_critic)
        self.memory = ReplayMemory(cfg.replay_capacity, obs_dim, self.action_dim, mem_seed)
        self.noise_rng = np.random.default_rng(noise_seed)
        self.critic_updates = 0
        self.actor_updates = 0
        self.update_log: list[tuple[str, int]] = []  # ("critic"|"actor", critic update count)

    def act(self, obs, sigma: float = 0.0):
        scores, decisions = select_action(self.actor, obs, sigma, self.noise_rng,
                                          self.n_vehicles, self.n_nodes)
        _, logits = split_scores(scores, self.n_vehicles, self.n_nodes)
        return scores, decisions, logits

    def critic_step(self, batch: Batch) -> float:
        loss = critic_update(batch, self.critic, self.target_actor, self.target_critic,
                             self.cfg.gamma, self.critic_opt, self.cfg.clip_norm, self.cfg.reward_scale)
        self.critic_updates += 1
        self.update_log.append(("critic", self.critic_updates))
        return loss

    def actor_step(self, batch: Batch) -> float:
        """Delayed actor update followed by the soft target updates."""
        if self.critic_updates == 0 or self.critic_updates % self.delay != 0:
            raise ContractViolation(
                f"actor update after {self.critic_updates} critic updates; schedule is every {self.delay}")
        if self.actor_updates >= self.critic_updates // self.delay:
            raise ContractViolation("actor already updated for this critic step")
        norm = actor_update(batch, self.actor, self.critic, self.actor_opt, self.cfg.clip_norm)
        soft_update(self.target_actor, self.actor, self.cfg.omega)
        soft_update(self.target_critic, self.critic, self.cfg.omega)
        self.actor_updates += 1
        self.update_log.append(("actor", self.critic_updates))
        return norm

    def learn(self) -> dict | None:
        if len(self.memory) < self.cfg.batch_size:
            return None
        batch = self.memory.sample(self.cfg.batch_size)
        info = {"critic_loss": self.critic_step(batch)}
        if self.critic_updates % self.delay == 0:
            info["actor_grad_norm"] = self.actor_step(batch)
        return info

    def policy(self) -> "LearnedPolicy":
        return LearnedPolicy(self.actor, self.n_vehicles, self.n_nodes)


class LearnedPolicy:
    """Frozen (noise-free) actor usable as an environment policy."""

    def __init__(self, actor: ParameterSet, n_vehicles: int, n_nodes: int):
        self.actor, self.n_vehicles, self.n_nodes = actor, n_vehicles, n_nodes
        self.joint = actor.spec.n_out > n_vehicles * n_nodes

    def __call__(self, state: mdp.SystemState):
        out = forward(self.actor, mdp.observe(state))
        scores, logits = split_scores(out, self.n_vehicles, self.n_nodes)
        decisions = np.argmax(scores, axis=1)
        return (decisions, logits) if self.joint else decisions


@dataclass
class TrainResult:
    agent: ActorCritic
    episode_reward: list[float] = field(default_factory=list)
    migrations: list[int] = field(default_factory=list)

    def curve_rows(self, horizon: int) -> list[dict]:
        return [{"episode": i, "mean_reward": r / horizon, "migration_frequency": m}
                for i, (r, m) in enumerate(zip(self.episode_reward, self.migrations))]


TraceSource = Sequence[VehicleTrace] | Callable[[int], Sequence[VehicleTrace]]


def episode_traces(source: TraceSource, episode: int) -> Sequence[VehicleTrace]:
    return source(episode) if callable(source) else source


def train(env_config: mdp.EnvConfig, traces: TraceSource, cfg: AgentConfig,
          kind: PolicyKind | str = PolicyKind.SRCL, progress: Callable[[int, float], None] | None = None
          ) -> TrainResult:
    """Run the full training loop: act with decaying noise, store, learn every slot."""
    kind = PolicyKind(kind)
    agent = ActorCritic(env_config.obs_dim, env_config.n_vehicles, env_config.n_nodes, cfg, kind)
    result = TrainResult(agent)
    for ep in range(cfg.episodes):
        state = mdp.reset(env_config, episode_traces(traces, ep), episode=ep)
        sigma = noise_sigma(cfg, ep)
        obs = mdp.observe(state)
        total, moves = 0.0, 0
        while not state.done:
            scores, decisions, logits = agent.act(obs, sigma)
            moves += int(np.count_nonzero(decisions != state.hosting))
            state, reward, _ = mdp.step(state, decisions, logits)
            next_obs = mdp.observe(state)
            agent.memory.push(obs, scores, reward, next_obs)
            agent.learn()
            obs = next_obs
            total += reward
        result.episode_reward.append(total)
        result.migrations.append(moves)
        if progress is not None:
            progress(ep, total)
        log.debug("%s episode %d reward %.3f migrations %d", kind.value, ep, total, moves)
    return result
