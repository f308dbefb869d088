"""Slotted MDP of the multi-edge vehicular system.

Within a slot events run in this order: the controller decides hosting
nodes, instances migrate, vehicles move to their next trace point and
re-attach to the nearest base station, the slot's task is uploaded (access
link plus backhaul relay), and every node splits its CPU among the instances
it hosts. The reward is the negated sum of all delays.

States are immutable snapshots; :func:`step` returns a new one, so a state
can be stepped hypothetically (the GA baseline relies on this). Task
randomness for slot ``t`` of episode ``k`` is drawn from a generator keyed on
``(seed, k, t)`` and therefore does not depend on the decisions taken.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace
from typing import Sequence, TextIO

import numpy as np

from . import allocator
from .delay import (DelayBreakdown, DelayParams, access_delays, backhaul_delays, mb_to_bits,
                    migration_delays, snrs)
from .errors import EpisodeFinished, InvalidArgument
from .topology import Topology, nearest_nodes
from .traces import VehicleTrace

ALLOCATION_MODES = ("optimal", "proportional")
OBS_FEATURES = 6
_SERVICE_STREAM = 1 << 30


@dataclass(frozen=True)
class EnvConfig:
    topology: Topology
    params: DelayParams = field(default_factory=DelayParams)
    n_vehicles: int = 10
    horizon: int = 60
    data_mb: tuple[float, float] = (0.5, 1.5)
    density: tuple[float, float] = (200.0, 1000.0)  # cycles/bit
    power: tuple[float, float] = (0.4, 0.6)  # W
    service_mb: tuple[float, float] = (0.5, 50.0)
    tasks_per_slot: int = 1
    allocation_mode: str = "optimal"
    seed: int = 0

    def __post_init__(self):
        if self.n_vehicles < 1 or self.horizon < 1:
            raise InvalidArgument("n_vehicles and horizon must be >= 1")
        if self.tasks_per_slot < 1:
            raise InvalidArgument("tasks_per_slot must be >= 1")
        if self.allocation_mode not in ALLOCATION_MODES:
            raise InvalidArgument(f"allocation_mode must be one of {ALLOCATION_MODES}")
        for name in ("data_mb", "density", "power", "service_mb"):
            lo, hi = getattr(self, name)
            if not 0 < lo <= hi:
                raise InvalidArgument(f"{name} range must satisfy 0 < low <= high, got {(lo, hi)}")

    @property
    def n_nodes(self) -> int:
        return self.topology.n_nodes

    @property
    def obs_dim(self) -> int:
        return self.n_vehicles * OBS_FEATURES


@dataclass(frozen=True, eq=False)
class SystemState:
    config: EnvConfig = field(repr=False)
    trace_xy: np.ndarray = field(repr=False)  # (U, L, 2)
    episode: int
    t: int
    positions: np.ndarray  # (U, 2)
    attached: np.ndarray  # (U,) nearest base station
    hosting: np.ndarray  # (U,) node holding the instance after the last decision
    initial_hosting: np.ndarray
    prev_decision: np.ndarray
    data: np.ndarray  # bits, current slot's task
    density: np.ndarray  # cycles/bit
    power: np.ndarray  # W
    service: np.ndarray  # bits, fixed per episode

    @property
    def done(self) -> bool:
        return self.t >= self.config.horizon

    @property
    def cycles(self) -> np.ndarray:
        return self.data * self.density

    def same_as(self, other: "SystemState") -> bool:
        names = ("positions", "attached", "hosting", "initial_hosting", "prev_decision",
                 "data", "density", "power", "service")
        return (self.t == other.t and self.episode == other.episode
                and all(np.array_equal(getattr(self, n), getattr(other, n)) for n in names))


def _sample_tasks(cfg: EnvConfig, episode: int, t: int):
    rng = np.random.default_rng([cfg.seed, episode, t])
    u, n = cfg.n_vehicles, cfg.tasks_per_slot
    d = mb_to_bits(rng.uniform(*cfg.data_mb, size=(n, u)))
    c = rng.uniform(*cfg.density, size=(n, u))
    p = rng.uniform(*cfg.power, size=u)
    data = d.sum(axis=0)
    # Several tasks in one slot are offloaded together; keep K = D * C exact.
    density = (d * c).sum(axis=0) / data if n > 1 else c[0]
    return data, density, p


def _trace_array(traces: Sequence[VehicleTrace], n: int) -> np.ndarray:
    length = min(len(tr) for tr in traces[:n])
    return np.stack([np.asarray(tr.positions[:length], dtype=float) for tr in traces[:n]])


def reset(config: EnvConfig, traces: Sequence[VehicleTrace], episode: int = 0) -> SystemState:
    """Start an episode: every vehicle attaches to and is hosted on its nearest node."""
    if len(traces) < config.n_vehicles:
        raise InvalidArgument(f"need {config.n_vehicles} traces, got {len(traces)}")
    xy = np.clip(_trace_array(traces, config.n_vehicles), 0.0, config.topology.region_side)
    xy.setflags(write=False)
    pos = xy[:, 0, :]
    attached = nearest_nodes(config.topology, pos)
    data, density, power = _sample_tasks(config, episode, 0)
    srng = np.random.default_rng([config.seed, episode, _SERVICE_STREAM])
    service = mb_to_bits(srng.uniform(*config.service_mb, size=config.n_vehicles))
    return SystemState(config, xy, episode, 0, pos, attached, attached.copy(), attached.copy(),
                       attached.copy(), data, density, power, service)


def observe(state: SystemState) -> np.ndarray:
    """Flat ``U x 6`` vector: x, y, D, C, S min-max scaled and previous decision / M."""
    cfg = state.config
    side = cfg.topology.region_side

    def scale(v, lo, hi):
        return np.clip((v - lo) / (hi - lo), 0.0, 1.0) if hi > lo else np.zeros_like(v)

    n = cfg.tasks_per_slot
    d_lo, d_hi = mb_to_bits(cfg.data_mb[0]) * n, mb_to_bits(cfg.data_mb[1]) * n
    s_lo, s_hi = mb_to_bits(cfg.service_mb[0]), mb_to_bits(cfg.service_mb[1])
    feats = np.column_stack([
        state.positions[:, 0] / side,
        state.positions[:, 1] / side,
        scale(state.data, d_lo, d_hi),
        scale(state.density, *cfg.density),
        scale(state.service, s_lo, s_hi),
        state.prev_decision / cfg.n_nodes,
    ])
    return np.clip(feats, 0.0, 1.0).ravel()


def bandwidth_shares(state: SystemState) -> np.ndarray:
    counts = np.bincount(state.attached, minlength=state.config.n_nodes)
    return state.config.params.bs_bandwidth / counts[state.attached]


def _check_decisions(state, decisions):
    x = np.asarray(decisions)
    if x.shape[-1] != state.config.n_vehicles:
        raise InvalidArgument(f"expected {state.config.n_vehicles} decisions, got shape {x.shape}")
    if not np.issubdtype(x.dtype, np.integer):
        if not np.all(np.mod(x, 1) == 0):
            raise InvalidArgument("decisions must be integer node ids")
        x = x.astype(np.int64)
    if np.any(x < 0) or np.any(x >= state.config.n_nodes):
        raise InvalidArgument(f"decisions must lie in [0, {state.config.n_nodes})")
    return x


def _moved(state):
    nxt = min(state.t + 1, state.trace_xy.shape[1] - 1)
    pos = state.trace_xy[:, nxt, :]
    return pos, nearest_nodes(state.config.topology, pos)


def _delays(state, decisions, pos, attached, alloc_logits=None):
    """Delay components for decisions of shape (U,) or (P, U); PT does not depend on them."""
    cfg = state.config
    params = cfg.params
    hops = cfg.topology.hop_matrix
    mt = migration_delays(state.service, hops[state.hosting, decisions], params)
    counts = np.bincount(attached, minlength=cfg.n_nodes)
    share = params.bs_bandwidth / counts[attached]
    dist = np.hypot(*(pos - cfg.topology.node_positions[attached]).T)
    pt = access_delays(state.data, share, snrs(state.power, dist, params))
    st = backhaul_delays(state.data, hops[attached, decisions], params)
    k = state.cycles
    if alloc_logits is not None:
        e = allocator.softmax_by_node(alloc_logits, decisions, cfg.n_nodes)
    else:
        e = allocator.allocate_by_node(k, decisions, cfg.n_nodes, cfg.allocation_mode)
    ct = k / (e * params.server_capacity)
    return mt, np.broadcast_to(pt, np.shape(mt)), st, ct, e


def step(state: SystemState, decisions, alloc_logits=None):
    """Advance one slot. Returns ``(next_state, reward, breakdown)``.

    ``breakdown`` is a :class:`DelayBreakdown` of per-vehicle arrays.
    ``alloc_logits`` (one per vehicle) replaces the configured allocator by a
    per-node softmax; the joint-learning ablation uses it.
    """
    if state.done:
        raise EpisodeFinished(f"episode already reached its horizon ({state.config.horizon})")
    x = _check_decisions(state, decisions)
    if x.ndim != 1:
        raise InvalidArgument("step takes one decision vector")
    if alloc_logits is not None:
        alloc_logits = np.asarray(alloc_logits, dtype=float).reshape(-1)
        if alloc_logits.size != state.config.n_vehicles:
            raise InvalidArgument("need one allocation logit per vehicle")
    pos, attached = _moved(state)
    mt, pt, st, ct, e = _delays(state, x, pos, attached, alloc_logits)
    bd = DelayBreakdown(mt, np.array(pt), st, ct)
    reward = -float(np.sum(bd.total))
    t1 = state.t + 1
    data, density, power = _sample_tasks(state.config, state.episode, t1)
    nxt = replace(state, t=t1, positions=pos, attached=attached, hosting=x.copy(),
                  prev_decision=x.copy(), data=data, density=density, power=power)
    return nxt, reward, bd


def step_allocation(state: SystemState, decisions, alloc_logits=None) -> np.ndarray:
    """Resource proportions a step with these decisions would assign (for C3 checks)."""
    x = _check_decisions(state, decisions)
    pos, attached = _moved(state)
    return _delays(state, x, pos, attached, alloc_logits)[4]


def evaluate_population(state: SystemState, population) -> np.ndarray:
    """Rewards of hypothetical steps for each row of ``population`` (P, U); ``state`` is untouched."""
    if state.done:
        raise EpisodeFinished("episode already reached its horizon")
    x = _check_decisions(state, np.atleast_2d(population))
    pos, attached = _moved(state)
    mt, pt, st, ct, _ = _delays(state, x, pos, attached)
    return -np.sum(mt + (pt + st) + ct, axis=1)


class EpisodeLog:
    """CSV episode log: one row per (slot, vehicle) plus a ``*`` summary row per slot."""

    header = ["slot", "vehicle", "decision", "MT", "PT", "ST", "CT"]

    def __init__(self, fh: TextIO):
        self._w = csv.writer(fh, lineterminator="\n")
        self._w.writerow(self.header)

    def record(self, slot: int, decisions, bd: DelayBreakdown) -> None:
        cols = [bd.migration, bd.access, bd.backhaul, bd.computation]
        for u, x in enumerate(np.asarray(decisions).tolist()):
            self._w.writerow([slot, u, x] + [repr(float(c[u])) for c in cols])
        self._w.writerow([slot, "*", ""] + [repr(float(np.sum(c))) for c in cols])
