"""Experiment configuration schema, loading and resolution into runtime objects."""

from __future__ import annotations

from pathlib import Path
from typing import Literal, Optional, Union

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from ..agents import AgentConfig, GAParams, PolicyKind
from ..delay import DelayParams
from ..env import EnvConfig
from ..errors import ConfigValidationError
from ..topology import build_grid_topology
from ..traces import ROME_BBOX, BoundingBox, parse_trace_stream, resample_to_slots, select_vehicles
from ..traces import synthetic_traces

SWEEP_AXES = ("server_capacity", "migration_coeff", "task_count", "topology_kind",
              "backhaul_rate", "vehicle_count")
Range = tuple[float, float]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class EnvSection(_Strict):
    rows: int = Field(2, ge=1)
    cols: int = Field(2, ge=1)
    region_side: float = Field(2000.0, gt=0)
    connectivity: Literal["high", "middle", "low"] = "high"
    n_vehicles: int = Field(10, ge=1)
    horizon: int = Field(60, ge=1)
    data_mb: Range = (0.5, 1.5)
    density: Range = (200.0, 1000.0)
    power: Range = (0.4, 0.6)
    service_mb: Range = (0.5, 50.0)
    tasks_per_slot: int = Field(1, ge=1)
    # "auto": the convex allocator for SRCL, proportional shares for every baseline
    allocation_mode: Literal["auto", "optimal", "proportional"] = "auto"
    backhaul_rate: float = Field(5e8, gt=0)
    migration_coeff: float = Field(1.5, gt=0)
    transmission_coeff: float = Field(0.3, gt=0)
    noise: float = Field(1e-13, gt=0)
    unit_gain: float = Field(1e-5, gt=0)
    bs_bandwidth: float = Field(20e6, gt=0)
    server_capacity: float = Field(6e10, gt=0)

    @field_validator("data_mb", "density", "power", "service_mb")
    @classmethod
    def _range(cls, v):
        if not 0 < v[0] <= v[1]:
            raise ValueError("range must satisfy 0 < low <= high")
        return v


class AgentSection(_Strict):
    lr_actor: float = Field(1e-5, gt=0)
    lr_critic: float = Field(1e-4, gt=0)
    gamma: float = Field(0.95, gt=0, lt=1)
    omega: float = Field(1e-2, ge=0, le=1)
    delay: int = Field(5, ge=1)
    batch_size: int = Field(512, ge=1)
    replay_capacity: int = Field(10_000, ge=1)
    noise_sigma: float = Field(0.15, ge=0)
    noise_floor: float = Field(0.05, ge=0, le=1)
    clip_norm: float = Field(2.0, gt=0)
    episodes: int = Field(200, ge=1)
    hidden: tuple[int, ...] = (512, 256)
    reward_scale: float = Field(1.0, gt=0)


class TraceSection(_Strict):
    source: Literal["synthetic", "file"] = "synthetic"
    model: Literal["random_waypoint", "linear"] = "random_waypoint"
    speed: float = Field(5.0, ge=0)
    slot_seconds: float = Field(60.0, gt=0)
    path: Optional[str] = None
    start: Optional[float] = None  # epoch seconds; default = first record
    bbox: tuple[float, float, float, float] = (ROME_BBOX.lat_min, ROME_BBOX.lat_max,
                                               ROME_BBOX.lon_min, ROME_BBOX.lon_max)

    @model_validator(mode="after")
    def _file_needs_path(self):
        if self.source == "file" and not self.path:
            raise ValueError("file traces need 'path'")
        return self


class GASection(_Strict):
    pop: int = Field(40, ge=2)
    generations: int = Field(30, ge=0)
    crossover_rate: float = Field(0.9, ge=0, le=1)
    mutation_rate: float = Field(0.05, ge=0, le=1)
    tournament: int = Field(3, ge=1)


class SweepSection(_Strict):
    axis: Literal[SWEEP_AXES]
    values: list[Union[float, str]] = Field(min_length=1)

    @model_validator(mode="before")
    @classmethod
    def _coerce_numeric(cls, data):
        # YAML 1.1 reads "3.0e10" (no exponent sign) as a string
        if isinstance(data, dict) and data.get("axis") != "topology_kind":
            vals = []
            for v in data.get("values") or []:
                try:
                    vals.append(float(v) if isinstance(v, str) else v)
                except ValueError:
                    vals.append(v)
            data = {**data, "values": vals}
        return data

    @model_validator(mode="after")
    def _physical(self):
        for v in self.values:
            if self.axis == "topology_kind":
                if v not in ("high", "middle", "low"):
                    raise ValueError(f"topology_kind values must be high/middle/low, got {v!r}")
            else:
                if isinstance(v, str) or not v > 0:
                    raise ValueError(f"{self.axis} values must be positive numbers, got {v!r}")
                if self.axis in ("task_count", "vehicle_count") and float(v) != int(v):
                    raise ValueError(f"{self.axis} values must be integers, got {v!r}")
        return self


class ExperimentConfig(_Strict):
    scenario: str = "desk"
    policy: PolicyKind = PolicyKind.NM
    env: EnvSection = EnvSection()
    agent: AgentSection = AgentSection()
    traces: TraceSection = TraceSection()
    ga: GASection = GASection()
    sweep: Optional[SweepSection] = None
    seeds: list[int] = Field(default_factory=lambda: [0, 1, 2], min_length=1)
    eval_episodes: int = Field(10, ge=1)
    record_timing: bool = False
    output_dir: str = "runs/default"

    def to_plain(self) -> dict:
        return self.model_dump(mode="json")


def _format_errors(err: ValidationError) -> ConfigValidationError:
    first = err.errors()[0]
    path = ".".join(str(p) for p in first["loc"])
    return ConfigValidationError(f"{first['msg']} (and {err.error_count() - 1} more)"
                                 if err.error_count() > 1 else first["msg"], path)


def parse_config(data: dict) -> ExperimentConfig:
    if isinstance(data, dict) and set(data) >= {"config"} and "scenario" not in data:
        data = data["config"]  # a run manifest
    try:
        return ExperimentConfig.model_validate(data or {})
    except ValidationError as err:
        raise _format_errors(err) from None


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        data = yaml.safe_load(fh)
    if data is not None and not isinstance(data, dict):
        raise ConfigValidationError("top level must be a mapping")
    return parse_config(data)


def with_overrides(cfg: ExperimentConfig, **fields) -> ExperimentConfig:
    data = cfg.to_plain()
    for key, value in fields.items():
        if value is not None:
            data[key] = value
    return parse_config(data)


def apply_sweep_value(env: EnvSection, axis: str | None, value) -> EnvSection:
    if axis is None:
        return env
    key = {
        "server_capacity": "server_capacity",
        "migration_coeff": "migration_coeff",
        "task_count": "tasks_per_slot",
        "topology_kind": "connectivity",
        "backhaul_rate": "backhaul_rate",
        "vehicle_count": "n_vehicles",
    }[axis]
    if key in ("tasks_per_slot", "n_vehicles"):
        value = int(value)
    return env.model_copy(update={key: value})


def allocation_mode_for(env: EnvSection, policy: PolicyKind) -> str:
    if env.allocation_mode != "auto":
        return env.allocation_mode
    return "optimal" if policy is PolicyKind.SRCL else "proportional"


def build_env_config(env: EnvSection, policy: PolicyKind, seed: int) -> EnvConfig:
    topo = build_grid_topology(env.rows, env.cols, env.region_side, env.connectivity)
    params = DelayParams(env.backhaul_rate, env.migration_coeff, env.transmission_coeff, env.noise,
                         env.unit_gain, env.bs_bandwidth, env.server_capacity)
    return EnvConfig(topo, params, env.n_vehicles, env.horizon, tuple(env.data_mb), tuple(env.density),
                     tuple(env.power), tuple(env.service_mb), env.tasks_per_slot,
                     allocation_mode_for(env, policy), seed)


def build_agent_config(agent: AgentSection, seed: int) -> AgentConfig:
    return AgentConfig(**agent.model_dump(), seed=seed)


def build_ga_params(ga: GASection) -> GAParams:
    return GAParams(ga.pop, ga.generations, ga.crossover_rate, ga.mutation_rate, ga.tournament)


def derived_seed(*parts: int) -> int:
    return int(np.random.SeedSequence([int(p) for p in parts]).generate_state(1)[0])


TRAIN_STREAM, EVAL_STREAM = 1, 2
EVAL_EPISODE_OFFSET = 1_000_000


class TraceProvider:
    """Trace sets for training and held-out evaluation episodes.

    Synthetic traces are regenerated per episode from seeds derived from the
    run seed; file traces are resampled once and reused for every episode.
    """

    def __init__(self, section: TraceSection, env: EnvSection, seed: int):
        self.section, self.env, self.seed = section, env, seed
        self.length = env.horizon + 1
        self._file_traces = None
        if section.source == "file":
            self._file_traces = load_file_traces(section, env)

    def _synthetic(self, stream: int, index: int):
        s = self.section
        return synthetic_traces(s.model, self.env.n_vehicles, self.length, self.env.region_side, s.speed,
                                derived_seed(self.seed, stream, index), s.slot_seconds)

    def train(self, episode: int):
        return self._file_traces if self._file_traces is not None else self._synthetic(TRAIN_STREAM, episode)

    def eval(self, index: int):
        return self._file_traces if self._file_traces is not None else self._synthetic(EVAL_STREAM, index)


def open_trace_text(path):
    path = Path(path)
    if path.suffix == ".gz":
        import gzip
        return gzip.open(path, "rt")
    if path.suffix == ".bz2":
        import bz2
        return bz2.open(path, "rt")
    return open(path)


def load_file_traces(section: TraceSection, env: EnvSection, n_slots: int | None = None):
    with open_trace_text(section.path) as fh:
        records = parse_trace_stream(fh)
    start = section.start if section.start is not None else min(r.timestamp for r in records)
    T = n_slots or env.horizon + 1
    end = start + section.slot_seconds * (T - 1)
    keep = set(select_vehicles(records, start, end, env.n_vehicles))
    chosen = [r for r in records if r.vehicle_id in keep]
    return resample_to_slots(chosen, BoundingBox(*section.bbox), env.region_side, section.slot_seconds, T, start)
