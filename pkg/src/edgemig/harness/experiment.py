"""Experiment orchestration: per (sweep value, seed) cells, metrics rows and manifests."""

from __future__ import annotations

import csv
import logging
import platform
import statistics
import time
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
import yaml

from .. import __version__
from .. import env as mdp
from ..agents import AgentConfig, GAPolicy, LearnedPolicy, PolicyKind, run_episode, train
from ..agents import am_policy, nm_policy
from ..errors import ConfigValidationError
from ..nn import save_checkpoint
from .config import (EVAL_EPISODE_OFFSET, ExperimentConfig, TraceProvider, apply_sweep_value,
                     build_agent_config, build_env_config, build_ga_params, derived_seed)

log = logging.getLogger(__name__)

METRICS_FILE = "metrics.csv"
CURVES_FILE = "curves.csv"
TIMING_FILE = "timing.csv"
MANIFEST_FILE = "manifest.yaml"


@dataclass
class MetricsRow:
    scenario: str
    policy: str
    sweep_axis: str
    sweep_value: str
    seed: int
    total_delay: float  # mean system delay per slot, s
    mt: float
    ht: float
    ct: float
    migration_frequency: float  # migrations per episode
    response_delay: float  # mean per-task delay, s
    decision_time_ms: float = float("nan")

    @classmethod
    def columns(cls) -> list[str]:
        # wall-clock timing is not reproducible and lives in timing.csv instead
        return [f.name for f in fields(cls) if f.name != "decision_time_ms"]


def _fmt(v):
    return repr(float(v)) if isinstance(v, (float, np.floating)) else str(v)


def _value_key(v):
    try:
        return (0, float(v), "")
    except ValueError:
        return (1, 0.0, str(v))


def make_policy(kind: PolicyKind, cfg: ExperimentConfig, seed: int, actor=None, n_vehicles=0, n_nodes=0):
    if kind is PolicyKind.AM:
        return am_policy
    if kind is PolicyKind.NM:
        return nm_policy
    if kind is PolicyKind.GA:
        return GAPolicy(build_ga_params(cfg.ga), seed=derived_seed(seed, 0x6A))
    return LearnedPolicy(actor, n_vehicles, n_nodes)


@dataclass
class CellResult:
    row: MetricsRow
    curve: list[dict]
    decision_seconds: list[float]
    slot_ct: list[float]


def evaluate_policy(env_config: mdp.EnvConfig, provider: TraceProvider, policy, episodes: int,
                    time_decisions: bool = False):
    stats = []
    for k in range(episodes):
        stats.append(run_episode(env_config, provider.eval(k), policy, EVAL_EPISODE_OFFSET + k,
                                 time_decisions=time_decisions))
    return stats


def summarize(cfg: ExperimentConfig, kind: PolicyKind, axis: str, value, seed: int, env_config, stats):
    slots = env_config.horizon * len(stats)
    mt = sum(s.migration for s in stats) / slots
    ht = sum(s.access + s.backhaul for s in stats) / slots
    ct = sum(s.computation for s in stats) / slots
    total = mt + ht + ct
    timing = [t for s in stats for t in s.decision_seconds]
    return MetricsRow(cfg.scenario, kind.value, axis, str(value), seed, total, mt, ht, ct,
                      sum(s.migrations for s in stats) / len(stats), total / env_config.n_vehicles,
                      1e3 * statistics.median(timing) if timing else float("nan"))


def run_cell(cfg: ExperimentConfig, value, seed: int, out_dir: Path | None = None,
             progress: Callable | None = None) -> CellResult:
    kind = PolicyKind(cfg.policy)
    axis = cfg.sweep.axis if cfg.sweep else "none"
    env_section = apply_sweep_value(cfg.env, cfg.sweep.axis if cfg.sweep else None, value)
    env_config = build_env_config(env_section, kind, seed)
    provider = TraceProvider(cfg.traces, env_section, seed)
    curve, actor = [], None
    if kind.learned:
        agent_cfg = build_agent_config(cfg.agent, seed)
        result = train(env_config, provider.train, agent_cfg, kind, progress=progress)
        curve = result.curve_rows(env_config.horizon)
        actor = result.agent.actor
        if out_dir is not None:
            ckpt = out_dir / "checkpoints"
            ckpt.mkdir(parents=True, exist_ok=True)
            save_checkpoint(ckpt / f"{kind.value}_{value}_{seed}.npz", actor, seed,
                            {"policy": kind.value, "sweep_value": str(value)})
    policy = make_policy(kind, cfg, seed, actor, env_config.n_vehicles, env_config.n_nodes)
    stats = evaluate_policy(env_config, provider, policy, cfg.eval_episodes, cfg.record_timing)
    row = summarize(cfg, kind, axis, value, seed, env_config, stats)
    timing = [t for s in stats for t in s.decision_seconds]
    return CellResult(row, curve, timing, [c for s in stats for c in s.slot_ct])


def write_manifest(cfg: ExperimentConfig, path: Path) -> None:
    manifest = {
        "config": cfg.to_plain(),
        "resolved": {
            "package_version": __version__,
            "numpy_version": np.__version__,
            "python": platform.python_version(),
            "noise_schedule": "sigma_e = noise_sigma * max(noise_floor, 1 - e / episodes)",
            "adam": {"beta1": 0.9, "beta2": 0.999, "eps": 1e-8},
            "vehicle_selection": "file traces: vehicles with most records in window",
            "eval_episode_offset": EVAL_EPISODE_OFFSET,
            "agent_defaults": AgentConfig().to_dict(),
        },
    }
    with open(path, "w") as fh:
        fh.write("# edgemig run manifest; reload with --config to reproduce metrics.csv\n")
        yaml.safe_dump(manifest, fh, sort_keys=True)


def _writable_dir(path) -> Path:
    out = Path(path)
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_probe"
        probe.write_text("")
        probe.unlink()
    except OSError as err:
        raise OSError(f"output directory {out} is not writable: {err}") from err
    return out


def write_rows(path: Path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def run_experiment(cfg: ExperimentConfig, progress: Callable | None = None) -> Path:
    """Run every (sweep value, seed) cell and write metrics, curves, timing and manifest.

    Returns the metrics CSV path. Rows are sorted by (policy, sweep value,
    seed), so reruns of the same manifest produce identical bytes.
    """
    out = _writable_dir(cfg.output_dir)
    values = list(cfg.sweep.values) if cfg.sweep else ["default"]
    results = []
    for value in values:
        for seed in cfg.seeds:
            t0 = time.perf_counter()
            res = run_cell(cfg, value, seed, out, progress)
            log.info("%s value=%s seed=%d total=%.4f (%.1fs)", cfg.policy.value, value, seed,
                     res.row.total_delay, time.perf_counter() - t0)
            results.append(res)
    results.sort(key=lambda r: (r.row.policy, _value_key(r.row.sweep_value), r.row.seed))

    cols = MetricsRow.columns()
    metrics_path = out / METRICS_FILE
    write_rows(metrics_path, cols, [[getattr(r.row, c) for c in cols] for r in results])
    curve_rows = [[r.row.policy, r.row.sweep_value, r.row.seed, c["episode"], c["mean_reward"],
                   c["migration_frequency"]] for r in results for c in r.curve]
    if curve_rows:
        write_rows(out / CURVES_FILE, ["policy", "sweep_value", "seed", "episode", "mean_reward",
                                       "migration_frequency"], curve_rows)
    if cfg.record_timing:
        timing = []
        for r in results:
            ms = np.asarray(r.decision_seconds[10:]) * 1e3
            if ms.size:
                timing.append([r.row.policy, r.row.sweep_value, r.row.seed, float(np.median(ms)),
                               float(np.percentile(ms, 95)), ms.size])
        write_rows(out / TIMING_FILE, ["policy", "sweep_value", "seed", "median_ms", "p95_ms", "n"], timing)
    write_manifest(cfg, out / MANIFEST_FILE)
    return metrics_path


def read_metrics(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def sweep_compare(sources: Sequence, out_path, metric: str = "total_delay") -> Path:
    """Wide table of seed-medians: one row per sweep value, one column per policy.

    ``sources`` are experiment configs (run here) or existing metrics paths.
    """
    tables = []
    for src in sources:
        path = run_experiment(src) if isinstance(src, ExperimentConfig) else Path(src)
        tables.append(read_metrics(path))
    if not tables:
        raise ConfigValidationError("nothing to compare", "sources")
    axes = {r["sweep_axis"] for t in tables for r in t}
    if len(axes) > 1:
        raise ConfigValidationError(f"mismatched sweep axes {sorted(axes)}", "sweep.axis")
    value_sets = [sorted({r["sweep_value"] for r in t}, key=_value_key) for t in tables]
    if any(v != value_sets[0] for v in value_sets):
        raise ConfigValidationError("sweep values differ between policies", "sweep.values")
    if any(metric not in r for t in tables for r in t):
        raise ConfigValidationError(f"unknown metric column {metric!r}", "metric")
    cells: dict[tuple[str, str], list[float]] = {}
    for t in tables:
        for r in t:
            cells.setdefault((r["sweep_value"], r["policy"]), []).append(float(r[metric]))
    policies = sorted({p for _, p in cells})
    rows = [[v] + [statistics.median(cells[(v, p)]) if (v, p) in cells else "" for p in policies]
            for v in value_sets[0]]
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    write_rows(out_path, ["sweep_value"] + policies, rows)
    return out_path


@dataclass
class DecisionTiming:
    median_ms: float
    p95_ms: float
    n: int


def collect_states(env_config: mdp.EnvConfig, traces, n: int, driver=nm_policy) -> list[mdp.SystemState]:
    """At least ``n`` states visited by ``driver``, cycling through episodes as needed."""
    states, episode = [], 0
    while len(states) < n:
        state = mdp.reset(env_config, traces, episode)
        while not state.done and len(states) < n:
            states.append(state)
            state, _, _ = mdp.step(state, driver(state))
        episode += 1
    return states


def measure_decision_time(policy, states: Sequence[mdp.SystemState], warmup: int = 10) -> DecisionTiming:
    """Wall-clock per-decision statistics, excluding the first ``warmup`` calls and env stepping."""
    if len(states) < 100:
        raise ConfigValidationError(f"need >= 100 states, got {len(states)}", "states")
    times = []
    for s in states:
        t0 = time.perf_counter()
        policy(s)
        times.append(time.perf_counter() - t0)
    ms = np.asarray(times[warmup:]) * 1e3
    return DecisionTiming(float(np.median(ms)), float(np.percentile(ms, 95)), int(ms.size))


def emit_plot_data(metrics_path, out_dir=None) -> dict[str, Path]:
    """Tidy per-figure CSVs from a metrics file (and its sibling curves file, if any)."""
    metrics_path = Path(metrics_path)
    rows = read_metrics(metrics_path)
    need = {"policy", "sweep_value", "seed", "total_delay", "mt", "ht", "ct", "migration_frequency",
            "response_delay"}
    have = set(rows[0]) if rows else set()
    if not rows or need - have:
        raise ConfigValidationError(f"metrics file lacks columns {sorted(need - have)}", str(metrics_path))
    out = Path(out_dir) if out_dir else metrics_path.parent / "plots"
    out.mkdir(parents=True, exist_ok=True)
    groups: dict[tuple[str, str], list[dict]] = {}
    for r in rows:
        groups.setdefault((r["policy"], r["sweep_value"]), []).append(r)
    keys = sorted(groups, key=lambda k: (k[0], _value_key(k[1])))

    def med(rs, col):
        return statistics.median(float(r[col]) for r in rs)

    paths = {}
    breakdown = []
    for k in keys:
        mt, ht, ct = (med(groups[k], c) for c in ("mt", "ht", "ct"))
        breakdown.append([k[0], k[1], mt, ht, ct, mt + ht + ct])
    paths["breakdown"] = out / "breakdown.csv"
    write_rows(paths["breakdown"], ["policy", "sweep_value", "MT", "HT", "CT", "total"], breakdown)
    sweep = [[k[0], k[1], med(groups[k], "total_delay"), med(groups[k], "migration_frequency"),
              med(groups[k], "response_delay")] for k in keys]
    paths["sweep"] = out / "sweep.csv"
    write_rows(paths["sweep"], ["policy", "sweep_value", "total_delay", "migration_frequency",
                                "response_delay"], sweep)
    curves_path = metrics_path.parent / CURVES_FILE
    conv = []
    if curves_path.exists():
        cur: dict[tuple[str, int], list[float]] = {}
        for r in read_metrics(curves_path):
            cur.setdefault((r["policy"], int(r["episode"])), []).append(float(r["mean_reward"]))
        conv = [[p, e, statistics.median(v)] for (p, e), v in sorted(cur.items())]
    paths["convergence"] = out / "convergence.csv"
    write_rows(paths["convergence"], ["episode", "policy", "reward"], [[e, p, v] for p, e, v in conv])
    return paths
