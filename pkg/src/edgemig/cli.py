"""Command-line entry point: ``edgemig {train,eval,sweep,trace-convert,selftest}``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .errors import ConfigValidationError, EmptyInputError, InvalidArgument

EXIT_OK, EXIT_VALIDATION, EXIT_RUNTIME = 0, 2, 3

log = logging.getLogger("edgemig")


def _common(p):
    p.add_argument("--config", help="YAML experiment config or run manifest")
    p.add_argument("--seed", type=int, help="run a single seed instead of the configured list")
    p.add_argument("--out", help="output directory")
    p.add_argument("--policy", help="SRCL, DDPG, JSR, AM, NM or GA")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--trace", help="Rome-format trace file (.txt, .gz, .bz2)")
    src.add_argument("--synthetic", choices=["random_waypoint", "linear"])


def _load(args):
    from .harness.config import ExperimentConfig, load_config, with_overrides

    cfg = load_config(args.config) if args.config else ExperimentConfig()
    traces = None
    if args.trace:
        traces = {**cfg.traces.model_dump(mode="json"), "source": "file", "path": args.trace}
    elif args.synthetic:
        traces = {**cfg.traces.model_dump(mode="json"), "source": "synthetic", "model": args.synthetic}
    return with_overrides(cfg, policy=args.policy, output_dir=args.out,
                          seeds=[args.seed] if args.seed is not None else None, traces=traces)


def cmd_sweep(args):
    from .harness.experiment import emit_plot_data, run_experiment

    cfg = _load(args)
    path = run_experiment(cfg)
    emit_plot_data(path)
    print(path)


def cmd_train(args):
    from .agents import train
    from .harness.config import TraceProvider, build_agent_config, build_env_config
    from .harness.experiment import write_rows
    from .nn import save_checkpoint

    cfg = _load(args)
    if not cfg.policy.learned:
        raise ConfigValidationError(f"{cfg.policy.value} has nothing to train", "policy")
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    for seed in cfg.seeds:
        env_config = build_env_config(cfg.env, cfg.policy, seed)
        provider = TraceProvider(cfg.traces, cfg.env, seed)
        result = train(env_config, provider.train, build_agent_config(cfg.agent, seed), cfg.policy,
                       progress=lambda e, r: log.info("episode %d reward %.3f", e, r))
        ckpt = save_checkpoint(out / f"{cfg.policy.value}_seed{seed}.npz", result.agent.actor, seed,
                               {"policy": cfg.policy.value})
        rows = [[c["episode"], c["mean_reward"], c["migration_frequency"]]
                for c in result.curve_rows(env_config.horizon)]
        write_rows(out / f"{cfg.policy.value}_seed{seed}_curve.csv",
                   ["episode", "mean_reward", "migration_frequency"], rows)
        print(ckpt)


def cmd_eval(args):
    from .agents import LearnedPolicy
    from .harness.config import TraceProvider, build_env_config
    from .harness.experiment import (METRICS_FILE, MetricsRow, evaluate_policy, make_policy, summarize,
                                     write_rows)
    from .nn import load_checkpoint

    cfg = _load(args)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for seed in cfg.seeds:
        env_config = build_env_config(cfg.env, cfg.policy, seed)
        provider = TraceProvider(cfg.traces, cfg.env, seed)
        if cfg.policy.learned:
            if not args.checkpoint:
                raise ConfigValidationError("learned policies need --checkpoint", "checkpoint")
            actor, _ = load_checkpoint(args.checkpoint)
            policy = LearnedPolicy(actor, env_config.n_vehicles, env_config.n_nodes)
        else:
            policy = make_policy(cfg.policy, cfg, seed)
        stats = evaluate_policy(env_config, provider, policy, cfg.eval_episodes)
        rows.append(summarize(cfg, cfg.policy, "none", "default", seed, env_config, stats))
    cols = MetricsRow.columns()
    path = out / METRICS_FILE
    write_rows(path, cols, [[getattr(r, c) for c in cols] for r in rows])
    print(path)


def cmd_trace_convert(args):
    from .traces import (ROME_BBOX, parse_trace_stream, resample_to_slots, select_vehicles,
                         write_traces_csv)
    from .harness.config import open_trace_text

    with open_trace_text(args.trace) as fh:
        records = parse_trace_stream(fh)
    start = args.start if args.start is not None else min(r.timestamp for r in records)
    end = start + args.slot_seconds * (args.slots - 1)
    if args.n_vehicles:
        keep = set(select_vehicles(records, start, end, args.n_vehicles))
        records = [r for r in records if r.vehicle_id in keep]
    traces = resample_to_slots(records, ROME_BBOX, args.region_side, args.slot_seconds, args.slots, start)
    with open(args.out, "w", newline="") as fh:
        write_traces_csv(traces, fh)
    log.info("parsed %d records (%d skipped), wrote %d vehicles", len(records), records_skipped(records),
             len(traces))
    print(args.out)


def records_skipped(records) -> int:
    return getattr(records, "skipped", 0)


def cmd_selftest(args):
    """Fast sanity pass over the core numerics; exits non-zero on any failure."""
    from . import allocator
    from .nn import NetworkSpec, backward, forward, init_params

    rng = np.random.default_rng(0)
    checks = []
    worst = 0.0
    for _ in range(50):
        k = rng.uniform(1e8, 1e10, size=rng.integers(1, 5))
        e = allocator.optimal_allocation(k)
        worst = max(worst, allocator.kkt_residual(k, e))
        if allocator.objective(k, e) > allocator.objective(k, allocator.oracle_allocation(k, 2000)):
            worst = np.inf
    checks.append(("allocator optimum and KKT", worst < 1e-9))

    spec = NetworkSpec((8, 16, 4))
    params = init_params(spec, 1)
    x, g = rng.normal(size=8), rng.normal(size=4)
    grads, _ = backward(params, x, g)
    h = 1e-5
    w = params.weights[0]
    num = np.zeros_like(w)
    for idx in np.ndindex(w.shape):
        old = w[idx]
        w[idx] = old + h
        fp = forward(params, x) @ g
        w[idx] = old - h
        fm = forward(params, x) @ g
        w[idx] = old
        num[idx] = (fp - fm) / (2 * h)
    rel = np.max(np.abs(num - grads[0])) / max(np.max(np.abs(num)), 1e-12)
    checks.append(("backprop vs finite differences", rel < 1e-4))

    ok = True
    for name, passed in checks:
        print(f"{'PASS' if passed else 'FAIL'}  {name}")
        ok &= passed
    if not ok:
        raise RuntimeError("selftest failed")


def build_parser():
    p = argparse.ArgumentParser(prog="edgemig", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name, fn, helptext in [
        ("train", cmd_train, "train a learning policy and write checkpoints"),
        ("eval", cmd_eval, "evaluate a policy on held-out episodes"),
        ("sweep", cmd_sweep, "run a configured sweep and emit plot data"),
    ]:
        sp = sub.add_parser(name, help=helptext)
        _common(sp)
        if name == "eval":
            sp.add_argument("--checkpoint", help="actor checkpoint for learned policies")
        sp.set_defaults(func=fn)
    tc = sub.add_parser("trace-convert", help="resample a raw GPS trace file into slotted CSV")
    tc.add_argument("--trace", required=True)
    tc.add_argument("--out", required=True)
    tc.add_argument("--slots", type=int, default=241)
    tc.add_argument("--slot-seconds", type=float, default=60.0)
    tc.add_argument("--start", type=float)
    tc.add_argument("--n-vehicles", type=int)
    tc.add_argument("--region-side", type=float, default=4000.0)
    tc.set_defaults(func=cmd_trace_convert)
    st = sub.add_parser("selftest", help="quick numeric self-check")
    st.set_defaults(func=cmd_selftest)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (ConfigValidationError, InvalidArgument, EmptyInputError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_VALIDATION
    except Exception as err:  # noqa: BLE001
        print(f"error: {type(err).__name__}: {err}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
