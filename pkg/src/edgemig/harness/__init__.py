"""Experiment configuration, sweeps, metrics and plot-data export."""

from .config import (SWEEP_AXES, ExperimentConfig, TraceProvider, build_agent_config, build_env_config,
                     load_config, parse_config, with_overrides)
from .experiment import (DecisionTiming, MetricsRow, emit_plot_data, measure_decision_time, read_metrics,
                         run_experiment, sweep_compare)

__all__ = [
    "SWEEP_AXES", "DecisionTiming", "ExperimentConfig", "MetricsRow", "TraceProvider", "build_agent_config",
    "build_env_config", "emit_plot_data", "load_config", "measure_decision_time", "parse_config",
    "read_metrics", "run_experiment", "sweep_compare", "with_overrides",
]
