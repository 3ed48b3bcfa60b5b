"""Experiment harness: oracle, config-driven runs and reports."""
from .experiment import (OUTCOMES, ConfigError, ExperimentConfig, ExperimentResult, MetricsSummary, RunResult,
                         classify_outcome, prepare_candidates, resolve_topology, run_experiment, run_one,
                         summarize)
from .oracle import GUARD, OracleResult, SearchTooLarge, brute_force_optimum, oracle_config, rollout_sequence
from .report import report, write_all, write_reports

__all__ = [
    "GUARD", "OUTCOMES", "ConfigError", "ExperimentConfig", "ExperimentResult", "MetricsSummary",
    "OracleResult", "RunResult", "SearchTooLarge", "brute_force_optimum", "classify_outcome",
    "oracle_config", "prepare_candidates", "report", "resolve_topology", "rollout_sequence",
    "run_experiment", "run_one", "summarize", "write_all", "write_reports",
]
