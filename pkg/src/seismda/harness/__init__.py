"""Experiment orchestration, metrics and domain-shift diagnostics."""
from .diagnostics import proxy_a_distance, response_stats, write_csv
from .experiment import (ExperimentConfig, ExperimentResult, build_domains, build_fleet,
                         compare, default_config, lambda_sweep, load_config_file,
                         physics_weight_report, properties_table, run_experiment,
                         simulate_fleet, validate_report)
from .metrics import accuracy, confusion, pm1_accuracy, summary

__all__ = ["ExperimentConfig", "ExperimentResult", "accuracy", "build_domains", "build_fleet",
           "compare", "confusion", "default_config", "lambda_sweep", "load_config_file",
           "physics_weight_report", "pm1_accuracy", "properties_table", "proxy_a_distance",
           "response_stats", "run_experiment", "simulate_fleet", "summary", "validate_report",
           "write_csv"]
