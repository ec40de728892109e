"""Experiment harness: metrics, sweeps, configuration, figures and CLI."""

from .config import ExperimentConfig, SweepSpec, load_config
from .experiment import load_reports, run_experiment
from .metrics import EvalReport, cdf_of_theta, evaluate

__all__ = ["EvalReport", "ExperimentConfig", "SweepSpec", "cdf_of_theta", "evaluate",
           "load_config", "load_reports", "run_experiment"]
