"""Distributed clock synchronization by stochastic approximation, with a Monte Carlo harness."""

from .harness import AggregateStats, TrialRecord, run_experiment, run_trial
from .scenario import Scenario, ScenarioError, load_scenario, parse_scenario

__all__ = [
    "AggregateStats",
    "Scenario",
    "ScenarioError",
    "TrialRecord",
    "load_scenario",
    "parse_scenario",
    "run_experiment",
    "run_trial",
]

__version__ = "0.1.0"
