"""Simulation: scenarios, attackers and the deterministic runner."""

from .harness import (RunResult, SecVerdict, World, check_strong_convergence, measure,
                      metrics_csv, run)
from .scenario import BEHAVIORS, Scenario, load_scenario, parse_scenario

__all__ = ["BEHAVIORS", "RunResult", "Scenario", "SecVerdict", "World",
           "check_strong_convergence", "load_scenario", "measure", "metrics_csv",
           "parse_scenario", "run"]
