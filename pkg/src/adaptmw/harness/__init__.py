"""Scenario replay and interception benchmark."""
from .bench import BenchReport, bench_interception
from .scenario import Scenario, ScenarioResult, load_scenario, run_scenario

__all__ = ["BenchReport", "Scenario", "ScenarioResult", "bench_interception",
           "load_scenario", "run_scenario"]
