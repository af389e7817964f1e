"""Scenario simulation: synthetic traces, scenario files, the event loop and margin sweeps."""

from .engine import EnergyLackEvent, MetricsReport, RunResult, SweepRow, run, sweep, warmup_statistics
from .scenario import (
    DelayModel,
    Scenario,
    ScenarioError,
    load_scenario,
    reference_scenario,
    reference_scenario_path,
)
from .traces import TraceError, Traces, generate_traces, read_traces, write_traces

__all__ = [
    "DelayModel", "EnergyLackEvent", "MetricsReport", "RunResult", "Scenario", "ScenarioError",
    "SweepRow", "TraceError", "Traces", "generate_traces", "load_scenario", "read_traces",
    "reference_scenario", "reference_scenario_path", "run", "sweep", "warmup_statistics",
    "write_traces",
]
