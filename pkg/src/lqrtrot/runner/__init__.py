"""Scenario configs, the 400 Hz control pipeline, closed-loop runs, logs and plots."""
from .config import (CommandPoint, ConfigError, ControllerConfig, NoiseConfig, PlannerConfig,
                     Scenario, SimConfig, load_scenario, scenario_from_dict, shipped_scenario,
                     shipped_scenarios)
from .controller import CONTROL_PERIOD, STAGES, LocomotionController, SolverFault, TickOutput
from .log import LogSchemaError, read_gains, read_log
from .plots import emit_plots
from .run import (BenchmarkReport, RunSummary, SweepResult, benchmark, benchmark_planner,
                  run_scenario, sweep_swing)

__all__ = [
    "BenchmarkReport", "CONTROL_PERIOD", "CommandPoint", "ConfigError", "ControllerConfig",
    "LocomotionController", "LogSchemaError", "NoiseConfig", "PlannerConfig", "RunSummary",
    "STAGES", "Scenario", "SimConfig", "SolverFault", "SweepResult", "TickOutput", "benchmark",
    "benchmark_planner", "emit_plots", "load_scenario", "read_gains", "read_log", "run_scenario",
    "scenario_from_dict", "shipped_scenario", "shipped_scenarios", "sweep_swing",
]
