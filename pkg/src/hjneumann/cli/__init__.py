"""Command line interface: scenario configs, pipeline, tables, figures."""

from .config import ScenarioConfig, build_scenario
from .pipeline import RunResult, run_scenario
from .scenarios import BUILTINS

__all__ = ["BUILTINS", "RunResult", "ScenarioConfig", "build_scenario", "run_scenario"]
