"""Scenario orchestration, configuration and persisted outputs."""

from .config import SCENARIOS, ScenarioConfig, config_from_mapping, load_config
from .output import emit_outputs, verify_outputs
from .scenarios import (ScenarioResult, run_ensemble, run_evolve, run_gamma_scan, run_scenario,
                        run_steadiness, run_tunability, run_typicality)

__all__ = ["SCENARIOS", "ScenarioConfig", "ScenarioResult", "config_from_mapping", "emit_outputs",
           "load_config", "run_ensemble", "run_evolve", "run_gamma_scan", "run_scenario",
           "run_steadiness", "run_tunability", "run_typicality", "verify_outputs"]
