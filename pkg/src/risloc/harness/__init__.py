"""Configuration-driven experiment runner."""
from .config import ConfigError, ScenarioConfig, build_scenario, load_config, parse_config
from .runner import RunResult, compare_strategies, run_mle, run_sweep, write_outputs

__all__ = ["ConfigError", "RunResult", "ScenarioConfig", "build_scenario", "compare_strategies",
           "load_config", "parse_config", "run_mle", "run_sweep", "write_outputs"]
