"""Agent-based simulator of human sex-ratio dynamics driven by individual quality."""

from sexratio.params import ConfigError, SimConfig, validate
from sexratio.scenarios import Scenario, builtin, load_scenario

__all__ = ["ConfigError", "SimConfig", "Scenario", "builtin", "load_scenario", "validate"]
__version__ = "0.1.0"
