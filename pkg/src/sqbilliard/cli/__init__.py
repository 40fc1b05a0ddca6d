"""Scenario runner: configuration, presets and run artifacts."""
from .config import ConfigError, Scenario, load_scenario, parse_scenario
from .presets import get_preset, list_presets

__all__ = ["ConfigError", "Scenario", "load_scenario", "parse_scenario", "get_preset", "list_presets"]
