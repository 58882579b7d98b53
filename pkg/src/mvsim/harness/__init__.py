"""Configuration, scenario presets, the time loop and the verification drivers."""

from .config import RunConfig, load_config, parse_config, serialize_config
from .driver import RunResult, run_simulation

__all__ = ["RunConfig", "RunResult", "load_config", "parse_config", "run_simulation", "serialize_config"]
