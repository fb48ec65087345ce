import copy
import os
from typing import Any, Dict, Iterable, Optional

import yaml


class ConfigError(ValueError):
    """Raised when a run configuration cannot be read or is invalid."""


def default_config() -> Dict[str, Any]:
    """Built-in defaults; every key a run configuration may set."""
    return {
        "seed": None,
        "workers": os.cpu_count() or 1,
        "output_directory": "results",
        "log_file": None,
        "dataset": {
            "path": None,
            "missing_marker": "NA",
            "schema": {"binary": [], "continuous": []},
        },
        "mcmc": {
            "burn_in": 20000,
            "iterations": 20000,
            "thin": 20,
            "k_new": 1,
            "informative_censoring": {"phi": 0.0, "eta": 1.0},
        },
        "prior": {
            "a_beta": None,
            "B_beta": None,
            "c_beta": None,
            "a_sigma": 3.0,
            "b_sigma": 0.1,
            "a_pi": 1.0,
            "b_pi": 1.0,
            "a_mu": 0.0,
            "b_mu": 0.5,
            "a_tau": 2.0,
            "b_tau": 1.0,
            "a_theta": 1.0,
            "b_theta": 1.0,
            "a_omega": 1.0,
            "b_omega": 1.0,
        },
        "estimand": {
            "nu_grid": [0.0, 1.0, 2.0, 3.0],
            "rho_grid": [0.3, 0.6],
            "subgroups": [],
            "cohort_size": 1000,
            "cri_level": 0.99,
            "integrand": "mixture",
            "curve_times": [],
        },
        "sensitivity": {
            "psi_grid": [[-0.25, -0.25], [-0.25, 0.0], [-0.25, 0.25],
                         [0.0, -0.25], [0.0, 0.0], [0.0, 0.25],
                         [0.25, -0.25], [0.25, 0.0], [0.25, 0.25]],
        },
        "simulation": {
            "scenario": 1,
            "c_star": None,
            "n": 500,
            "replicates": 100,
            "model": "EDPMM",
            "cri_level": 0.95,
            "truth_draws": 1000000,
            "truth_bootstrap": 100,
            "nu_grid": None,
            "rho_grid": None,
        },
        "draws": {"path": None},
    }


def deep_merge(base: Dict[str, Any], update: Dict[str, Any]) -> Dict[str, Any]:
    """Recursively overlay ``update`` on a copy of ``base``."""
    merged = copy.deepcopy(base)
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


class ConfigManager:
    """Manages a YAML run configuration layered over the built-in defaults."""

    def __init__(self, config_file: Optional[str] = None):
        self.config_file = config_file
        self.config = self._load_config()

    def _load_config(self) -> Dict[str, Any]:
        """Load the configuration file, or use defaults when none was given."""
        if self.config_file is None:
            return default_config()
        if not os.path.exists(self.config_file):
            raise ConfigError(f"Config file {self.config_file} not found")
        try:
            with open(self.config_file, "r", encoding="utf-8") as f:
                loaded = yaml.safe_load(f)
        except yaml.YAMLError as exc:
            raise ConfigError(f"Cannot parse config file {self.config_file}: {exc}")
        if loaded is None:
            loaded = {}
        if not isinstance(loaded, dict):
            raise ConfigError(f"Config file {self.config_file} must contain a mapping at top level")
        return deep_merge(default_config(), loaded)

    def save_config(self, path: Optional[str] = None) -> None:
        """Write the effective configuration as YAML."""
        path = path or self.config_file
        if path is None:
            raise ConfigError("No path to save the configuration to")
        directory = os.path.dirname(path)
        if directory:
            os.makedirs(directory, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            yaml.dump(self.config, f, default_flow_style=False, sort_keys=True)

    def get_setting(self, *keys: str) -> Any:
        """Get a setting value using nested keys."""
        value = self.config
        for key in keys:
            if not isinstance(value, dict):
                return None
            value = value.get(key)
            if value is None:
                return None
        return value

    def set_setting(self, value: Any, *keys: str) -> None:
        """Set a setting value using nested keys."""
        config = self.config
        for key in keys[:-1]:
            config = config.setdefault(key, {})
        config[keys[-1]] = value

    def apply_overrides(self, overrides: Iterable[str]) -> None:
        """Apply ``section.key=value`` strings; values are parsed as YAML scalars or lists."""
        for item in overrides or []:
            if "=" not in item:
                raise ConfigError(f"Override '{item}' must look like section.key=value")
            path, raw = item.split("=", 1)
            keys = [k for k in path.strip().split(".") if k]
            if not keys:
                raise ConfigError(f"Override '{item}' has an empty key")
            try:
                value = yaml.safe_load(raw)
            except yaml.YAMLError as exc:
                raise ConfigError(f"Cannot parse override value in '{item}': {exc}")
            self.set_setting(value, *keys)

    def resolve_seed(self, cli_seed: Optional[int] = None) -> int:
        """Seed from the command line, then the config file, then RESQRL_SEED."""
        for candidate in (cli_seed, self.get_setting("seed"), os.environ.get("RESQRL_SEED")):
            if candidate is None or candidate == "":
                continue
            try:
                seed = int(candidate)
            except (TypeError, ValueError):
                raise ConfigError(f"Seed must be an integer, got {candidate!r}")
            if seed < 0:
                raise ConfigError(f"Seed must be non-negative, got {seed}")
            self.set_setting(seed, "seed")
            return seed
        raise ConfigError("A seed is required: pass --seed, set 'seed' in the config or RESQRL_SEED")

    def resolve_workers(self) -> int:
        """Worker processes; null or 0 in the config means every available core."""
        workers = self.get_setting("workers")
        if not workers:
            workers = os.cpu_count() or 1
        try:
            workers = int(workers)
        except (TypeError, ValueError):
            raise ConfigError(f"workers must be a positive integer, got {workers!r}")
        if workers < 1:
            raise ConfigError(f"workers must be a positive integer, got {workers}")
        self.set_setting(workers, "workers")
        return workers
