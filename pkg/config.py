"""
Run configuration for the calibration CLI.
Loads a YAML file, merges it over the defaults and applies `key=value`
overrides from the command line. Keys are addressed with dot notation,
e.g. config.get('base.epochs').
"""

import logging
from copy import deepcopy
from pathlib import Path
from typing import Any, Dict, Iterable, Optional

import yaml

from network import TrainConfig

logger = logging.getLogger(__name__)

# Default configuration (can be overridden by a config file and --set)
DEFAULT_CONFIG = {
    'seed': None,               # required by every stochastic command
    'data_dir': '.',
    'paths': {
        'sim_database': 'sim_database.csv',
        'shots': 'shots.csv',
        'base_model': 'base_model.json',
        'calibrated_model': 'calibrated_model.json',
        'learning_curve': 'learning_curve.csv',
        'actual_vs_predicted': 'actual_vs_predicted.csv',
    },
    'generate': {
        'n_sim': 20000,
        'n_shots': 47,
    },
    'generator': {
        'noise_sd': [0.05, 0.003, 0.02, 0.03, 0.02, 0.03, 0.0005],
        'warp': {
            'yield_offset': 0.5,
            'yield_asymmetry_slope': 1.5,
            'tion_scale': 0.85,
            'tion_offset': 0.3,
            'bang_time_shift': 0.1,
            'burnwidth_scale': 1.3,
            'dsr_scale': 0.9,
        },
    },
    'base': {
        'learning_rate': 0.01,
        'epochs': 800,
        'batch_size': 300,
        'validation_fraction': 0.1,
    },
    'transfer': {
        'learning_rate': 0.001,
        'epochs': 300,
        'batch_size': 1,
        'retrain_layers': 2,
        'n_experiments': None,  # None -> all training shots
    },
    'adam': {
        'beta1': 0.9,
        'beta2': 0.999,
        'epsilon': 1e-8,
    },
    'holdout_size': 7,
    'curve': {
        'workers': 1,
        'include_baseline': False,
    },
    'logging': {
        'level': 'INFO',
        'log_every': 100,
    },
}


class ConfigError(ValueError):
    """Raised for unreadable config files, malformed overrides or missing required keys."""


class RunConfig:
    """
    Configuration for one CLI run.
    Loads from a YAML file (if given) and merges with defaults.
    """

    def __init__(self, config_path: Optional[Path] = None, overrides: Iterable[str] = ()):
        self.path = Path(config_path) if config_path else None
        self.data = deepcopy(DEFAULT_CONFIG)
        self._load()
        for item in overrides:
            self.apply_override(item)

    def _load(self):
        """Load configuration from YAML if a path was given."""
        if self.path is None:
            logger.info("No config file given, using defaults")
            return
        if not self.path.exists():
            raise ConfigError(f"Config file {self.path} does not exist")
        try:
            with open(self.path, 'r') as f:
                loaded = yaml.safe_load(f)
        except yaml.YAMLError as e:
            raise ConfigError(f"Failed to parse config {self.path}: {e}") from e
        if loaded is None:
            logger.warning(f"Config file {self.path} is empty, using defaults")
            return
        if not isinstance(loaded, dict):
            raise ConfigError(f"Config {self.path} must contain a mapping, got {type(loaded).__name__}")
        self.data = self._deep_merge(self.data, self._expand_dotted(loaded))
        logger.info(f"Config loaded from {self.path}")

    @staticmethod
    def _expand_dotted(flat: Dict) -> Dict:
        """Accept flat 'base.epochs: 0' keys next to nested sections."""
        result: Dict = {}
        for key, value in flat.items():
            parts = str(key).split('.')
            target = result
            for k in parts[:-1]:
                target = target.setdefault(k, {})
            if isinstance(value, dict):
                value = RunConfig._expand_dotted(value)
            target[parts[-1]] = value
        return result

    def _deep_merge(self, base: Dict, overrides: Dict) -> Dict:
        result = deepcopy(base)
        for key, value in overrides.items():
            if key in result and isinstance(result[key], dict) and isinstance(value, dict):
                result[key] = self._deep_merge(result[key], value)
            else:
                result[key] = deepcopy(value)
        return result

    def apply_override(self, item: str):
        """Apply one 'key=value' override; the value is parsed as a YAML scalar."""
        if '=' not in item:
            raise ConfigError(f"Override {item!r} is not of the form key=value")
        key, raw = item.split('=', 1)
        try:
            value = yaml.safe_load(raw)
        except yaml.YAMLError as e:
            raise ConfigError(f"Cannot parse value in override {item!r}: {e}") from e
        self.set(key.strip(), value)

    def save(self, path: Optional[Path] = None):
        """Write the effective configuration to YAML."""
        target = Path(path) if path else self.path
        if target is None:
            raise ConfigError("No path to save the config to")
        target.parent.mkdir(parents=True, exist_ok=True)
        with open(target, 'w') as f:
            yaml.safe_dump(self.data, f, default_flow_style=False, indent=2, sort_keys=True)
        logger.info(f"Config saved to {target}")

    def get(self, key: str, default: Any = None) -> Any:
        keys = key.split('.')
        value = self.data
        for k in keys:
            if isinstance(value, dict) and k in value:
                value = value[k]
            else:
                return default
        return value

    def set(self, key: str, value: Any):
        keys = key.split('.')
        target = self.data
        for k in keys[:-1]:
            if k not in target or not isinstance(target[k], dict):
                target[k] = {}
            target = target[k]
        target[keys[-1]] = value

    def __contains__(self, key):
        return key in self.data

    # ------------------------------------------------------------------
    # Typed accessors
    # ------------------------------------------------------------------

    def require_seed(self) -> int:
        seed = self.get('seed')
        if seed is None:
            raise ConfigError("A seed is required: set 'seed' in the config or pass --seed")
        if not isinstance(seed, int) or isinstance(seed, bool) or seed < 0:
            raise ConfigError(f"Seed must be a non-negative integer, got {seed!r}")
        return seed

    def path_for(self, name: str) -> Path:
        filename = self.get(f'paths.{name}')
        if filename is None:
            raise ConfigError(f"Unknown path key: {name}")
        return Path(self.get('data_dir', '.')) / filename

    def train_config(self, phase: str, seed: int) -> TrainConfig:
        """TrainConfig for phase 'base' or 'transfer' with the shared Adam constants."""
        try:
            return TrainConfig(
                learning_rate=float(self.get(f'{phase}.learning_rate')),
                epochs=int(self.get(f'{phase}.epochs')),
                batch_size=int(self.get(f'{phase}.batch_size')),
                seed=seed,
                beta1=float(self.get('adam.beta1')),
                beta2=float(self.get('adam.beta2')),
                epsilon=float(self.get('adam.epsilon')),
                log_every=int(self.get('logging.log_every', 100)),
            )
        except (TypeError, ValueError) as e:
            raise ConfigError(f"Invalid {phase} training settings: {e}") from e
