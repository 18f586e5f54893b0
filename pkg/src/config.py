"""
Configuration management module
Handles loading and validation of configuration settings
"""

import copy
import logging
from pathlib import Path
from typing import Any, Dict

import yaml

from .errors import ConfigError

DEFAULT_CONFIG: Dict[str, Any] = {
    'privacy': {
        'epsilon': 1.0,
        'beta': 1.0 / 3.0,
        'eta_prime': 1.0,
        'histogram_mode': 'auto',
        'theta': None,
        'one_sided_tau': False,
    },
    'dbscan': {
        'min_pts': 7,
    },
    'histogram': {
        'max_naive_cells': 100_000_000,
        'phantom_ratio_limit': 64,
        'phantom_floor': 1_000_000,
    },
    'datagen': {
        'n': 2000,
        'seed': 0,
        'margin': 0.05,
        'noise_sd': {'circles': 0.005, 'moons': 0.01, 'blobs': 0.1, 'coincident': 0.0, 'uniform': 0.0},
        'spread': {'circles': 1.35, 'moons': 1.4, 'blobs': 1.0},
        'circles_factor': 0.5,
        'circles_outer_fraction': 2.0 / 3.0,
    },
    'logging': {
        'level': 'INFO',
        'file': None,
    },
}

VALID_HISTOGRAM_MODES = ['auto', 'naive', 'linear']
VALID_LOG_LEVELS = ['DEBUG', 'INFO', 'WARNING', 'ERROR']


class Config:
    def __init__(self, config_path: str = "config.yaml", create_missing: bool = False):
        self.logger = logging.getLogger(__name__)
        self.config_path = Path(config_path)
        self.create_missing = create_missing
        self.config_data: Dict[str, Any] = {}

        self._load_config()
        self._validate_config()

    def _load_config(self):
        """Load configuration from file, layered over the built-in defaults"""
        self.config_data = copy.deepcopy(DEFAULT_CONFIG)
        if not self.config_path.exists():
            self.logger.warning(f"Configuration file {self.config_path} not found, using defaults")
            if self.create_missing:
                self._save_config()
            return
        try:
            with open(self.config_path, 'r') as f:
                loaded = yaml.safe_load(f) or {}
        except yaml.YAMLError as e:
            raise ConfigError(f"Configuration file {self.config_path} is not valid YAML: {e}") from e
        except OSError as e:
            raise ConfigError(f"Failed to read configuration {self.config_path}: {e}") from e
        if not isinstance(loaded, dict):
            raise ConfigError(f"Configuration file {self.config_path} must contain a mapping")
        _merge(self.config_data, loaded)
        self.logger.info(f"Loaded configuration from {self.config_path}")

    def _validate_config(self):
        """Validate configuration values, resetting bad ones to defaults"""
        privacy = self.config_data['privacy']
        if not _positive(privacy.get('epsilon')):
            self.logger.warning(f"Invalid epsilon '{privacy.get('epsilon')}', using 1.0")
            privacy['epsilon'] = DEFAULT_CONFIG['privacy']['epsilon']

        beta = privacy.get('beta')
        if not (_number(beta) and 0.0 < beta < 1.0):
            self.logger.warning(f"Invalid beta '{beta}', using 1/3")
            privacy['beta'] = DEFAULT_CONFIG['privacy']['beta']

        eta_prime = privacy.get('eta_prime')
        if not (_number(eta_prime) and 0.0 < eta_prime <= 1.0):
            self.logger.warning(f"Invalid eta_prime '{eta_prime}', using 1.0")
            privacy['eta_prime'] = DEFAULT_CONFIG['privacy']['eta_prime']

        if privacy.get('histogram_mode') not in VALID_HISTOGRAM_MODES:
            self.logger.warning(f"Invalid histogram mode '{privacy.get('histogram_mode')}', using 'auto'")
            privacy['histogram_mode'] = 'auto'

        theta = privacy.get('theta')
        if theta is not None and not _positive(theta):
            self.logger.warning(f"Invalid theta '{theta}', choosing it automatically")
            privacy['theta'] = None

        min_pts = self.config_data['dbscan'].get('min_pts')
        if not (isinstance(min_pts, int) and not isinstance(min_pts, bool) and min_pts >= 1):
            self.logger.warning(f"Invalid min_pts '{min_pts}', using 7")
            self.config_data['dbscan']['min_pts'] = DEFAULT_CONFIG['dbscan']['min_pts']

        histogram = self.config_data['histogram']
        for key, default in DEFAULT_CONFIG['histogram'].items():
            if not _positive(histogram.get(key)):
                self.logger.warning(f"Invalid histogram.{key} '{histogram.get(key)}', using {default}")
                histogram[key] = default

        level = str(self.config_data['logging'].get('level', 'INFO')).upper()
        if level not in VALID_LOG_LEVELS:
            self.logger.warning(f"Invalid log level '{level}', using INFO")
            level = 'INFO'
        self.config_data['logging']['level'] = level

    def get(self, key: str, default: Any = None) -> Any:
        """Get configuration value using dot notation"""
        value = self.config_data
        for k in key.split('.'):
            if isinstance(value, dict) and k in value:
                value = value[k]
            else:
                return default
        return value

    def set(self, key: str, value: Any, persist: bool = False):
        """Set configuration value using dot notation"""
        keys = key.split('.')
        config = self.config_data
        for k in keys[:-1]:
            config = config.setdefault(k, {})
        config[keys[-1]] = value
        if persist:
            self._save_config()

    def _save_config(self):
        """Save configuration to file"""
        try:
            with open(self.config_path, 'w') as f:
                yaml.safe_dump(self.config_data, f, default_flow_style=False, sort_keys=True)
            self.logger.info(f"Saved configuration to {self.config_path}")
        except OSError as e:
            self.logger.error(f"Failed to save configuration: {e}")

    def reload(self):
        """Reload configuration from file"""
        self._load_config()
        self._validate_config()


def _merge(base: dict, override: dict):
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(base.get(key), dict):
            _merge(base[key], value)
        else:
            base[key] = value


def _number(value) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def _positive(value) -> bool:
    return _number(value) and value > 0
