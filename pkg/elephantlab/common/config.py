"""Configuration system for elephantlab.

This module handles loading, validating and accessing application settings
from YAML files and environment variables. Experiment descriptions live in
their own files and are handled by :mod:`elephantlab.runner.experiment`.
"""

import copy
import os
import logging
from pathlib import Path
from typing import Any, Dict, Optional

import yaml

from .errors import ConfigError

# Get module-level logger
logger = logging.getLogger(__name__)


class Config:
    """Configuration manager for elephantlab.

    Configuration is loaded in the following order (later sources override earlier ones):
    1. Default configuration
    2. Project configuration file (from ELEPHANTLAB_CONFIG or .elephantlab.yaml in the CWD)
    3. Environment variables (ELEPHANTLAB_*)
    4. User configuration file (~/.elephantlab/config.yaml)
    """

    USER_CONFIG_PATH = Path.home() / '.elephantlab' / 'config.yaml'
    PROJECT_CONFIG_PATH = '.elephantlab.yaml'

    # Environment variables that are not config settings
    SPECIAL_ENV_VARS = {'ELEPHANTLAB_CONFIG'}

    DEFAULT_CONFIG = {
        'logging': {
            'level': 'INFO',
            'file': None,
            'format': '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
        },
        'runner': {
            'workers': 1,
            'output_dir': 'runs',
            'progress': False,
        },
        'data': {
            'mnist_dir': 'data/mnist',
            'mnist_mirrors': [
                'https://ossci-datasets.s3.amazonaws.com/mnist/',
                'https://storage.googleapis.com/cvdf-datasets/mnist/',
            ],
            'download_timeout': 30,
        },
    }

    def __init__(self, project_config: Optional[str] = None, user_config: Optional[str] = None):
        """Initialize configuration.

        Args:
            project_config: Optional path to project configuration file
            user_config: Optional path to user configuration file
        """
        logger.debug("Initializing configuration")
        self._config: Dict[str, Any] = {}
        self._project_config_path = self._get_project_config_path(project_config)
        self._user_config_path = Path(user_config) if user_config else self.USER_CONFIG_PATH
        self.load_config()

    def _get_project_config_path(self, project_config: Optional[str] = None) -> Path:
        """Get the project configuration file path.

        The path is determined in the following order:
        1. Explicitly provided project_config parameter
        2. ELEPHANTLAB_CONFIG environment variable
        3. Default project config path (.elephantlab.yaml)
        """
        if project_config:
            return Path(project_config)

        env_config = os.environ.get('ELEPHANTLAB_CONFIG')
        if env_config:
            logger.debug(f"Using project config from ELEPHANTLAB_CONFIG: {env_config}")
            return Path(env_config)

        return Path(self.PROJECT_CONFIG_PATH)

    def load_config(self) -> None:
        """Load configuration from all sources."""
        self._config = copy.deepcopy(self.DEFAULT_CONFIG)

        project_config = self._load_yaml_file(self._project_config_path)
        if project_config:
            logger.debug(f"Project config loaded: {self._project_config_path}")
            self._update_config(project_config)

        self._load_env_vars()

        user_config = self._load_yaml_file(self._user_config_path)
        if user_config:
            logger.debug(f"User config loaded: {self._user_config_path}")
            self._update_config(user_config)

        logger.debug(f"Final configuration: {self._config}")

    def _load_yaml_file(self, path: Path) -> Optional[Dict[str, Any]]:
        """Load and parse a YAML configuration file."""
        if not path.exists():
            logger.debug(f"Config file does not exist: {path}")
            return None

        try:
            with path.open('r', encoding='utf-8') as f:
                return yaml.safe_load(f)
        except Exception as e:
            logger.error(f"Failed to load config file {path}: {e}")
            raise ConfigError(f"Failed to load config file {path}: {e}")

    def _load_env_vars(self) -> None:
        """Load configuration from environment variables.

        Environment variables should be in the format ELEPHANTLAB_SECTION_KEY
        where SECTION is the top-level config section and KEY is the setting key.
        For keys containing underscores, use double underscores in the env var.

        Examples:
            ELEPHANTLAB_RUNNER_WORKERS -> runner.workers
            ELEPHANTLAB_DATA_MNIST__DIR -> data.mnist_dir
        """
        for key, value in os.environ.items():
            if key.startswith('ELEPHANTLAB_') and key not in self.SPECIAL_ENV_VARS:
                _, section, *key_parts = key.split('_')
                if not key_parts:
                    continue
                setting = '_'.join(key_parts).lower().replace('__', '_')
                logger.debug(f"Setting config from env var: {section.lower()}.{setting} = {value}")
                self._set_config_value([section.lower(), setting], value)

    def _update_config(self, new_config: Dict[str, Any]) -> None:
        """Recursively update configuration dictionary."""
        for key, value in new_config.items():
            if isinstance(value, dict) and isinstance(self._config.get(key), dict):
                self._config[key].update(value)
            else:
                self._config[key] = value

    def _set_config_value(self, path: list, value: str) -> None:
        """Set a configuration value at the specified path."""
        current = self._config
        for part in path[:-1]:
            if part not in current:
                current[part] = {}
            current = current[part]
        current[path[-1]] = coerce_scalar(value)

    def get(self, key: str, default: Any = None) -> Any:
        """Get a configuration value by key.

        Args:
            key: Dot-separated configuration key (e.g. 'runner.workers')
            default: Default value if key doesn't exist

        Returns:
            Configuration value or default
        """
        current = self._config
        for part in key.split('.'):
            if not isinstance(current, dict) or part not in current:
                return default
            current = current[part]
        return current

    def as_dict(self) -> Dict[str, Any]:
        """Return a deep copy of the merged configuration."""
        return copy.deepcopy(self._config)


def coerce_scalar(value: str) -> Any:
    """Convert a string from the environment or the command line to a typed value.

    'true'/'yes'/'on' and 'false'/'no'/'off' become booleans, numeric strings
    become int or float, 'null'/'none' becomes None; anything else is kept.
    """
    if not isinstance(value, str):
        return value
    lowered = value.strip().lower()
    if lowered in ('true', 'yes', 'on'):
        return True
    if lowered in ('false', 'no', 'off'):
        return False
    if lowered in ('null', 'none'):
        return None
    try:
        if any(c in lowered for c in '.e') or lowered in ('inf', '-inf', 'nan'):
            return float(lowered)
        return int(lowered)
    except ValueError:
        return value.strip()


# Global configuration instance
config = Config()
