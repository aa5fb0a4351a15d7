"""
Configuration Manager
Handles loading and saving run configurations
Supports three-tier configuration: default file → user config file → command-line flags
"""

import dataclasses
from pathlib import Path
from typing import Any, Dict, Optional, Union
import logging

from translator.config import RunConfig, format_value, parse_key_value_text
from translator.errors import ParseError

logger = logging.getLogger(__name__)

DEFAULT_CONFIG_DIR = Path(__file__).resolve().parent.parent / "config"
DEFAULT_CONFIG_NAME = "r1_translator_default.conf"

# Canonical key order for saved run configs (same order as the default file)
CONFIG_KEY_ORDER = tuple(f.name for f in dataclasses.fields(RunConfig))


def _config_to_canonical_format(config: Dict[str, Any]) -> Dict[str, str]:
    """
    Return config with canonical key order and text values.
    Keys missing from ``config`` are filled from the RunConfig defaults, so a
    saved file always lists every key.
    """
    defaults = RunConfig()
    return {
        key: format_value(config[key]) if key in config else format_value(getattr(defaults, key))
        for key in CONFIG_KEY_ORDER
    }


class RunConfigManager:
    """
    Manages run configurations.
    Handles reading the layered key=value files and writing the effective config.
    """

    def __init__(self, config_dir: Union[str, Path] = DEFAULT_CONFIG_DIR):
        """
        Initialize configuration manager.

        Args:
            config_dir: Directory holding the default configuration file
        """
        self.config_dir = Path(config_dir)
        logger.debug(f"Configuration manager initialized with config_dir: {self.config_dir}")

    @property
    def default_path(self) -> Path:
        return self.config_dir / DEFAULT_CONFIG_NAME

    def load_file(self, path: Union[str, Path]) -> Dict[str, str]:
        """
        Load a key=value configuration file.

        Args:
            path: File to read

        Returns:
            Mapping of key to raw text value

        Raises:
            FileNotFoundError: if the file does not exist
            ParseError: malformed line or unknown key (with line number)
        """
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"config file not found: {path}")
        text = path.read_text(encoding="utf-8")
        values = parse_key_value_text(text, source=str(path))
        for lineno, raw in enumerate(text.splitlines(), start=1):
            key = raw.split("#", 1)[0].split("=", 1)[0].strip()
            if key and key not in CONFIG_KEY_ORDER:
                raise ParseError(f"{path}:{lineno}: unknown key '{key}'")
        logger.info(f"Loaded configuration: {path} ({len(values)} keys)")
        return values

    def load_default_config(self) -> Dict[str, str]:
        """
        Load the default configuration file.

        Returns:
            Default values, or an empty dict (built-in defaults apply) if the file is absent
        """
        if not self.default_path.exists():
            logger.warning(
                f"No default configuration at {self.default_path}; using built-in defaults"
            )
            return {}
        return self.load_file(self.default_path)

    def merge_config(self, existing_config: Optional[Dict[str, Any]],
                     new_config: Dict[str, Any]) -> Dict[str, Any]:
        """
        Merge new configuration into existing configuration.

        Args:
            existing_config: Lower-priority configuration (may be None)
            new_config: Higher-priority values; None values are ignored

        Returns:
            Merged configuration dictionary
        """
        merged = dict(existing_config or {})
        merged.update({k: v for k, v in new_config.items() if v is not None})
        return merged

    def build(self, user_config: Optional[Union[str, Path]] = None,
              overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
        """
        Resolve the effective run configuration.

        Args:
            user_config: Optional config file layered over the defaults
            overrides: Command-line values layered over both files

        Returns:
            Validated RunConfig
        """
        merged = self.load_default_config()
        if user_config:
            merged = self.merge_config(merged, self.load_file(user_config))
        flags = {k: format_value(v) for k, v in (overrides or {}).items() if v is not None}
        merged = self.merge_config(merged, flags)
        return RunConfig.from_mapping(merged, source="run configuration")

    def save_config(self, config: RunConfig, path: Union[str, Path]) -> Path:
        """
        Save a run configuration in canonical key order.

        Args:
            config: Configuration to save
            path: Destination file

        Returns:
            Path to saved configuration file
        """
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        canonical = _config_to_canonical_format(dataclasses.asdict(config))
        path.write_text("".join(f"{k}={v}\n" for k, v in canonical.items()), encoding="utf-8")
        logger.info(f"Saved run configuration: {path}")
        return path


# Global configuration manager instance
_config_manager = RunConfigManager()


def get_config_manager() -> RunConfigManager:
    """Get the global configuration manager instance."""
    return _config_manager


def build_run_config(user_config: Optional[Union[str, Path]] = None,
                     overrides: Optional[Dict[str, Any]] = None) -> RunConfig:
    """Resolve defaults → user file → overrides with the global manager."""
    return _config_manager.build(user_config, overrides)


def save_run_config(config: RunConfig, path: Union[str, Path]) -> Path:
    """Save a run configuration with the global manager."""
    return _config_manager.save_config(config, path)


def get_canonical_config(config: Dict[str, Any]) -> Dict[str, str]:
    """Public wrapper: return config with canonical key order and text values."""
    return _config_to_canonical_format(config)
