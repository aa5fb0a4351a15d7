"""
Utilities Module
Centralized utilities for run configuration, Excel output and logging
"""

from .excel_manager import ExcelManager
from .config_manager import (
    RunConfigManager,
    get_config_manager,
    get_canonical_config,
    build_run_config,
    save_run_config,
)
from .logging_utils import setup_logging, resolve_log_level

__all__ = [
    "ExcelManager",
    "RunConfigManager",
    "get_config_manager",
    "get_canonical_config",
    "build_run_config",
    "save_run_config",
    "setup_logging",
    "resolve_log_level",
]
