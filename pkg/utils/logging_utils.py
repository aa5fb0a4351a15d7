"""
Logging Utilities
One-time logging setup shared by the command line and the runner script
"""

import logging
import os
from typing import Optional

LOG_FORMAT = '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
LOG_LEVEL_ENV = "R1_LOG"
LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR")


def resolve_log_level(value: Optional[str] = None) -> int:
    """
    Map an R1_LOG value to a logging level.

    Args:
        value: Level name (default: read from the R1_LOG environment variable)

    Returns:
        logging level; unknown names fall back to INFO
    """
    name = (value if value is not None else os.environ.get(LOG_LEVEL_ENV, "INFO")).strip().upper()
    return getattr(logging, name) if name in LEVELS else logging.INFO


def setup_logging(level: Optional[str] = None) -> int:
    """
    Configure the root logger once (stderr, standard format).

    Returns:
        The effective level
    """
    raw = level if level is not None else os.environ.get(LOG_LEVEL_ENV)
    effective = resolve_log_level(raw)
    logging.basicConfig(level=effective, format=LOG_FORMAT, force=True)
    if raw and raw.strip().upper() not in LEVELS:
        logging.getLogger(__name__).warning(f"Unknown {LOG_LEVEL_ENV} value '{raw}', using INFO")
    # matplotlib is chatty at DEBUG
    logging.getLogger("matplotlib").setLevel(max(effective, logging.WARNING))
    return effective
