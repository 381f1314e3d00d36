"""Logging configuration."""

import logging
import sys
from pathlib import Path
from typing import Any, Dict, Optional

from .config import settings

ROOT_LOGGER_NAME = "quantum_trajectories"


class CompactFormatter(logging.Formatter):
    """Formatter that keeps multi-line messages (matrices, tracebacks of workers) on one line."""

    def format(self, record: logging.LogRecord) -> str:
        """Format log record with newlines collapsed."""
        formatted = super().format(record)
        if record.exc_info:
            return formatted
        return " | ".join(line.strip() for line in formatted.splitlines() if line.strip())


def setup_logging(level: Optional[str] = None) -> logging.Logger:
    """Setup logging configuration."""

    logger = logging.getLogger(ROOT_LOGGER_NAME)
    logger.setLevel(getattr(logging, (level or settings.log_level).upper()))

    # Remove existing handlers
    for handler in logger.handlers[:]:
        logger.removeHandler(handler)

    formatter = CompactFormatter(
        fmt="%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
    )

    # Console handler; stdout is reserved for JSON documents
    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setFormatter(formatter)
    logger.addHandler(console_handler)

    if settings.log_file:
        log_path = Path(settings.log_file)
        log_path.parent.mkdir(parents=True, exist_ok=True)

        file_handler = logging.FileHandler(log_path, encoding="utf-8")
        file_handler.setFormatter(formatter)
        logger.addHandler(file_handler)

        error_handler = logging.FileHandler(log_path.with_name("error.log"), encoding="utf-8")
        error_handler.setLevel(logging.ERROR)
        error_handler.setFormatter(formatter)
        logger.addHandler(error_handler)

    # Disable propagation to avoid duplicate logs
    logger.propagate = False

    return logger


def get_logger(name: str) -> logging.Logger:
    """Get a logger instance."""
    return logging.getLogger(f"{ROOT_LOGGER_NAME}.{name}")


def log_config_dict(data: Dict[str, Any], exclude_keys: Optional[set] = None) -> Dict[str, Any]:
    """Create a loggable copy of a config dict, dropping bulky matrix literals."""
    if exclude_keys is None:
        exclude_keys = {"hamiltonian", "jump_operators", "kraus_operators", "decomposition"}

    safe_data = {}
    for key, value in data.items():
        if key in exclude_keys:
            safe_data[key] = "[MATRIX]"
        elif isinstance(value, dict):
            safe_data[key] = log_config_dict(value, exclude_keys)
        else:
            safe_data[key] = value

    return safe_data


# Initialize logger
logger = setup_logging()
