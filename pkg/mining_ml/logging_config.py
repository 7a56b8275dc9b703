"""
Centralized logging configuration for the mining_ml package.
Logs go to <project root>/logs/mining_ml/ regardless of the working directory.
"""

import logging
import os
from pathlib import Path
from typing import Optional

from dotenv import load_dotenv

load_dotenv()


def _find_project_root() -> Path:
    """Find the project root directory by looking for the pyproject.toml marker file"""
    current_path = Path(__file__).resolve()
    for parent in [current_path] + list(current_path.parents):
        if (parent / "pyproject.toml").exists():
            return parent
    # Fallback to current directory if no marker found
    return Path.cwd()


def _log_level() -> int:
    name = os.getenv("MINEROI_LOG_LEVEL", "INFO").upper()
    return getattr(logging, name, logging.INFO)


def setup_ml_logger(module_name: str, log_filename: Optional[str] = None) -> logging.Logger:
    """
    Set up a logger for mining_ml modules with consistent configuration.

    Args:
        module_name: Name of the module (usually __name__)
        log_filename: Optional custom log filename (defaults to module name)

    Returns:
        Configured logger instance
    """
    if log_filename is None:
        # 'mining_ml.model_trainer' -> 'model_trainer'
        log_filename = module_name.split('.')[-1] if '.' in module_name else module_name

    if not log_filename.endswith('.log'):
        log_filename = f"{log_filename}.log"

    log_dir_override = os.getenv("MINEROI_LOG_DIR")
    if log_dir_override:
        logs_dir = Path(log_dir_override) / "mining_ml"
    else:
        logs_dir = _find_project_root() / "logs" / "mining_ml"
    logs_dir.mkdir(parents=True, exist_ok=True)

    logger = logging.getLogger(module_name)

    # Avoid duplicate handlers if logger already configured
    if logger.handlers:
        return logger

    level = _log_level()
    logger.setLevel(level)

    formatter = logging.Formatter(
        '%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )

    file_handler = logging.FileHandler(logs_dir / log_filename)
    file_handler.setLevel(level)
    file_handler.setFormatter(formatter)

    console_handler = logging.StreamHandler()
    console_handler.setLevel(level)
    console_handler.setFormatter(formatter)

    logger.addHandler(file_handler)
    logger.addHandler(console_handler)

    # Prevent propagation to root logger to avoid duplicate messages
    logger.propagate = False

    return logger


def get_ml_logger(module_name: str) -> logging.Logger:
    """
    Get or create a logger for mining_ml modules.

    Args:
        module_name: Name of the module (usually __name__)

    Returns:
        Logger instance
    """
    return setup_ml_logger(module_name)


def set_ml_log_level(level: int) -> None:
    """Apply a level to every mining_ml logger created so far (CLI --verbose)."""
    for name, logger in logging.Logger.manager.loggerDict.items():
        if name.startswith("mining_ml") and isinstance(logger, logging.Logger):
            logger.setLevel(level)
            for handler in logger.handlers:
                handler.setLevel(level)
