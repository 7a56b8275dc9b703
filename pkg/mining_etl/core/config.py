"""Environment settings and key-value manifest loading."""

import os
from pathlib import Path
from typing import Dict, Optional

from dotenv import dotenv_values, load_dotenv
import structlog

from .errors import ConfigError

logger = structlog.get_logger(__name__)

load_dotenv()


class Settings:
    """Process-level settings read from the environment."""

    def __init__(self) -> None:
        self.log_level = os.getenv("MINEROI_LOG_LEVEL", "INFO").upper()
        self.log_dir = os.getenv("MINEROI_LOG_DIR")
        self.n_jobs = int(os.getenv("MINEROI_N_JOBS", "1"))

    def __repr__(self) -> str:
        return f"Settings(log_level={self.log_level}, log_dir={self.log_dir}, n_jobs={self.n_jobs})"


def get_settings() -> Settings:
    return Settings()


def read_key_values(path: Path) -> Dict[str, str]:
    """Read a `KEY=VALUE` text file; keys are upper-cased, blank values dropped."""
    path = Path(path)
    if not path.exists():
        raise ConfigError([f"file not found: {path}"], source=str(path))

    raw = dotenv_values(path)
    values: Dict[str, str] = {}
    for key, value in raw.items():
        if value is None or value.strip() == "":
            continue
        values[key.strip().upper()] = value.strip()

    logger.debug("Read key-value file", path=str(path), keys=sorted(values))
    return values


def write_key_values(path: Path, values: Dict[str, object], header: Optional[str] = None) -> None:
    """Write a `KEY=VALUE` file with keys in sorted order."""
    lines = []
    if header:
        lines.extend(f"# {line}" for line in header.splitlines())
    for key in sorted(values):
        lines.append(f"{key}={values[key]}")
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
