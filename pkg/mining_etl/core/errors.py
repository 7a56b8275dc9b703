"""Exception hierarchy shared by the ETL and ML packages.

Each exception carries the process exit code the CLI reports for it.
"""

from datetime import date
from pathlib import Path
from typing import List, Optional, Sequence


class MineRoiError(Exception):
    """Base class for every error raised on purpose by this project."""

    exit_code: int = 1


class DomainError(MineRoiError, ValueError):
    """Input outside the mathematical domain of an operation."""

    exit_code = 2


class ParseError(MineRoiError):
    """Malformed CSV row."""

    exit_code = 2

    def __init__(self, message: str, path: Optional[Path] = None, line: Optional[int] = None):
        self.path = path
        self.line = line
        location = ""
        if path is not None:
            location = f"{path}"
            if line is not None:
                location += f":{line}"
            location += ": "
        super().__init__(f"{location}{message}")


class CoverageError(MineRoiError):
    """Required data missing for a date (or a gap that is too long to fill)."""

    exit_code = 2

    def __init__(self, message: str, missing_date: Optional[date] = None):
        self.missing_date = missing_date
        super().__init__(message)


class ConfigError(MineRoiError):
    """Invalid manifest or configuration; holds every problem found."""

    exit_code = 2

    def __init__(self, problems: Sequence[str], source: Optional[str] = None):
        self.problems: List[str] = list(problems)
        header = f"Invalid configuration{f' in {source}' if source else ''}"
        super().__init__(header + ":\n" + "\n".join(f"  - {p}" for p in self.problems))


class SplitError(MineRoiError):
    """Invalid split plan or an empty split."""

    exit_code = 2


class ShapeError(MineRoiError, ValueError):
    """Tensor shape mismatch or non-finite tensor input."""


class TraceError(MineRoiError):
    """Backward pass requested without a retained forward trace."""


class MetricError(MineRoiError):
    """Metric undefined for the given inputs."""


class CheckpointError(MineRoiError):
    """Unreadable or incompatible checkpoint file."""

    exit_code = 2


class PreconditionError(MineRoiError):
    """Not enough data to satisfy an operation's precondition."""

    exit_code = 3

    def __init__(self, message: str, earliest_valid_date: Optional[date] = None):
        self.earliest_valid_date = earliest_valid_date
        super().__init__(message)


class TestReuseError(PreconditionError):
    """The final test range was already evaluated in this experiment directory."""

    __test__ = False
