"""
Bitcoin halving calendar

Provides days-since-halving lookups against a halving schedule supplied by
configuration. Nothing here hardcodes protocol dates; the public record is
passed in by the data manifest (or by tests).
"""

from bisect import bisect_right
from datetime import date
from typing import Iterable, List, Optional, Tuple

from ..core.errors import DomainError


# Public record, for manifests and synthetic scenarios that want it.
PUBLIC_HALVING_DATES: Tuple[date, ...] = (
    date(2012, 11, 28),
    date(2016, 7, 9),
    date(2020, 5, 11),
    date(2024, 4, 20),
)


class HalvingCalendar:
    """Sorted halving dates with previous-halving lookups."""

    def __init__(self, halving_dates: Iterable[date]):
        self.halving_dates: List[date] = sorted(set(halving_dates))
        if not self.halving_dates:
            raise DomainError("Halving calendar needs at least one date")

    def previous_halving(self, check_date: date) -> Optional[date]:
        """Most recent halving on or before check_date, or None."""
        idx = bisect_right(self.halving_dates, check_date)
        return self.halving_dates[idx - 1] if idx > 0 else None

    def days_since_halving(self, check_date: date) -> int:
        previous = self.previous_halving(check_date)
        if previous is None:
            raise DomainError(
                f"No halving on or before {check_date} (first known: {self.halving_dates[0]})"
            )
        return (check_date - previous).days

    def halvings_between(self, start: date, end: date) -> List[date]:
        """Halving dates in [start, end)."""
        return [h for h in self.halving_dates if start <= h < end]


def days_since_halving(check_date: date, halving_dates: Iterable[date]) -> int:
    """Whole days from the most recent halving on or before check_date."""
    return HalvingCalendar(halving_dates).days_since_halving(check_date)
