"""One-year ROI of mining hardware purchases and its three-class discretization."""

import math
from datetime import date, timedelta
from typing import Dict, Iterable, Sequence

import numpy as np
import structlog

from .errors import CoverageError, DomainError
from .models import MachineSpec, MarketDay, RevenueSource, RoiClass, RoiResult

logger = structlog.get_logger(__name__)

DEFAULT_HORIZON_DAYS = 365


def daily_energy_cost(power: float, rate: float) -> float:
    """USD per day for a machine drawing `power` watts at `rate` USD/kWh."""
    if not (power >= 0 and math.isfinite(power)):
        raise DomainError(f"power must be a non-negative number, got {power}")
    if not (rate >= 0 and math.isfinite(rate)):
        raise DomainError(f"electricity rate must be a non-negative number, got {rate}")
    return (power * 24 / 1000) * rate


def daily_machine_revenue(machine_hashrate: float, network_hashrate: float,
                          network_revenue: float) -> float:
    """Expected proportional share of the day's network revenue."""
    if not network_hashrate > 0:
        raise DomainError(f"network hashrate must be positive, got {network_hashrate}")
    if not machine_hashrate >= 0:
        raise DomainError(f"machine hashrate must be non-negative, got {machine_hashrate}")
    return (machine_hashrate / network_hashrate) * network_revenue


def label(roi: float) -> RoiClass:
    """Map ROI to its class; both boundaries are inclusive on the outer bins."""
    if not math.isfinite(roi):
        raise DomainError(f"ROI must be finite, got {roi}")
    if roi <= 0:
        return RoiClass.UNPROFITABLE
    if roi < 1:
        return RoiClass.MARGINAL
    return RoiClass.PROFITABLE


class RoiEngine:
    """Market series laid out on a contiguous day axis for repeated ROI queries.

    Days absent from the input market (or lacking the region's rate) are kept as
    holes and reported as coverage errors when a horizon touches them.
    """

    def __init__(self, market: Sequence[MarketDay], region: str,
                 revenue_source: RevenueSource = RevenueSource.NETWORK_REVENUE):
        if not market:
            raise CoverageError("Market series is empty")
        self.region = region
        self.revenue_source = revenue_source
        self.start = min(d.date for d in market)
        self.end = max(d.date for d in market) + timedelta(days=1)
        n_days = (self.end - self.start).days

        self.network_hashrate = np.full(n_days, np.nan)
        self.network_revenue = np.full(n_days, np.nan)
        self.rates = np.full(n_days, np.nan)
        self.present = np.zeros(n_days, dtype=bool)
        for day in market:
            i = (day.date - self.start).days
            self.present[i] = True
            self.network_hashrate[i] = day.network_hashrate
            self.network_revenue[i] = day.revenue_usd(revenue_source)
            rate = day.electricity_rates.get(region)
            if rate is not None:
                self.rates[i] = rate

    def _index(self, day: date) -> int:
        return (day - self.start).days

    def _check_coverage(self, first: date, horizon_days: int) -> None:
        i0 = self._index(first)
        i1 = i0 + horizon_days
        if i0 < 0:
            raise CoverageError(f"Market data starts {self.start}, missing {first}", missing_date=first)
        if i1 > len(self.present):
            missing = max(first, self.end)
            raise CoverageError(f"Market data ends before {missing}", missing_date=missing)
        window_present = self.present[i0:i1]
        if not window_present.all():
            missing = first + timedelta(days=int(np.argmin(window_present)))
            raise CoverageError(f"Missing market day {missing}", missing_date=missing)
        window_rates = np.isfinite(self.rates[i0:i1])
        if not window_rates.all():
            missing = first + timedelta(days=int(np.argmin(window_rates)))
            raise CoverageError(
                f"No electricity rate for region {self.region!r} on {missing}", missing_date=missing)

    def covers(self, first: date, horizon_days: int) -> bool:
        try:
            self._check_coverage(first, horizon_days)
        except CoverageError:
            return False
        return True

    def daily_revenue(self, machine: MachineSpec) -> np.ndarray:
        return (machine.hashrate / self.network_hashrate) * self.network_revenue

    def daily_cost(self, machine: MachineSpec) -> np.ndarray:
        return (machine.power * 24 / 1000) * self.rates

    def accumulate(self, machine: MachineSpec, first: date, horizon_days: int) -> tuple:
        """(revenue, cost) summed over [first, first + horizon_days)."""
        self._check_coverage(first, horizon_days)
        i0 = self._index(first)
        revenue = math.fsum(self.daily_revenue(machine)[i0:i0 + horizon_days].tolist())
        cost = math.fsum(self.daily_cost(machine)[i0:i0 + horizon_days].tolist())
        return revenue, cost

    def roi(self, machine: MachineSpec, purchase_date: date,
            horizon_days: int = DEFAULT_HORIZON_DAYS) -> RoiResult:
        capital = machine.price_on(purchase_date)
        if capital is None:
            raise CoverageError(f"No price for machine {machine.id} on {purchase_date}",
                                missing_date=purchase_date)
        revenue, cost = self.accumulate(machine, purchase_date, horizon_days)
        value = (revenue - cost) / capital
        return RoiResult(roi=value, revenue_total=revenue, op_cost_total=cost,
                         capital=capital, label=label(value))

    def label_machine(self, machine: MachineSpec, purchase_dates: Iterable[date],
                      horizon_days: int = DEFAULT_HORIZON_DAYS) -> Dict[date, RoiResult]:
        """ROI for every purchase date whose horizon and price are available."""
        revenue = self.daily_revenue(machine).tolist()
        cost = self.daily_cost(machine).tolist()
        results: Dict[date, RoiResult] = {}
        skipped = 0
        for day in purchase_dates:
            capital = machine.price_on(day)
            if capital is None or not self.covers(day, horizon_days):
                skipped += 1
                continue
            i0 = self._index(day)
            rev = math.fsum(revenue[i0:i0 + horizon_days])
            cst = math.fsum(cost[i0:i0 + horizon_days])
            value = (rev - cst) / capital
            results[day] = RoiResult(roi=value, revenue_total=rev, op_cost_total=cst,
                                     capital=capital, label=label(value))
        logger.debug("Labeled machine purchase dates", machine_id=machine.id,
                     labeled=len(results), skipped=skipped)
        return results


def roi(machine: MachineSpec, purchase_date: date, horizon_days: int,
        market: Sequence[MarketDay], region: str,
        revenue_source: RevenueSource = RevenueSource.NETWORK_REVENUE) -> RoiResult:
    """One-year (by default) ROI of buying `machine` on `purchase_date`."""
    return RoiEngine(market, region, revenue_source).roi(machine, purchase_date, horizon_days)

