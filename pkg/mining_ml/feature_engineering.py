"""
Feature engineering for mining hardware ROI classification.
Builds the 14 daily features per machine and slides L-day windows over them.
"""

from dataclasses import dataclass, field
from datetime import date, timedelta
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from mining_etl.core.errors import CoverageError, DomainError, PreconditionError
from mining_etl.core.models import (
    FEATURE_NAMES,
    FeatureRow,
    MachineSpec,
    MarketDay,
    RevenueSource,
    RoiResult,
)
from mining_etl.core.roi import DEFAULT_HORIZON_DAYS, RoiEngine, daily_energy_cost, daily_machine_revenue
from mining_etl.utils.halving_calendar import HalvingCalendar

try:
    from .logging_config import get_ml_logger
except ImportError:
    from logging_config import get_ml_logger
logger = get_ml_logger(__name__)


@dataclass(frozen=True)
class WindowSample:
    """L consecutive feature rows ending at `end_date`, with the ROI class of buying that day."""
    machine_id: str
    end_date: date
    matrix: np.ndarray
    label: int
    roi: float = float("nan")
    row_dates: Tuple[date, ...] = field(default=(), compare=False)

    def __post_init__(self):
        matrix = np.array(self.matrix, dtype=np.float64)
        matrix.setflags(write=False)
        object.__setattr__(self, "matrix", matrix)

    @property
    def window(self) -> int:
        return self.matrix.shape[0]


def feature_row(machine: MachineSpec, day: MarketDay, region: str, halving_dates: Iterable[date],
                revenue_source: RevenueSource = RevenueSource.NETWORK_REVENUE) -> FeatureRow:
    """14 features for `machine` on `day.date`, in canonical order.

    Every value comes from the machine's static spec, its price on that day, or
    the market record of that same day.
    """
    days_since_release = (day.date - machine.release_date).days
    if days_since_release < 0:
        raise DomainError(f"{machine.id}: {day.date} is before release {machine.release_date}")

    price = machine.price_on(day.date)
    if price is None:
        raise CoverageError(f"No price for machine {machine.id} on {day.date}", missing_date=day.date)

    rate = day.electricity_rates.get(region)
    if rate is None:
        raise CoverageError(f"No electricity rate for region {region!r} on {day.date}", missing_date=day.date)

    calendar = halving_dates if isinstance(halving_dates, HalvingCalendar) else HalvingCalendar(halving_dates)
    network_revenue = day.revenue_usd(revenue_source)
    potential = (daily_machine_revenue(machine.hashrate, day.network_hashrate, network_revenue)
                 - daily_energy_cost(machine.power, rate))

    return FeatureRow(
        machine_id=machine.id,
        date=day.date,
        features=(
            machine.hashrate,
            machine.power,
            machine.efficiency,
            float(days_since_release),
            price,
            day.btc_price,
            day.difficulty,
            day.network_hashrate,
            network_revenue,
            day.block_reward,
            day.transaction_fees,
            rate,
            float(calendar.days_since_halving(day.date)),
            potential,
        ),
    )


def feature_permutation(feature_order: Sequence[str]) -> List[int]:
    """Column indices that reorder canonical features into `feature_order`."""
    return [FEATURE_NAMES.index(name) for name in feature_order]


def contiguous_runs(rows: Sequence[FeatureRow]) -> List[List[FeatureRow]]:
    """Split date-sorted rows into runs of consecutive calendar days."""
    runs: List[List[FeatureRow]] = []
    for row in rows:
        if runs and (row.date - runs[-1][-1].date).days == 1:
            runs[-1].append(row)
        else:
            runs.append([row])
    return runs


def make_windows(rows: Mapping[str, Sequence[FeatureRow]], window: int,
                 labels: Mapping[str, Mapping[date, RoiResult]],
                 horizon_days: int = DEFAULT_HORIZON_DAYS,
                 feature_order: Sequence[str] = FEATURE_NAMES) -> List[WindowSample]:
    """One sample per (machine, d_i) with `window` rows ending at d_i and
    `horizon_days` rows after it.

    Machines whose span is too short contribute nothing. Samples come out sorted
    by (end_date, machine_id).
    """
    columns = feature_permutation(feature_order)
    samples: List[WindowSample] = []
    for machine_id in sorted(rows):
        machine_rows = sorted(rows[machine_id], key=lambda r: r.date)
        machine_labels = labels.get(machine_id, {})
        produced = 0
        for run in contiguous_runs(machine_rows):
            n = len(run)
            if n < window + horizon_days:
                continue
            block = np.array([r.features for r in run], dtype=np.float64)[:, columns]
            for end in range(window - 1, n - horizon_days):
                d_i = run[end].date
                result = machine_labels.get(d_i)
                if result is None:
                    continue
                samples.append(WindowSample(
                    machine_id=machine_id,
                    end_date=d_i,
                    matrix=block[end - window + 1:end + 1],
                    label=int(result.label),
                    roi=result.roi,
                    row_dates=tuple(r.date for r in run[end - window + 1:end + 1]),
                ))
                produced += 1
        logger.debug(f"{machine_id}: {produced} windows of length {window}")

    samples.sort(key=lambda s: (s.end_date, s.machine_id))
    return samples


def window_ending(rows: Sequence[FeatureRow], end_date: date, window: int,
                  feature_order: Sequence[str] = FEATURE_NAMES) -> np.ndarray:
    """Feature matrix of the `window` consecutive rows ending at `end_date`.

    Raises PreconditionError naming the earliest date that has a full window.
    """
    by_date = {r.date: r for r in rows}
    needed = [end_date - timedelta(days=k) for k in range(window - 1, -1, -1)]
    if all(d in by_date for d in needed):
        columns = feature_permutation(feature_order)
        return np.array([by_date[d].features for d in needed], dtype=np.float64)[:, columns]

    earliest: Optional[date] = None
    for run in contiguous_runs(sorted(rows, key=lambda r: r.date)):
        if len(run) >= window:
            earliest = run[window - 1].date
            if earliest >= end_date:
                break
    raise PreconditionError(
        f"Need {window} consecutive days of features ending {end_date}",
        earliest_valid_date=earliest,
    )


class MiningFeatureEngineer:
    """Feature rows, ROI labels and windows for a set of machines in one market scenario."""

    def __init__(self, market: Sequence[MarketDay], region: str, halving_dates: Iterable[date],
                 horizon_days: int = DEFAULT_HORIZON_DAYS,
                 revenue_source: RevenueSource = RevenueSource.NETWORK_REVENUE,
                 feature_order: Sequence[str] = FEATURE_NAMES):
        self.market = sorted(market, key=lambda d: d.date)
        self.region = region
        self.calendar = HalvingCalendar(halving_dates)
        self.horizon_days = horizon_days
        self.revenue_source = revenue_source
        self.feature_order = tuple(feature_order)
        self.engine = RoiEngine(self.market, region, revenue_source)

    def feature_rows(self, machine: MachineSpec) -> List[FeatureRow]:
        """Rows for every market day where the machine is released, priced and the rate is known."""
        first_halving = self.calendar.halving_dates[0]
        rows = []
        for day in self.market:
            if (day.date < machine.release_date or day.date < first_halving
                    or machine.price_on(day.date) is None or self.region not in day.electricity_rates):
                continue
            rows.append(feature_row(machine, day, self.region, self.calendar, self.revenue_source))
        return rows

    def labels(self, machine: MachineSpec, dates: Iterable[date]) -> Dict[date, RoiResult]:
        return self.engine.label_machine(machine, dates, self.horizon_days)

    def build(self, machines: Sequence[MachineSpec], window: int
              ) -> Tuple[Dict[str, List[FeatureRow]], List[WindowSample]]:
        """Feature rows per machine and the labeled windows over them."""
        rows = {m.id: self.feature_rows(m) for m in machines}
        labels = {m.id: self.labels(m, [r.date for r in rows[m.id]]) for m in machines}
        samples = make_windows(rows, window, labels, self.horizon_days, self.feature_order)

        counts = np.bincount([s.label for s in samples], minlength=3) if samples else np.zeros(3, int)
        logger.info(f"Built {len(samples)} windows (L={window}) from {len(machines)} machines; "
                    f"class counts {counts.tolist()}")
        return rows, samples
