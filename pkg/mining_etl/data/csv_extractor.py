"""CSV ingestion of machine, chain and energy exports into daily market records."""

from datetime import date
from pathlib import Path
from typing import Dict, List, Sequence, Tuple, Type

import pandas as pd
import structlog
from pydantic import BaseModel, ValidationError

from ..core.errors import ConfigError, CoverageError, ParseError
from ..core.models import (
    ChainRecord,
    DatasetManifest,
    EnergyRecord,
    MachinePriceRecord,
    MachineSpec,
    MachineSpecRecord,
    MarketDay,
    PriceFill,
)

logger = structlog.get_logger(__name__)

CHAIN_COLUMNS = [
    "date", "btc_price_usd", "difficulty", "network_hashrate_ths",
    "network_revenue_usd", "block_reward_btc", "transaction_fees_btc",
]
ENERGY_COLUMNS = ["date", "region", "rate_usd_per_kwh"]
PRICE_COLUMNS = ["machine_id", "date", "price_usd"]
SPEC_COLUMNS = ["machine_id", "hashrate_ths", "power_w", "efficiency_jth", "release_date"]

DEFAULT_MAX_GAP_DAYS = 7


def _gap_runs(present: pd.Series) -> List[Tuple[date, int]]:
    """(first missing date, length) for every run of False in a daily boolean series."""
    runs: List[Tuple[date, int]] = []
    run_start = None
    run_len = 0
    for day, ok in present.items():
        if not ok:
            if run_start is None:
                run_start = day.date()
            run_len += 1
        elif run_start is not None:
            runs.append((run_start, run_len))
            run_start, run_len = None, 0
    if run_start is not None:
        runs.append((run_start, run_len))
    return runs


def fill_price_series(quotes: pd.Series, mode: PriceFill = PriceFill.INTERPOLATE) -> pd.Series:
    """Daily prices from sparse quotes (DatetimeIndex), first quote to last quote inclusive."""
    quotes = quotes.sort_index()
    daily = quotes.reindex(pd.date_range(quotes.index.min(), quotes.index.max(), freq="D"))
    if mode is PriceFill.INTERPOLATE:
        return daily.interpolate(method="time")
    return daily.ffill()


class CsvExtractor:
    """Parse the three CSV sources and join them into per-day records."""

    def __init__(self, max_gap_days: int = DEFAULT_MAX_GAP_DAYS,
                 price_fill: PriceFill = PriceFill.INTERPOLATE):
        self.max_gap_days = max_gap_days
        self.price_fill = price_fill

    def read_records(self, path: Path, columns: Sequence[str],
                     record_model: Type[BaseModel]) -> List[BaseModel]:
        """Read a CSV and validate every row; the first bad row aborts with its line number."""
        path = Path(path)
        if not path.exists():
            raise ParseError("file not found", path=path)

        try:
            df = pd.read_csv(path, dtype=str, keep_default_na=False,
                             skip_blank_lines=False, encoding="utf-8")
        except (pd.errors.ParserError, UnicodeDecodeError) as e:
            raise ParseError(f"unreadable CSV: {e}", path=path) from e
        except pd.errors.EmptyDataError as e:
            raise ParseError("empty file, header row required", path=path) from e

        missing = [c for c in columns if c not in df.columns]
        if missing:
            raise ParseError(f"missing columns {missing}; found {list(df.columns)}", path=path, line=1)

        records = []
        for idx, row in enumerate(df[list(columns)].itertuples(index=False, name=None)):
            line = idx + 2  # header is line 1
            try:
                records.append(record_model(**dict(zip(columns, row))))
            except ValidationError as e:
                problems = "; ".join(
                    f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in e.errors())
                raise ParseError(f"malformed row ({problems})", path=path, line=line) from e

        logger.info("Parsed CSV", path=str(path), rows=len(records))
        return records

    def fill_daily_gaps(self, frame: pd.DataFrame, source: str,
                        index: pd.DatetimeIndex = None) -> pd.DataFrame:
        """Reindex to consecutive days and forward-fill holes up to max_gap_days.

        Interior runs longer than max_gap_days raise CoverageError naming the run.
        """
        if index is None:
            index = pd.date_range(frame.index.min(), frame.index.max(), freq="D")
        present = pd.Series(index.isin(frame.index), index=index)

        first_observed = frame.index.min()
        last_observed = frame.index.max()
        for start, length in _gap_runs(present):
            start_ts = pd.Timestamp(start)
            if start_ts < first_observed:
                continue  # before the source starts: left missing
            if start_ts > last_observed:
                continue  # trailing: filled up to the limit below
            if length > self.max_gap_days:
                raise CoverageError(
                    f"{source}: gap of {length} days starting {start} exceeds {self.max_gap_days}",
                    missing_date=start,
                )
            logger.warning("Forward-filling missing days", source=source,
                           first_missing=start.isoformat(), gap_days=length)

        return frame.reindex(index).ffill(limit=self.max_gap_days)

    def parse_chain(self, path: Path) -> pd.DataFrame:
        records = self.read_records(path, CHAIN_COLUMNS, ChainRecord)
        if not records:
            raise CoverageError(f"{path}: no chain rows")
        df = pd.DataFrame([r.model_dump() for r in records])
        df["date"] = pd.to_datetime(df["date"])
        duplicated = df["date"].duplicated()
        if duplicated.any():
            line = int(duplicated.to_numpy().nonzero()[0][0]) + 2
            raise ParseError("duplicate date", path=Path(path), line=line)
        df = df.set_index("date").sort_index()
        return self.fill_daily_gaps(df, source=f"chain {path}")

    def parse_energy(self, path: Path, index: pd.DatetimeIndex) -> Dict[str, pd.Series]:
        """Daily rate series per region aligned to `index`."""
        records = self.read_records(path, ENERGY_COLUMNS, EnergyRecord)
        df = pd.DataFrame([r.model_dump() for r in records])
        if df.empty:
            raise CoverageError(f"{path}: no energy rows")
        df["date"] = pd.to_datetime(df["date"])

        rates: Dict[str, pd.Series] = {}
        for region, group in df.groupby("region", sort=True):
            series = group.drop_duplicates("date", keep="last").set_index("date")[["rate_usd_per_kwh"]].sort_index()
            aligned_index = index.union(series.index)
            filled = self.fill_daily_gaps(series, source=f"energy {path} [{region}]", index=aligned_index)
            rates[str(region)] = filled["rate_usd_per_kwh"].reindex(index)
        return rates

    def parse_machine_prices(self, paths: Sequence[Path]) -> Dict[str, Dict[date, float]]:
        """Daily price series per machine, filled between the first and last quote."""
        rows = []
        for path in paths:
            rows.extend(r.model_dump() for r in self.read_records(path, PRICE_COLUMNS, MachinePriceRecord))
        if not rows:
            return {}
        df = pd.DataFrame(rows)
        df["date"] = pd.to_datetime(df["date"])

        series: Dict[str, Dict[date, float]] = {}
        for machine_id, group in df.groupby("machine_id", sort=True):
            quotes = group.drop_duplicates("date", keep="last").set_index("date")["price_usd"]
            daily = fill_price_series(quotes, self.price_fill)
            series[str(machine_id)] = {ts.date(): float(v) for ts, v in daily.items()}
            logger.debug("Machine prices filled", machine_id=machine_id,
                         quotes=len(quotes), days=len(daily), mode=self.price_fill.value)
        return series

    def parse_machine_specs(self, paths: Sequence[Path]) -> Dict[str, MachineSpecRecord]:
        specs: Dict[str, MachineSpecRecord] = {}
        for path in paths:
            for record in self.read_records(path, SPEC_COLUMNS, MachineSpecRecord):
                specs[record.machine_id] = record
        return specs

    def build_market(self, chain: pd.DataFrame, rates: Dict[str, pd.Series]) -> List[MarketDay]:
        market = []
        for ts, row in chain.iterrows():
            day_rates = {region: float(series.loc[ts]) for region, series in rates.items()
                         if pd.notna(series.loc[ts])}
            market.append(MarketDay(
                date=ts.date(),
                btc_price=float(row["btc_price_usd"]),
                difficulty=float(row["difficulty"]),
                network_hashrate=float(row["network_hashrate_ths"]),
                network_revenue=float(row["network_revenue_usd"]),
                block_reward=float(row["block_reward_btc"]),
                transaction_fees=float(row["transaction_fees_btc"]),
                electricity_rates=day_rates,
            ))
        return market

    def build_machines(self, specs: Dict[str, MachineSpecRecord],
                       prices: Dict[str, Dict[date, float]]) -> List[MachineSpec]:
        unknown = sorted(set(prices) - set(specs))
        if unknown:
            raise ConfigError([f"machine {m}: prices given but no spec row" for m in unknown])

        machines = []
        for machine_id in sorted(specs):
            spec = specs[machine_id]
            machine = MachineSpec(
                id=machine_id,
                hashrate=spec.hashrate_ths,
                power=spec.power_w,
                efficiency=spec.efficiency_jth,
                release_date=spec.release_date,
                price_series=prices.get(machine_id, {}),
            )
            if machine.efficiency_mismatch:
                logger.warning("Efficiency inconsistent with power/hashrate",
                               machine_id=machine_id, efficiency=machine.efficiency,
                               implied=machine.power / machine.hashrate)
            if not machine.price_series:
                logger.warning("Machine has no price quotes", machine_id=machine_id)
            machines.append(machine)
        return machines


def ingest(machine_csv_paths: Sequence[Path], chain_csv_path: Path, energy_csv_path: Path,
           spec_csv_paths: Sequence[Path], max_gap_days: int = DEFAULT_MAX_GAP_DAYS,
           price_fill: PriceFill = PriceFill.INTERPOLATE) -> Tuple[List[MachineSpec], List[MarketDay]]:
    """Parse the three sources into machine specs and one MarketDay per covered day."""
    extractor = CsvExtractor(max_gap_days=max_gap_days, price_fill=price_fill)

    chain = extractor.parse_chain(chain_csv_path)
    rates = extractor.parse_energy(energy_csv_path, chain.index)
    market = extractor.build_market(chain, rates)

    specs = extractor.parse_machine_specs(spec_csv_paths)
    prices = extractor.parse_machine_prices(machine_csv_paths)
    machines = extractor.build_machines(specs, prices)

    logger.info(
        "Ingestion complete",
        market_days=len(market),
        first_day=market[0].date.isoformat(),
        last_day=market[-1].date.isoformat(),
        machines=len(machines),
        regions=sorted(rates),
    )
    return machines, market


def ingest_manifest(manifest: DatasetManifest) -> Tuple[List[MachineSpec], List[MarketDay]]:
    return ingest(
        manifest.machine_prices,
        manifest.chain_csv,
        manifest.energy_csv,
        manifest.machine_specs,
        max_gap_days=manifest.max_gap_days,
        price_fill=manifest.price_fill,
    )
