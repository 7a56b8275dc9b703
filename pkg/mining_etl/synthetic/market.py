"""
Deterministic synthetic mining markets.

A scenario is a date range cut into regimes. Inside a regime every walked series
moves by steps proportional to its level at the regime start
(drift + volatility * N(0, 1)), so with zero volatility each series is a straight
line per regime. Machine prices are quoted weekly at a payback multiple of the
day's revenue per TH/s and filled daily the same way ingestion fills them.
"""

from datetime import date, timedelta
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
import structlog
from pydantic import BaseModel, ConfigDict, Field, model_validator

from ..core.config import write_key_values
from ..core.errors import SplitError
from ..core.models import (
    BLOCKS_PER_DAY,
    FEATURE_NAMES,
    DateRange,
    MachineSpec,
    MarketDay,
    PriceFill,
    SplitDefinition,
    SplitPlan,
    date_range,
    validated,
)
from ..data.csv_extractor import (
    CHAIN_COLUMNS,
    ENERGY_COLUMNS,
    PRICE_COLUMNS,
    SPEC_COLUMNS,
    fill_price_series,
)

logger = structlog.get_logger(__name__)

SECONDS_PER_BLOCK = 600
QUOTE_INTERVAL_DAYS = 7
MANIFEST_NAME = "scenario.manifest"
SCENARIO_FILES = {
    "chain": "chain.csv",
    "energy": "energy.csv",
    "prices": "machine_prices.csv",
    "specs": "machine_specs.csv",
}


class Regime(BaseModel):
    """One stretch of the scenario with its own price drift and volatility (per day, relative)."""
    model_config = ConfigDict(frozen=True)

    period: DateRange
    drift: float = Field(..., gt=-0.01, lt=0.05)
    volatility: float = Field(0.0, ge=0)
    hashrate_drift: float = Field(0.0005, gt=-0.01, lt=0.05)


class ScenarioConfig(BaseModel):
    """Everything a synthetic market depends on; generation is a pure function of it."""
    model_config = ConfigDict(frozen=True)

    n_machines: int = Field(6, ge=1)
    period: DateRange
    regimes: Tuple[Regime, ...]
    electricity_rate: float = Field(0.05, ge=0, description="USD/kWh")
    region: str = "US"
    halving_dates: Tuple[date, ...] = ()
    seed: int = 42
    initial_btc_price: float = Field(10_000.0, gt=0)
    initial_hashrate_ths: float = Field(1e8, gt=0)
    initial_block_reward: float = Field(6.25, gt=0)
    initial_fees_btc: float = Field(30.0, ge=0)
    payback_days: float = Field(300.0, gt=0)
    price_noise: float = Field(0.05, ge=0, lt=1)

    @model_validator(mode="after")
    def regimes_tile_period(self) -> "ScenarioConfig":
        if not self.regimes:
            raise ValueError("at least one regime is required")
        if self.regimes[0].period.start != self.period.start or self.regimes[-1].period.end != self.period.end:
            raise ValueError(f"regimes must start at {self.period.start} and end at {self.period.end}")
        for prev, nxt in zip(self.regimes, self.regimes[1:]):
            if prev.period.end != nxt.period.start:
                raise ValueError(f"regimes {prev.period} and {nxt.period} are not contiguous")
        return self

    @property
    def resolved_halvings(self) -> Tuple[date, ...]:
        """Configured halvings, or the scenario start when none are given."""
        return tuple(sorted(self.halving_dates)) or (self.period.start,)

    @classmethod
    def create(cls, source: Optional[str] = None, **values) -> "ScenarioConfig":
        return validated(cls, values, source)

    @classmethod
    def three_regime(cls, start: date = date(2016, 1, 1), years: int = 5, seed: int = 42,
                     volatility_scale: float = 1.0, **overrides) -> "ScenarioConfig":
        """Bull, bear and sideways thirds."""
        end = date(start.year + years, start.month, start.day)
        third = (end - start).days // 3
        cut1, cut2 = start + timedelta(days=third), start + timedelta(days=2 * third)
        regimes = (
            Regime(period=DateRange(start=start, end=cut1), drift=0.002, volatility=0.02 * volatility_scale),
            Regime(period=DateRange(start=cut1, end=cut2), drift=-0.0008, volatility=0.02 * volatility_scale),
            Regime(period=DateRange(start=cut2, end=end), drift=0.0, volatility=0.015 * volatility_scale),
        )
        return cls.create(period=DateRange(start=start, end=end), regimes=regimes, seed=seed, **overrides)


def _walk(rng: np.random.Generator, regimes: Sequence[Regime], start_level: float, drift_of,
          volatility_of) -> np.ndarray:
    """Piecewise walk: inside each regime, steps are fractions of the regime's opening level."""
    out: List[np.ndarray] = []
    level = start_level
    floor = start_level * 1e-3
    for regime in regimes:
        n = (regime.period.end - regime.period.start).days
        vol = volatility_of(regime)
        noise = rng.standard_normal(n) * vol if vol > 0 else np.zeros(n)
        cum = np.cumsum(drift_of(regime) + noise)
        # the regime opens at the previous close
        out.append(np.maximum(level * (1.0 + np.concatenate([[0.0], cum[:-1]])), floor))
        level = max(level * (1.0 + cum[-1]), floor)
    return np.concatenate(out)


def _chain_frame(scenario: ScenarioConfig, rng: np.random.Generator) -> pd.DataFrame:
    days = date_range(scenario.period.start, scenario.period.end)
    btc_price = _walk(rng, scenario.regimes, scenario.initial_btc_price,
                      lambda r: r.drift, lambda r: r.volatility)
    hashrate = _walk(rng, scenario.regimes, scenario.initial_hashrate_ths,
                     lambda r: r.hashrate_drift, lambda r: r.volatility / 4)
    fees = _walk(rng, scenario.regimes, max(scenario.initial_fees_btc, 1e-9),
                 lambda r: 0.0, lambda r: r.volatility / 2)
    halvings_after = [h for h in scenario.resolved_halvings if h > scenario.period.start]
    reward = np.array([scenario.initial_block_reward / 2 ** sum(h <= d for h in halvings_after) for d in days])
    difficulty = hashrate * 1e12 * SECONDS_PER_BLOCK / 2 ** 32
    revenue = (reward * BLOCKS_PER_DAY + fees) * btc_price
    return pd.DataFrame({
        "date": [d.isoformat() for d in days],
        "btc_price_usd": btc_price,
        "difficulty": difficulty,
        "network_hashrate_ths": hashrate,
        "network_revenue_usd": revenue,
        "block_reward_btc": reward,
        "transaction_fees_btc": fees,
    }, columns=CHAIN_COLUMNS)


def _machine_specs(scenario: ScenarioConfig, rng: np.random.Generator) -> pd.DataFrame:
    n = scenario.n_machines
    span = (scenario.period.end - scenario.period.start).days
    offsets = np.sort(rng.integers(0, max(1, span // 3), size=n))
    hashrates = np.round(rng.uniform(10.0, 200.0, size=n), 1)
    # newer hardware is more efficient: 120 J/TH down to 8 J/TH
    efficiencies = np.round(np.geomspace(120.0, 8.0, num=n) * rng.uniform(0.95, 1.05, size=n), 2)
    return pd.DataFrame({
        "machine_id": [f"asic-{i + 1:02d}" for i in range(n)],
        "hashrate_ths": hashrates,
        "power_w": np.round(hashrates * efficiencies, 1),
        "efficiency_jth": efficiencies,
        "release_date": [(scenario.period.start + timedelta(days=int(o))).isoformat() for o in offsets],
    }, columns=SPEC_COLUMNS)


def _price_quotes(scenario: ScenarioConfig, chain: pd.DataFrame, specs: pd.DataFrame,
                  rng: np.random.Generator) -> pd.DataFrame:
    revenue_per_th = (chain["network_revenue_usd"] / chain["network_hashrate_ths"]).to_numpy()
    n_days = len(chain)
    rows = []
    for spec in specs.itertuples(index=False):
        release = date.fromisoformat(spec.release_date)
        first = (release - scenario.period.start).days
        quote_days = list(range(first, n_days, QUOTE_INTERVAL_DAYS))
        if quote_days[-1] != n_days - 1:
            quote_days.append(n_days - 1)
        noise = rng.lognormal(0.0, scenario.price_noise, size=len(quote_days)) if scenario.price_noise else \
            np.ones(len(quote_days))
        for k, noise_k in zip(quote_days, noise):
            price = spec.hashrate_ths * revenue_per_th[k] * scenario.payback_days * noise_k
            rows.append((spec.machine_id, chain["date"].iloc[k], round(float(price), 2)))
    return pd.DataFrame(rows, columns=PRICE_COLUMNS)


def _energy_frame(scenario: ScenarioConfig, chain: pd.DataFrame) -> pd.DataFrame:
    return pd.DataFrame({
        "date": chain["date"],
        "region": scenario.region,
        "rate_usd_per_kwh": scenario.electricity_rate,
    }, columns=ENERGY_COLUMNS)


def scenario_frames(scenario: ScenarioConfig) -> Dict[str, pd.DataFrame]:
    """The four CSV tables of a scenario, keyed like SCENARIO_FILES."""
    rng = np.random.default_rng(scenario.seed)
    chain = _chain_frame(scenario, rng)
    specs = _machine_specs(scenario, rng)
    prices = _price_quotes(scenario, chain, specs, rng)
    return {"chain": chain, "energy": _energy_frame(scenario, chain), "prices": prices, "specs": specs}


def _to_domain(scenario: ScenarioConfig, frames: Dict[str, pd.DataFrame],
               price_fill: PriceFill) -> Tuple[List[MachineSpec], List[MarketDay]]:
    market = [
        MarketDay(
            date=date.fromisoformat(row.date),
            btc_price=float(row.btc_price_usd),
            difficulty=float(row.difficulty),
            network_hashrate=float(row.network_hashrate_ths),
            network_revenue=float(row.network_revenue_usd),
            block_reward=float(row.block_reward_btc),
            transaction_fees=float(row.transaction_fees_btc),
            electricity_rates={scenario.region: float(scenario.electricity_rate)},
        )
        for row in frames["chain"].itertuples(index=False)
    ]
    prices = frames["prices"].copy()
    prices["date"] = pd.to_datetime(prices["date"])
    machines = []
    for spec in frames["specs"].itertuples(index=False):
        quotes = prices[prices["machine_id"] == spec.machine_id].set_index("date")["price_usd"]
        daily = fill_price_series(quotes, price_fill)
        machines.append(MachineSpec(
            id=spec.machine_id,
            hashrate=float(spec.hashrate_ths),
            power=float(spec.power_w),
            efficiency=float(spec.efficiency_jth),
            release_date=date.fromisoformat(spec.release_date),
            price_series={ts.date(): float(v) for ts, v in daily.items()},
        ))
    return machines, market


def generate(scenario: ScenarioConfig,
             price_fill: PriceFill = PriceFill.INTERPOLATE) -> Tuple[List[MachineSpec], List[MarketDay]]:
    """Machines and market days of a scenario, identical to what ingesting its CSVs yields."""
    machines, market = _to_domain(scenario, scenario_frames(scenario), price_fill)
    logger.info("Generated synthetic market", days=len(market), machines=len(machines),
                regimes=len(scenario.regimes), seed=scenario.seed)
    return machines, market


def default_plan(first_end: date, last_end: date, n_splits: int = 3) -> SplitPlan:
    """Expanding splits over sample end dates [first_end, last_end].

    The span is cut into n_splits + 2 equal chunks: train grows from the first
    chunk, each later chunk is one eval range, the last chunk is the final test.
    """
    total = (last_end - first_end).days + 1
    n_chunks = n_splits + 2
    if total < n_chunks:
        raise SplitError(f"{total} days of sample end dates cannot hold {n_chunks} split chunks")
    bounds = [first_end + timedelta(days=round(total * k / n_chunks)) for k in range(n_chunks + 1)]
    splits = tuple(
        SplitDefinition(name=f"split_{k}", train=DateRange(start=bounds[0], end=bounds[k]),
                        eval=DateRange(start=bounds[k], end=bounds[k + 1]))
        for k in range(1, n_splits + 1)
    )
    return SplitPlan(
        splits=splits,
        final_train=DateRange(start=bounds[0], end=bounds[n_splits + 1]),
        final_test=DateRange(start=bounds[n_splits + 1], end=bounds[n_chunks]),
    )


def sample_end_span(scenario: ScenarioConfig, machines: Sequence[MachineSpec], window: int,
                    horizon_days: int) -> Tuple[date, date]:
    """First and last possible sample end dates over all machines."""
    first_halving = scenario.resolved_halvings[0]
    starts = [max(m.release_date, first_halving, m.first_price_date or m.release_date) for m in machines]
    first_end = min(starts) + timedelta(days=window - 1)
    last_end = scenario.period.end - timedelta(days=horizon_days + 1)
    return first_end, last_end


def write_scenario(scenario: ScenarioConfig, out_dir: Path, window: int = 30, horizon_days: int = 365,
                   n_splits: int = 3) -> Path:
    """Write the scenario CSVs and a data manifest next to them; returns the manifest path."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    frames = scenario_frames(scenario)
    for key, name in SCENARIO_FILES.items():
        frames[key].to_csv(out_dir / name, index=False, lineterminator="\n")

    machines, _ = _to_domain(scenario, frames, PriceFill.INTERPOLATE)
    plan = default_plan(*sample_end_span(scenario, machines, window, horizon_days), n_splits=n_splits)
    values: Dict[str, object] = {
        "MACHINE_PRICES": SCENARIO_FILES["prices"],
        "MACHINE_SPECS": SCENARIO_FILES["specs"],
        "CHAIN_CSV": SCENARIO_FILES["chain"],
        "ENERGY_CSV": SCENARIO_FILES["energy"],
        "REGION": scenario.region,
        "WINDOW": window,
        "HORIZON_DAYS": horizon_days,
        "HALVING_DATES": ",".join(d.isoformat() for d in scenario.resolved_halvings),
        "FINAL_TRAIN": str(plan.final_train),
        "FINAL_TEST": str(plan.final_test),
    }
    for i, split in enumerate(plan.splits, 1):
        values[f"SPLIT_{i}"] = f"{split.train}|{split.eval}"
    manifest_path = out_dir / MANIFEST_NAME
    write_key_values(manifest_path, values, header=f"synthetic scenario, seed {scenario.seed}")
    logger.info("Wrote synthetic scenario", out_dir=str(out_dir), manifest=str(manifest_path),
                machines=scenario.n_machines, days=len(frames["chain"]))
    return manifest_path


def separable_arrays(window: int, n_features: int, n_per_class: int,
                     seed: int) -> Tuple[np.ndarray, np.ndarray]:
    """(3 n, L, F) windows and labels; class c adds 0.3 to every feature f with f % 3 == c."""
    rng = np.random.default_rng(seed)
    labels = np.repeat(np.arange(3), n_per_class)
    rng.shuffle(labels)
    X = 0.5 + 0.1 * rng.standard_normal((labels.size, window, n_features))
    for c in range(3):
        X[np.ix_(labels == c, np.arange(window), np.arange(c, n_features, 3))] += 0.3
    return X, labels


def separable_dataset(window: int = 30, n_features: int = len(FEATURE_NAMES), n_per_class: int = 500,
                      seed: int = 0, start: date = date(2020, 1, 1)):
    """WindowSamples with planted class structure, one per day in shuffled class order."""
    from mining_ml.feature_engineering import WindowSample

    if n_per_class < 1:
        raise ValueError("n_per_class must be at least 1")
    X, labels = separable_arrays(window, n_features, n_per_class, seed)
    return [
        WindowSample(machine_id=f"planted-{int(y)}", end_date=start + timedelta(days=i), matrix=X[i],
                     label=int(y), roi=float("nan"))
        for i, y in enumerate(labels)
    ]
