"""Pydantic models for data validation and type safety."""

import math
import datetime as dt
from datetime import date, timedelta
from enum import Enum, IntEnum
from pathlib import Path
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import ConfigError, SplitError

EFFICIENCY_TOLERANCE = 0.05
BLOCKS_PER_DAY = 144

FEATURE_NAMES: Tuple[str, ...] = (
    "hashrate",
    "power",
    "efficiency",
    "days_since_release",
    "machine_price",
    "btc_price",
    "difficulty",
    "network_hashrate",
    "network_revenue",
    "block_reward",
    "transaction_fees",
    "electricity_rate",
    "days_since_halving",
    "daily_revenue_potential",
)


class RoiClass(IntEnum):
    """One-year ROI classes."""
    UNPROFITABLE = 0
    MARGINAL = 1
    PROFITABLE = 2


ROI_CLASS_LEGEND: Dict[int, str] = {
    RoiClass.UNPROFITABLE: "unprofitable (ROI <= 0)",
    RoiClass.MARGINAL: "marginal (0 < ROI < 1)",
    RoiClass.PROFITABLE: "profitable (ROI >= 1)",
}


class RevenueSource(str, Enum):
    """Where daily network revenue in USD comes from."""
    NETWORK_REVENUE = "network_revenue"
    RECONSTRUCTED = "reconstructed"


class PriceFill(str, Enum):
    """How machine prices are filled between quotes."""
    INTERPOLATE = "interpolate"
    FFILL = "ffill"


class MachineSpec(BaseModel):
    """Static attributes of one ASIC model plus its daily price series."""
    model_config = ConfigDict(frozen=True)

    id: str = Field(..., min_length=1)
    hashrate: float = Field(..., gt=0, description="TH/s")
    power: float = Field(..., gt=0, description="watts")
    efficiency: float = Field(..., gt=0, description="J/TH")
    release_date: date
    price_series: Dict[date, float] = Field(default_factory=dict)

    @field_validator("price_series")
    @classmethod
    def prices_must_be_positive(cls, v: Dict[date, float]) -> Dict[date, float]:
        for day, price in v.items():
            if not (price > 0 and math.isfinite(price)):
                raise ValueError(f"price on {day} must be positive, got {price}")
        return v

    @property
    def efficiency_mismatch(self) -> bool:
        """True when efficiency disagrees with power/hashrate by more than 5%."""
        implied = self.power / self.hashrate
        return abs(self.efficiency - implied) / self.efficiency > EFFICIENCY_TOLERANCE

    @property
    def first_price_date(self) -> Optional[date]:
        return min(self.price_series) if self.price_series else None

    @property
    def last_price_date(self) -> Optional[date]:
        return max(self.price_series) if self.price_series else None

    def price_on(self, day: date) -> Optional[float]:
        return self.price_series.get(day)


class MarketDay(BaseModel):
    """One calendar day of chain, market and energy observations."""
    model_config = ConfigDict(frozen=True)

    date: dt.date
    btc_price: float = Field(..., ge=0)
    difficulty: float = Field(..., ge=0)
    network_hashrate: float = Field(..., gt=0, description="TH/s")
    network_revenue: float = Field(..., ge=0, description="USD/day")
    block_reward: float = Field(..., ge=0, description="BTC")
    transaction_fees: float = Field(..., ge=0, description="BTC/day")
    electricity_rates: Dict[str, float] = Field(default_factory=dict)

    @field_validator("electricity_rates")
    @classmethod
    def rates_must_be_non_negative(cls, v: Dict[str, float]) -> Dict[str, float]:
        for region, rate in v.items():
            if not (rate >= 0 and math.isfinite(rate)):
                raise ValueError(f"electricity rate for {region} must be >= 0, got {rate}")
        return v

    def revenue_usd(self, source: RevenueSource = RevenueSource.NETWORK_REVENUE) -> float:
        if source is RevenueSource.RECONSTRUCTED:
            return (self.block_reward * BLOCKS_PER_DAY + self.transaction_fees) * self.btc_price
        return self.network_revenue


class RoiResult(BaseModel):
    """One-year ROI of buying a machine on a given day."""
    model_config = ConfigDict(frozen=True)

    roi: float
    revenue_total: float
    op_cost_total: float
    capital: float = Field(..., gt=0)
    label: RoiClass

    @model_validator(mode="after")
    def check_consistency(self) -> "RoiResult":
        expected = (self.revenue_total - self.op_cost_total) / self.capital
        if self.roi != expected:
            raise ValueError(f"roi {self.roi} != (revenue - cost) / capital = {expected}")
        if self.roi <= 0:
            expected_label = RoiClass.UNPROFITABLE
        elif self.roi < 1:
            expected_label = RoiClass.MARGINAL
        else:
            expected_label = RoiClass.PROFITABLE
        if self.label != expected_label:
            raise ValueError(f"label {self.label} inconsistent with roi {self.roi}")
        return self


class FeatureRow(BaseModel):
    """The 14 features of one machine on one day, in canonical order."""
    model_config = ConfigDict(frozen=True)

    machine_id: str
    date: dt.date
    features: Tuple[float, ...]

    @field_validator("features")
    @classmethod
    def must_be_finite_14(cls, v: Tuple[float, ...]) -> Tuple[float, ...]:
        if len(v) != len(FEATURE_NAMES):
            raise ValueError(f"expected {len(FEATURE_NAMES)} features, got {len(v)}")
        if not all(math.isfinite(x) for x in v):
            raise ValueError("features must be finite")
        return v


class DateRange(BaseModel):
    """Half-open calendar range [start, end)."""
    model_config = ConfigDict(frozen=True)

    start: date
    end: date

    @model_validator(mode="after")
    def start_before_end(self) -> "DateRange":
        if self.start >= self.end:
            raise SplitError(f"range start {self.start} must precede end {self.end}")
        return self

    def contains(self, day: date) -> bool:
        return self.start <= day < self.end

    def overlaps(self, other: "DateRange") -> bool:
        return self.start < other.end and other.start < self.end

    def is_within(self, other: "DateRange") -> bool:
        return other.start <= self.start and self.end <= other.end

    @classmethod
    def parse(cls, text: str) -> "DateRange":
        """Parse `YYYY-MM-DD..YYYY-MM-DD`."""
        try:
            start_text, end_text = text.split("..")
            return cls(start=date.fromisoformat(start_text.strip()), end=date.fromisoformat(end_text.strip()))
        except ValueError as e:
            raise ValueError(f"bad date range {text!r}: expected START..END ({e})") from e

    def __str__(self) -> str:
        return f"{self.start.isoformat()}..{self.end.isoformat()}"


class SplitDefinition(BaseModel):
    """One expanding-window split: a train range and the evaluation range after it."""
    model_config = ConfigDict(frozen=True)

    name: str
    train: DateRange
    eval: DateRange


class SplitPlan(BaseModel):
    """Validation splits plus the final train/test ranges."""
    model_config = ConfigDict(frozen=True)

    splits: Tuple[SplitDefinition, ...] = ()
    final_train: DateRange
    final_test: DateRange
    purge_days: int = Field(default=0, ge=0)

    @model_validator(mode="after")
    def check_invariants(self) -> "SplitPlan":
        problems: List[str] = []
        for split in self.splits:
            if split.train.end > split.eval.start:
                problems.append(f"{split.name}: train range {split.train} must precede eval range {split.eval}")
            if split.eval.overlaps(self.final_test) or split.eval.end > self.final_test.start:
                problems.append(f"{split.name}: eval range {split.eval} reaches into the final test range")
        for prev, nxt in zip(self.splits, self.splits[1:]):
            if not prev.train.is_within(nxt.train):
                problems.append(f"{nxt.name}: train range {nxt.train} does not contain {prev.name} train {prev.train}")
        for i, a in enumerate(self.splits):
            for b in self.splits[i + 1:]:
                if a.eval.overlaps(b.eval):
                    problems.append(f"eval ranges of {a.name} and {b.name} overlap")
        train_ends = [s.train.end for s in self.splits] + [self.final_train.end]
        if self.final_test.start < max(train_ends):
            problems.append(f"final test {self.final_test} overlaps training data ending {max(train_ends)}")
        if problems:
            raise SplitError("Invalid split plan: " + "; ".join(problems))
        return self

    @classmethod
    def reference_default(cls) -> "SplitPlan":
        """Default final train and test ranges; validation splits come from config."""
        return cls(
            final_train=DateRange(start=date(2015, 10, 1), end=date(2023, 6, 1)),
            final_test=DateRange(start=date(2023, 6, 1), end=date(2024, 10, 1)),
        )


class DatasetManifest(BaseModel):
    """Data manifest: file paths, scenario parameters and the split calendar."""
    model_config = ConfigDict(frozen=True)

    machine_prices: Tuple[Path, ...]
    machine_specs: Tuple[Path, ...]
    chain_csv: Path
    energy_csv: Path
    region: str
    window: int = Field(default=30, ge=2)
    horizon_days: int = Field(default=365, ge=1)
    halving_dates: Tuple[date, ...]
    plan: SplitPlan
    max_gap_days: int = Field(default=7, ge=0)
    price_fill: PriceFill = PriceFill.INTERPOLATE
    revenue_source: RevenueSource = RevenueSource.NETWORK_REVENUE
    feature_order: Tuple[str, ...] = FEATURE_NAMES

    @field_validator("halving_dates")
    @classmethod
    def halvings_sorted(cls, v: Tuple[date, ...]) -> Tuple[date, ...]:
        if not v:
            raise ValueError("at least one halving date is required")
        return tuple(sorted(v))

    @field_validator("feature_order")
    @classmethod
    def order_is_permutation(cls, v: Tuple[str, ...]) -> Tuple[str, ...]:
        if sorted(v) != sorted(FEATURE_NAMES):
            raise ValueError(f"feature order must be a permutation of {list(FEATURE_NAMES)}")
        return v

    @classmethod
    def from_key_values(cls, values: Dict[str, str], base_dir: Optional[Path] = None,
                        source: Optional[str] = None) -> "DatasetManifest":
        """Build a manifest from parsed `KEY=VALUE` pairs, collecting every problem."""
        base_dir = Path(base_dir) if base_dir is not None else Path(".")
        problems: List[str] = []

        def resolve(p: str) -> Path:
            path = Path(p.strip())
            return path if path.is_absolute() else base_dir / path

        def split_list(key: str) -> List[str]:
            return [item.strip() for item in values.get(key, "").split(",") if item.strip()]

        for key in ("MACHINE_PRICES", "MACHINE_SPECS", "CHAIN_CSV", "ENERGY_CSV", "REGION",
                    "HALVING_DATES", "FINAL_TRAIN", "FINAL_TEST"):
            if key not in values:
                problems.append(f"{key}: missing")

        splits: List[SplitDefinition] = []
        split_keys = sorted((k for k in values if k.startswith("SPLIT_")), key=lambda k: (len(k), k))
        for key in split_keys:
            try:
                train_text, eval_text = values[key].split("|")
                splits.append(SplitDefinition(
                    name=key.lower(), train=DateRange.parse(train_text), eval=DateRange.parse(eval_text)))
            except (ValueError, SplitError) as e:
                problems.append(f"{key}: {e}")

        halvings: List[date] = []
        for item in split_list("HALVING_DATES"):
            try:
                halvings.append(date.fromisoformat(item))
            except ValueError:
                problems.append(f"HALVING_DATES: bad date {item!r}")

        plan: Optional[SplitPlan] = None
        if "FINAL_TRAIN" in values and "FINAL_TEST" in values:
            try:
                plan = SplitPlan(
                    splits=tuple(splits),
                    final_train=DateRange.parse(values["FINAL_TRAIN"]),
                    final_test=DateRange.parse(values["FINAL_TEST"]),
                    purge_days=int(values.get("PURGE_DAYS", "0")),
                )
            except (ValueError, SplitError) as e:
                problems.append(f"split plan: {e}")

        if problems:
            raise ConfigError(problems, source=source)

        kwargs: Dict[str, object] = {
            "machine_prices": tuple(resolve(p) for p in split_list("MACHINE_PRICES")),
            "machine_specs": tuple(resolve(p) for p in split_list("MACHINE_SPECS")),
            "chain_csv": resolve(values["CHAIN_CSV"]),
            "energy_csv": resolve(values["ENERGY_CSV"]),
            "region": values["REGION"],
            "halving_dates": tuple(halvings),
            "plan": plan,
        }
        optional = {
            "WINDOW": "window", "HORIZON_DAYS": "horizon_days", "MAX_GAP_DAYS": "max_gap_days",
            "PRICE_FILL": "price_fill", "REVENUE_SOURCE": "revenue_source",
        }
        for key, field_name in optional.items():
            if key in values:
                kwargs[field_name] = values[key]
        if "FEATURE_ORDER" in values:
            kwargs["feature_order"] = tuple(split_list("FEATURE_ORDER"))

        try:
            return cls(**kwargs)
        except ValidationError as e:
            raise ConfigError(
                [f"{'.'.join(str(p) for p in err['loc'])}: {err['msg']}" for err in e.errors()],
                source=source,
            ) from e

    def with_window(self, window: int) -> "DatasetManifest":
        return self.model_copy(update={"window": window})

    def to_key_values(self) -> Dict[str, object]:
        values: Dict[str, object] = {
            "MACHINE_PRICES": ",".join(str(p) for p in self.machine_prices),
            "MACHINE_SPECS": ",".join(str(p) for p in self.machine_specs),
            "CHAIN_CSV": str(self.chain_csv),
            "ENERGY_CSV": str(self.energy_csv),
            "REGION": self.region,
            "WINDOW": self.window,
            "HORIZON_DAYS": self.horizon_days,
            "HALVING_DATES": ",".join(d.isoformat() for d in self.halving_dates),
            "FINAL_TRAIN": str(self.plan.final_train),
            "FINAL_TEST": str(self.plan.final_test),
            "PURGE_DAYS": self.plan.purge_days,
            "MAX_GAP_DAYS": self.max_gap_days,
            "PRICE_FILL": self.price_fill.value,
            "REVENUE_SOURCE": self.revenue_source.value,
            "FEATURE_ORDER": ",".join(self.feature_order),
        }
        for i, split in enumerate(self.plan.splits, 1):
            values[f"SPLIT_{i}"] = f"{split.train}|{split.eval}"
        return values


class RunManifest(BaseModel):
    """Provenance record written into every artifact directory."""

    command: str
    config_path: Optional[str] = None
    data_hash: Optional[str] = None
    seeds: Tuple[int, ...] = ()
    output_dir: str
    tool_version: str
    settings: Dict[str, str] = Field(default_factory=dict)

    def to_key_values(self) -> Dict[str, object]:
        values: Dict[str, object] = {
            "COMMAND": self.command,
            "CONFIG_PATH": self.config_path or "",
            "DATA_HASH": self.data_hash or "",
            "SEEDS": ",".join(str(s) for s in self.seeds),
            "OUTPUT_DIR": self.output_dir,
            "TOOL_VERSION": self.tool_version,
        }
        values.update({k.upper(): v for k, v in self.settings.items()})
        return values


def date_range(start: date, end: date) -> List[date]:
    """Calendar days in [start, end)."""
    return [start + timedelta(days=i) for i in range((end - start).days)]


class RawRecord(BaseModel):
    """Base for CSV rows: strict about non-finite numbers."""
    model_config = ConfigDict(allow_inf_nan=False, str_strip_whitespace=True)


class ChainRecord(RawRecord):
    """Raw chain CSV row."""
    date: dt.date
    btc_price_usd: float = Field(..., ge=0)
    difficulty: float = Field(..., ge=0)
    network_hashrate_ths: float = Field(..., gt=0)
    network_revenue_usd: float = Field(..., ge=0)
    block_reward_btc: float = Field(..., ge=0)
    transaction_fees_btc: float = Field(..., ge=0)


class EnergyRecord(RawRecord):
    """Raw energy CSV row."""
    date: dt.date
    region: str = Field(..., min_length=1)
    rate_usd_per_kwh: float = Field(..., ge=0)


class MachinePriceRecord(RawRecord):
    """Raw machine price CSV row."""
    machine_id: str = Field(..., min_length=1)
    date: dt.date
    price_usd: float = Field(..., gt=0)


class MachineSpecRecord(RawRecord):
    """Raw machine spec sidecar row."""
    machine_id: str = Field(..., min_length=1)
    hashrate_ths: float = Field(..., gt=0)
    power_w: float = Field(..., gt=0)
    efficiency_jth: float = Field(..., gt=0)
    release_date: dt.date


def validated(model_cls, values: Dict[str, object], source: Optional[str] = None):
    """Construct a pydantic model, turning every validation failure into one ConfigError."""
    try:
        return model_cls(**values)
    except ValidationError as e:
        raise ConfigError(
            [f"{'.'.join(str(p) for p in err['loc']) or model_cls.__name__}: {err['msg']}" for err in e.errors()],
            source=source,
        ) from e
