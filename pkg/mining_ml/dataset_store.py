"""
On-disk labeled window dataset.

Layout of a dataset directory:
    windows.npy    raw (un-normalized) N x L x F windows
    samples.csv    index, machine_id, end_date, label, roi
    features.csv   daily feature rows per machine (used for prediction)
    splits.csv     index, split, role for every plan membership of a sample
    dataset.json   hash, window, horizon, region, feature order, manifest

The hash is a sha256 over the four data files, so rebuilding from unchanged
inputs gives the same value.
"""

import hashlib
import io
import json
from datetime import date, timedelta
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Set

import numpy as np
import pandas as pd

from mining_etl.core.errors import ConfigError, ParseError
from mining_etl.core.models import FEATURE_NAMES, DatasetManifest, DateRange, FeatureRow, SplitPlan

from .data_splitting import SplitData, assignment, count_unassigned, make_split, select
from .feature_engineering import WindowSample

try:
    from .logging_config import get_ml_logger
except ImportError:
    from logging_config import get_ml_logger
logger = get_ml_logger(__name__)

DATA_FILES = ("windows.npy", "samples.csv", "features.csv", "splits.csv")
INFO_FILE = "dataset.json"


def _samples_frame(samples: Sequence[WindowSample]) -> pd.DataFrame:
    return pd.DataFrame({
        "index": np.arange(len(samples)),
        "machine_id": [s.machine_id for s in samples],
        "end_date": [s.end_date.isoformat() for s in samples],
        "label": [s.label for s in samples],
        "roi": [s.roi for s in samples],
    })


def _features_frame(rows: Dict[str, Sequence[FeatureRow]]) -> pd.DataFrame:
    records = []
    for machine_id in sorted(rows):
        for row in sorted(rows[machine_id], key=lambda r: r.date):
            records.append([machine_id, row.date.isoformat(), *row.features])
    return pd.DataFrame(records, columns=["machine_id", "date", *FEATURE_NAMES])


def _splits_frame(samples: Sequence[WindowSample], plan: SplitPlan) -> pd.DataFrame:
    records = [(i, name, role) for i, s in enumerate(samples) for name, role in assignment(s, plan)]
    return pd.DataFrame(records, columns=["index", "split", "role"])


def _npy_bytes(array: np.ndarray) -> bytes:
    buffer = io.BytesIO()
    np.save(buffer, array, allow_pickle=False)
    return buffer.getvalue()


def _hash_files(directory: Path) -> str:
    digest = hashlib.sha256()
    for name in DATA_FILES:
        digest.update(name.encode("utf-8"))
        digest.update((directory / name).read_bytes())
    return digest.hexdigest()


def write_dataset(out_dir: Path, samples: Sequence[WindowSample], rows: Dict[str, Sequence[FeatureRow]],
                  manifest: DatasetManifest) -> str:
    """Write the dataset directory and return its hash."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    window = manifest.window
    F = len(manifest.feature_order)
    windows = np.stack([s.matrix for s in samples]) if samples else np.zeros((0, window, F))

    (out_dir / "windows.npy").write_bytes(_npy_bytes(np.ascontiguousarray(windows, dtype="<f8")))
    _samples_frame(samples).to_csv(out_dir / "samples.csv", index=False)
    _features_frame(rows).to_csv(out_dir / "features.csv", index=False)
    _splits_frame(samples, manifest.plan).to_csv(out_dir / "splits.csv", index=False)

    dataset_hash = _hash_files(out_dir)
    info = {
        "hash": dataset_hash,
        "window": window,
        "horizon_days": manifest.horizon_days,
        "region": manifest.region,
        "feature_order": list(manifest.feature_order),
        "n_samples": len(samples),
        "class_counts": np.bincount([s.label for s in samples], minlength=3).tolist(),
        "manifest": {k: str(v) for k, v in manifest.to_key_values().items()},
    }
    (out_dir / INFO_FILE).write_text(json.dumps(info, indent=2, sort_keys=True) + "\n", encoding="utf-8")

    unassigned = count_unassigned(samples, manifest.plan)
    if unassigned:
        logger.warning(f"{unassigned} of {len(samples)} windows fall outside every split range")
    logger.info(f"Wrote dataset {dataset_hash[:12]} ({len(samples)} windows, L={window}) to {out_dir}")
    return dataset_hash


class DatasetStore:
    """Read access to a dataset directory, with accounting of which sample dates were handed out."""

    def __init__(self, directory: Path, verify: bool = True):
        self.directory = Path(directory)
        info_path = self.directory / INFO_FILE
        if not info_path.exists():
            raise ParseError("dataset info not found (run `mineroi build` first)", path=info_path)
        self.info = json.loads(info_path.read_text(encoding="utf-8"))
        if verify:
            actual = _hash_files(self.directory)
            if actual != self.info["hash"]:
                raise ConfigError([f"dataset hash mismatch: recorded {self.info['hash']}, files hash to {actual}"],
                                  source=str(self.directory))
        self.manifest = DatasetManifest.from_key_values(self.info["manifest"], source=str(info_path))
        self._samples: Optional[List[WindowSample]] = None
        self.accessed_dates: Set[date] = set()

    @property
    def hash(self) -> str:
        return self.info["hash"]

    @property
    def window(self) -> int:
        return int(self.info["window"])

    @property
    def feature_order(self) -> tuple:
        return tuple(self.info["feature_order"])

    @property
    def plan(self) -> SplitPlan:
        return self.manifest.plan

    def _load(self) -> List[WindowSample]:
        if self._samples is None:
            windows = np.load(self.directory / "windows.npy", allow_pickle=False)
            frame = pd.read_csv(self.directory / "samples.csv", dtype={"machine_id": str},
                                float_precision="round_trip")
            samples = []
            for position, row in enumerate(frame.itertuples(index=False)):
                end = date.fromisoformat(row.end_date)
                samples.append(WindowSample(
                    machine_id=row.machine_id,
                    end_date=end,
                    matrix=windows[position],
                    label=int(row.label),
                    roi=float(row.roi),
                    row_dates=tuple(end - timedelta(days=k) for k in range(self.window - 1, -1, -1)),
                ))
            self._samples = samples
        return self._samples

    def __len__(self) -> int:
        return len(self._load())

    def _record(self, samples: Sequence[WindowSample]) -> None:
        self.accessed_dates.update(s.end_date for s in samples)

    def select(self, date_range: DateRange, purge_days: int = 0) -> List[WindowSample]:
        chosen = select(self._load(), date_range, purge_days)
        self._record(chosen)
        return chosen

    def split(self, name: str, train_range: DateRange, eval_range: DateRange, purge_days: int = 0) -> SplitData:
        data = make_split(name, self._load(), train_range, eval_range, purge_days)
        self._record(data.train)
        self._record(data.eval)
        return data

    def validation_splits(self) -> List[SplitData]:
        return [self.split(s.name, s.train, s.eval, self.plan.purge_days) for s in self.plan.splits]

    def touched(self, date_range: DateRange) -> bool:
        """True when any handed-out sample ends inside the range."""
        return any(date_range.contains(d) for d in self.accessed_dates)

    def feature_rows(self, machine_id: str) -> List[FeatureRow]:
        frame = pd.read_csv(self.directory / "features.csv", dtype={"machine_id": str},
                            float_precision="round_trip")
        frame = frame[frame["machine_id"] == machine_id]
        if frame.empty:
            raise ConfigError([f"machine {machine_id!r} not in dataset"], source=str(self.directory))
        return [
            FeatureRow(machine_id=machine_id, date=date.fromisoformat(r[1]),
                       features=tuple(float(v) for v in r[2:]))
            for r in frame[["machine_id", "date", *FEATURE_NAMES]].itertuples(index=False, name=None)
        ]

    def split_table(self) -> pd.DataFrame:
        return pd.read_csv(self.directory / "splits.csv")
