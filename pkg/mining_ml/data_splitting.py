"""
Expanding-window split assignment for window samples.

Samples are assigned by their end date d_i with half-open [start, end) ranges.
Scaler and class weights of a split are fitted on that split's train samples only.
"""

from dataclasses import dataclass, field
from datetime import timedelta
from typing import List, Sequence, Tuple

import numpy as np

from mining_etl.core.errors import SplitError
from mining_etl.core.models import DateRange, SplitPlan

from .feature_engineering import WindowSample
from .preprocessing import Scaler, class_weights, fit_scaler

try:
    from .logging_config import get_ml_logger
except ImportError:
    from logging_config import get_ml_logger
logger = get_ml_logger(__name__)

FINAL_SPLIT_NAME = "final"


def stack(samples: Sequence[WindowSample]) -> Tuple[np.ndarray, np.ndarray]:
    """(N, L, F) matrices and (N,) labels."""
    if not samples:
        return np.zeros((0, 0, 0)), np.zeros(0, dtype=np.int64)
    X = np.stack([s.matrix for s in samples])
    y = np.array([s.label for s in samples], dtype=np.int64)
    return X, y


def select(samples: Sequence[WindowSample], date_range: DateRange, purge_days: int = 0) -> List[WindowSample]:
    """Samples whose end date falls in the range, minus the last `purge_days` days of it."""
    end = date_range.end - timedelta(days=purge_days)
    return [s for s in samples if date_range.start <= s.end_date < end]


@dataclass
class SplitData:
    """Train/eval samples of one split with the statistics fitted on its train part."""
    name: str
    train: List[WindowSample]
    eval: List[WindowSample]
    scaler: Scaler
    class_weights: np.ndarray
    train_range: DateRange
    eval_range: DateRange
    train_counts: List[int] = field(default_factory=list)
    eval_counts: List[int] = field(default_factory=list)

    def train_arrays(self) -> Tuple[np.ndarray, np.ndarray]:
        X, y = stack(self.train)
        return self.scaler.transform(X), y

    def eval_arrays(self) -> Tuple[np.ndarray, np.ndarray]:
        X, y = stack(self.eval)
        return self.scaler.transform(X), y


def make_split(name: str, samples: Sequence[WindowSample], train_range: DateRange,
               eval_range: DateRange, purge_days: int = 0) -> SplitData:
    train = select(samples, train_range, purge_days)
    evaluation = select(samples, eval_range)
    if not train:
        raise SplitError(f"{name}: no training samples with end date in {train_range}")
    if not evaluation:
        raise SplitError(f"{name}: no evaluation samples with end date in {eval_range}")

    X_train, y_train = stack(train)
    scaler = fit_scaler(X_train)
    weights = class_weights(y_train)
    split = SplitData(
        name=name,
        train=train,
        eval=evaluation,
        scaler=scaler,
        class_weights=weights,
        train_range=train_range,
        eval_range=eval_range,
        train_counts=np.bincount(y_train, minlength=3).tolist(),
        eval_counts=np.bincount(stack(evaluation)[1], minlength=3).tolist(),
    )
    logger.info(f"{name}: train {train_range} -> {len(train)} samples {split.train_counts}, "
                f"eval {eval_range} -> {len(evaluation)} samples {split.eval_counts}")
    return split


def build_splits(samples: Sequence[WindowSample], plan: SplitPlan) -> List[SplitData]:
    """One SplitData per validation split of the plan, in plan order."""
    return [make_split(s.name, samples, s.train, s.eval, plan.purge_days) for s in plan.splits]


def build_final_split(samples: Sequence[WindowSample], plan: SplitPlan) -> SplitData:
    """Final train range against the final test range."""
    return make_split(FINAL_SPLIT_NAME, samples, plan.final_train, plan.final_test, plan.purge_days)


def holdout_tail(samples: Sequence[WindowSample], fraction: float
                 ) -> Tuple[List[WindowSample], List[WindowSample]]:
    """Split off the chronologically last `fraction` of samples (by end date) for epoch selection."""
    if not 0 <= fraction < 1:
        raise SplitError(f"validation fraction must be in [0, 1), got {fraction}")
    ordered = sorted(samples, key=lambda s: (s.end_date, s.machine_id))
    n_val = int(round(len(ordered) * fraction))
    if n_val == 0:
        return ordered, []
    cut_date = ordered[len(ordered) - n_val].end_date
    # keep whole days on one side
    fit = [s for s in ordered if s.end_date < cut_date]
    validation = [s for s in ordered if s.end_date >= cut_date]
    if not fit:
        raise SplitError("validation hold-out leaves no training samples")
    return fit, validation


def assignment(sample: WindowSample, plan: SplitPlan) -> List[Tuple[str, str]]:
    """(split name, role) pairs a sample belongs to; role is 'train', 'eval' or 'test'."""
    roles: List[Tuple[str, str]] = []
    for split in plan.splits:
        if select([sample], split.train, plan.purge_days):
            roles.append((split.name, "train"))
        if split.eval.contains(sample.end_date):
            roles.append((split.name, "eval"))
    if select([sample], plan.final_train, plan.purge_days):
        roles.append((FINAL_SPLIT_NAME, "train"))
    if plan.final_test.contains(sample.end_date):
        roles.append((FINAL_SPLIT_NAME, "test"))
    return roles


def count_unassigned(samples: Sequence[WindowSample], plan: SplitPlan) -> int:
    """Number of samples that no range of the plan covers (logged at build time)."""
    return sum(1 for s in samples if not assignment(s, plan))
