"""
Preprocessing for window samples: Min-Max scaling fitted on training rows only,
and inverse-frequency class weights.
"""

from dataclasses import dataclass
from typing import Iterable, Sequence, Union

import numpy as np
from sklearn.preprocessing import MinMaxScaler

from mining_etl.core.errors import MetricError, ShapeError, SplitError
from mining_etl.core.models import FeatureRow

try:
    from .logging_config import get_ml_logger
except ImportError:
    from logging_config import get_ml_logger
logger = get_ml_logger(__name__)

N_CLASSES = 3


@dataclass(frozen=True)
class Scaler:
    """Per-feature min/max from the training split. Arrays are read-only."""
    data_min: np.ndarray
    data_max: np.ndarray

    def __post_init__(self):
        lo = np.array(self.data_min, dtype=np.float64)
        hi = np.array(self.data_max, dtype=np.float64)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ShapeError(f"scaler bounds must be equal-length vectors, got {lo.shape} and {hi.shape}")
        if np.any(lo > hi):
            raise ValueError("scaler min must not exceed max")
        lo.setflags(write=False)
        hi.setflags(write=False)
        object.__setattr__(self, "data_min", lo)
        object.__setattr__(self, "data_max", hi)

    @property
    def n_features(self) -> int:
        return self.data_min.shape[0]

    def transform(self, x: np.ndarray) -> np.ndarray:
        """(x - min) / (max - min) on the last axis; constant features map to 0; no clamping."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-1] != self.n_features:
            raise ShapeError(f"expected {self.n_features} features, got {x.shape[-1]}")
        span = self.data_max - self.data_min
        constant = span == 0
        safe_span = np.where(constant, 1.0, span)
        out = (x - self.data_min) / safe_span
        return np.where(constant, 0.0, out)


def _as_matrix(rows: Union[np.ndarray, Sequence[FeatureRow]]) -> np.ndarray:
    if isinstance(rows, np.ndarray):
        return rows.reshape(-1, rows.shape[-1]) if rows.ndim > 2 else np.atleast_2d(rows)
    return np.array([r.features for r in rows], dtype=np.float64)


def fit_scaler(rows: Union[np.ndarray, Sequence[FeatureRow]]) -> Scaler:
    """Fit per-feature min/max on training rows (FeatureRows, an (n, F) matrix or an (N, L, F) stack)."""
    matrix = _as_matrix(rows)
    if matrix.size == 0 or matrix.shape[0] == 0:
        raise SplitError("Cannot fit a scaler on an empty training set")
    fitted = MinMaxScaler().fit(matrix)
    scaler = Scaler(fitted.data_min_, fitted.data_max_)
    n_constant = int(np.sum(scaler.data_min == scaler.data_max))
    if n_constant:
        logger.info(f"Scaler fitted on {matrix.shape[0]} rows; {n_constant} constant feature(s) map to 0")
    return scaler


def transform(scaler: Scaler, row: Union[np.ndarray, FeatureRow]) -> np.ndarray:
    """Normalize one row (or any array whose last axis is the feature axis)."""
    values = np.array(row.features) if isinstance(row, FeatureRow) else row
    return scaler.transform(values)


def class_weights(labels: Iterable[int]) -> np.ndarray:
    """Inverse-frequency weights w_c = N / (3 n_c)."""
    y = np.asarray(list(labels), dtype=np.int64)
    if y.size and (y.min() < 0 or y.max() >= N_CLASSES):
        raise MetricError(f"labels must be in 0..{N_CLASSES - 1}")
    counts = np.bincount(y, minlength=N_CLASSES).astype(np.float64)
    absent = [c for c in range(N_CLASSES) if counts[c] == 0]
    if absent:
        raise SplitError(
            f"Class(es) {absent} absent from the training labels (counts {counts.astype(int).tolist()}); "
            "audit the ROI labels or widen the training range"
        )
    weights = y.size / (N_CLASSES * counts)
    logger.info(f"Class counts {counts.astype(int).tolist()} -> weights {np.round(weights, 4).tolist()}")
    return weights


def class_weights_from_fractions(fractions: Sequence[float]) -> np.ndarray:
    """Same formula from class proportions instead of counts."""
    f = np.asarray(fractions, dtype=np.float64)
    if f.shape != (N_CLASSES,) or np.any(f <= 0):
        raise SplitError(f"need {N_CLASSES} positive class fractions, got {fractions}")
    return f.sum() / (N_CLASSES * f)
