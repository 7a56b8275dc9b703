"""
Training for MineROI-Net and the LSTM baseline.

Objective is class-weighted cross-entropy on label-smoothed targets, optimized
with AdamW (decoupled weight decay) at a constant learning rate. All randomness
comes from the run seed: model init uses `seed`, shuffling `[seed, 1]`, dropout
`[seed, 2]`.
"""

from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator
from scipy.special import logsumexp

from mining_etl.core.errors import DomainError, ShapeError, SplitError
from mining_etl.core.models import validated

from .evaluation import confusion, metrics
from .lstm_baseline import LstmBaseline, LstmConfig
from .model import MineROINet, ModelConfig
from .preprocessing import N_CLASSES, class_weights

try:
    from .logging_config import get_ml_logger
except ImportError:
    from logging_config import get_ml_logger
logger = get_ml_logger(__name__)

Params = Dict[str, np.ndarray]
Model = Union[MineROINet, LstmBaseline]
AnyModelConfig = Union[ModelConfig, LstmConfig]

PREDICT_BATCH_SIZE = 256
DEFAULT_SEEDS = (42, 43, 44, 45, 46)


class ModelKind(str, Enum):
    MINEROI = "mineroi"
    LSTM = "lstm"


class SelectionMetric(str, Enum):
    VAL_MACRO_F1 = "val_macro_f1"
    VAL_ACCURACY = "val_accuracy"
    VAL_LOSS = "val_loss"


class TrainConfig(BaseModel):
    """Optimizer and loop settings for one training run."""
    model_config = ConfigDict(frozen=True)

    batch_size: int = Field(64, ge=1)
    max_epochs: int = Field(20, ge=1)
    learning_rate: Optional[float] = Field(None, gt=0, description="None uses the model config's rate")
    weight_decay: float = Field(1e-5, ge=0)
    label_smoothing: float = Field(0.1, ge=0.0, lt=1.0)
    class_weights: Optional[Tuple[float, float, float]] = None
    seed: int = 42
    selection_metric: SelectionMetric = SelectionMetric.VAL_MACRO_F1
    validation_fraction: float = Field(0.1, gt=0.0, lt=1.0)

    @field_validator("class_weights")
    @classmethod
    def weights_positive(cls, v: Optional[Tuple[float, float, float]]):
        if v is not None and not all(np.isfinite(w) and w > 0 for w in v):
            raise ValueError("class weights must be finite and strictly positive")
        return v

    @classmethod
    def create(cls, source: Optional[str] = None, **values: Any) -> "TrainConfig":
        return validated(cls, values, source)


def build_model(kind: ModelKind, config: AnyModelConfig, seed: int = 0) -> Model:
    kind = ModelKind(kind)
    if kind is ModelKind.MINEROI:
        if not isinstance(config, ModelConfig):
            raise DomainError("MineROI-Net needs a ModelConfig")
        return MineROINet(config, seed=seed)
    if not isinstance(config, LstmConfig):
        raise DomainError("the LSTM baseline needs an LstmConfig")
    return LstmBaseline(config, seed=seed)


# --- objective ----------------------------------------------------------------

def one_hot(labels: Sequence[int]) -> np.ndarray:
    y = np.asarray(labels, dtype=np.int64)
    if y.size and (y.min() < 0 or y.max() >= N_CLASSES):
        raise DomainError(f"labels must be in 0..{N_CLASSES - 1}")
    return np.eye(N_CLASSES)[y]


def smooth_labels(y: np.ndarray, epsilon: float) -> np.ndarray:
    """(1 - eps) * y + eps / 3 for one-hot y, a single 3-vector or a (B, 3) batch."""
    y = np.asarray(y, dtype=np.float64)
    if not 0.0 <= epsilon < 1.0:
        raise DomainError(f"label smoothing must be in [0, 1), got {epsilon}")
    if y.shape[-1] != N_CLASSES or not np.isin(y, (0.0, 1.0)).all() or not np.all(y.sum(axis=-1) == 1.0):
        raise DomainError("smooth_labels expects one-hot targets")
    return (1.0 - epsilon) * y + epsilon / N_CLASSES


def _check_logits(logits: np.ndarray) -> np.ndarray:
    logits = np.asarray(logits, dtype=np.float64)
    if logits.ndim != 2 or logits.shape[1] != N_CLASSES:
        raise ShapeError(f"logits must be (B, {N_CLASSES}), got {logits.shape}")
    if not np.all(np.isfinite(logits)):
        raise DomainError("logits contain non-finite values")
    return logits


def weighted_ce(logits: np.ndarray, targets: np.ndarray, weights: Sequence[float]) -> float:
    """-(1/B) sum_i sum_c w_c t_ic log softmax(logits)_ic, via log-sum-exp."""
    logits = _check_logits(logits)
    log_p = logits - logsumexp(logits, axis=1, keepdims=True)
    q = np.asarray(targets, dtype=np.float64) * np.asarray(weights, dtype=np.float64)
    return float(-(q * log_p).sum() / logits.shape[0])


def weighted_ce_grad(logits: np.ndarray, targets: np.ndarray, weights: Sequence[float]) -> np.ndarray:
    """d weighted_ce / d logits."""
    logits = _check_logits(logits)
    p = np.exp(logits - logsumexp(logits, axis=1, keepdims=True))
    q = np.asarray(targets, dtype=np.float64) * np.asarray(weights, dtype=np.float64)
    return (q.sum(axis=1, keepdims=True) * p - q) / logits.shape[0]


# --- optimizer ----------------------------------------------------------------

@dataclass
class AdamWState:
    step: int
    m: Params
    v: Params

    @classmethod
    def zeros_like(cls, params: Params) -> "AdamWState":
        return cls(0, {k: np.zeros_like(p) for k, p in params.items()},
                   {k: np.zeros_like(p) for k, p in params.items()})


def adamw_step(params: Params, grads: Params, state: AdamWState, lr: float, weight_decay: float,
               beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> Tuple[Params, AdamWState]:
    """One AdamW update; returns new parameter and state dicts, inputs are left untouched.

    Decay is applied to the parameter directly (p -= lr * wd * p) before the
    bias-corrected Adam step, so it does not depend on the gradient.
    """
    if set(params) != set(grads) or set(params) != set(state.m):
        raise ShapeError("params, grads and optimizer state name different tensors")
    t = state.step + 1
    bias1 = 1.0 - beta1 ** t
    bias2 = 1.0 - beta2 ** t
    new_params: Params = {}
    new_m: Params = {}
    new_v: Params = {}
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape or state.m[name].shape != p.shape:
            raise ShapeError(f"{name}: gradient {g.shape} / state {state.m[name].shape} vs param {p.shape}")
        m = beta1 * state.m[name] + (1.0 - beta1) * g
        v = beta2 * state.v[name] + (1.0 - beta2) * g * g
        decayed = p - lr * weight_decay * p
        new_params[name] = decayed - lr * (m / bias1) / (np.sqrt(v / bias2) + eps)
        new_m[name], new_v[name] = m, v
    return new_params, AdamWState(t, new_m, new_v)


# --- training loop --------------------------------------------------------------

@dataclass
class TrainHistory:
    epochs: List[int] = field(default_factory=list)
    train_loss: List[float] = field(default_factory=list)
    val_loss: List[float] = field(default_factory=list)
    val_accuracy: List[float] = field(default_factory=list)
    val_macro_f1: List[float] = field(default_factory=list)
    selected_epoch: Optional[int] = None

    def record(self, epoch: int, train_loss: float, val_loss: float, val_accuracy: float,
               val_macro_f1: float) -> None:
        self.epochs.append(epoch)
        self.train_loss.append(train_loss)
        self.val_loss.append(val_loss)
        self.val_accuracy.append(val_accuracy)
        self.val_macro_f1.append(val_macro_f1)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({
            "epoch": self.epochs,
            "train_loss": self.train_loss,
            "val_loss": self.val_loss,
            "val_acc": self.val_accuracy,
            "val_macro_f1": self.val_macro_f1,
        })

    def write_csv(self, path: Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False)
        return path


@dataclass
class TrainResult:
    model: Model
    history: TrainHistory
    class_weights: np.ndarray
    config: TrainConfig


def predict_logits(model: Model, X: np.ndarray, batch_size: int = PREDICT_BATCH_SIZE) -> np.ndarray:
    if len(X) == 0:
        return np.zeros((0, N_CLASSES))
    return np.concatenate([model.forward(X[i:i + batch_size], training=False, retain=False).logits
                           for i in range(0, len(X), batch_size)])


def predict_proba(model: Model, X: np.ndarray, batch_size: int = PREDICT_BATCH_SIZE) -> np.ndarray:
    if len(X) == 0:
        return np.zeros((0, N_CLASSES))
    return np.concatenate([model.predict_proba(X[i:i + batch_size]) for i in range(0, len(X), batch_size)])


def _better(metric: SelectionMetric, value: float, best: Optional[float]) -> bool:
    if best is None:
        return True
    if metric is SelectionMetric.VAL_LOSS:
        return value < best
    return value > best


class ModelTrainer:
    """Runs the seeded mini-batch loop and keeps the parameters of the selected epoch."""

    def __init__(self, kind: ModelKind, model_config: AnyModelConfig, train_config: TrainConfig):
        self.kind = ModelKind(kind)
        self.model_config = model_config
        self.train_config = train_config

    @property
    def learning_rate(self) -> float:
        if self.train_config.learning_rate is not None:
            return self.train_config.learning_rate
        return self.model_config.learning_rate

    def _resolve_weights(self, y: np.ndarray, weights: Optional[Sequence[float]]) -> np.ndarray:
        if self.train_config.class_weights is not None:
            return np.asarray(self.train_config.class_weights, dtype=np.float64)
        if weights is not None:
            w = np.asarray(weights, dtype=np.float64)
            if w.shape != (N_CLASSES,) or not np.all(w > 0):
                raise DomainError("class weights must be a strictly positive 3-vector")
            return w
        return class_weights(y)

    def _validate(self, model: Model, X: np.ndarray, y: np.ndarray, weights: np.ndarray) -> Tuple[float, float, float]:
        logits = predict_logits(model, X)
        targets = smooth_labels(one_hot(y), self.train_config.label_smoothing)
        loss = weighted_ce(logits, targets, weights)
        cm = confusion(y, logits.argmax(axis=1))
        m = metrics(cm)
        return loss, m.accuracy, m.macro_f1

    def fit(self, X_train: np.ndarray, y_train: np.ndarray, X_val: Optional[np.ndarray] = None,
            y_val: Optional[np.ndarray] = None, weights: Optional[Sequence[float]] = None) -> TrainResult:
        cfg = self.train_config
        X_train = np.asarray(X_train, dtype=np.float64)
        y_train = np.asarray(y_train, dtype=np.int64)
        if len(X_train) == 0:
            raise SplitError("training set is empty")
        if len(X_train) != len(y_train):
            raise ShapeError(f"{len(X_train)} training windows but {len(y_train)} labels")
        has_val = X_val is not None and len(X_val) > 0
        if has_val:
            X_val = np.asarray(X_val, dtype=np.float64)
            y_val = np.asarray(y_val, dtype=np.int64)

        w = self._resolve_weights(y_train, weights)
        model = build_model(self.kind, self.model_config, seed=cfg.seed)
        shuffle_rng = np.random.default_rng([cfg.seed, 1])
        dropout_rng = np.random.default_rng([cfg.seed, 2])
        state = AdamWState.zeros_like(model.params)
        lr = self.learning_rate
        targets_all = smooth_labels(one_hot(y_train), cfg.label_smoothing)

        logger.info(f"Training {self.kind.value} ({model.n_parameters} parameters) on {len(X_train)} windows, "
                    f"{len(X_val) if has_val else 0} validation, seed={cfg.seed}, lr={lr}, "
                    f"weights={np.round(w, 4).tolist()}")

        history = TrainHistory()
        best_value: Optional[float] = None
        best_params: Params = model.params
        n = len(X_train)
        for epoch in range(1, cfg.max_epochs + 1):
            order = shuffle_rng.permutation(n)
            loss_sum = 0.0
            for start in range(0, n, cfg.batch_size):
                idx = order[start:start + cfg.batch_size]
                trace = model.forward(X_train[idx], training=True, rng=dropout_rng)
                loss_sum += weighted_ce(trace.logits, targets_all[idx], w) * len(idx)
                grads = model.backward(trace, weighted_ce_grad(trace.logits, targets_all[idx], w))
                model.params, state = adamw_step(model.params, grads, state, lr, cfg.weight_decay)
            train_loss = loss_sum / n

            if has_val:
                val_loss, val_acc, val_f1 = self._validate(model, X_val, y_val, w)
            else:
                val_loss = val_acc = val_f1 = float("nan")
            history.record(epoch, train_loss, val_loss, val_acc, val_f1)
            logger.debug(f"epoch {epoch}: train_loss={train_loss:.5f} val_loss={val_loss:.5f} "
                         f"val_acc={val_acc:.4f} val_macro_f1={val_f1:.4f}")

            if has_val:
                value = {SelectionMetric.VAL_MACRO_F1: val_f1, SelectionMetric.VAL_ACCURACY: val_acc,
                         SelectionMetric.VAL_LOSS: val_loss}[cfg.selection_metric]
                if _better(cfg.selection_metric, value, best_value):
                    best_value, best_params, history.selected_epoch = value, model.params, epoch
            else:
                best_params, history.selected_epoch = model.params, epoch

        model.params = best_params
        logger.info(f"Selected epoch {history.selected_epoch} of {cfg.max_epochs}"
                    + (f" ({cfg.selection_metric.value}={best_value:.4f})" if has_val else " (final epoch)"))
        return TrainResult(model=model, history=history, class_weights=w, config=cfg)


def train(kind: ModelKind, model_config: AnyModelConfig, train_config: TrainConfig,
          X_train: np.ndarray, y_train: np.ndarray, X_val: Optional[np.ndarray] = None,
          y_val: Optional[np.ndarray] = None, weights: Optional[Sequence[float]] = None) -> TrainResult:
    return ModelTrainer(kind, model_config, train_config).fit(X_train, y_train, X_val, y_val, weights)
