"""
Experiment configuration files.

An experiment file is `KEY=VALUE` text (same syntax as the data manifest) naming
the model kind, an optional preset, model overrides and training settings.
A comma-separated value on any model or training key turns the file into a
sweep over the cartesian product of the listed values.
"""

import itertools
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from mining_etl.core.config import read_key_values
from mining_etl.core.errors import ConfigError

from . import lstm_baseline
from . import model as mineroi_model
from .lstm_baseline import LstmConfig
from .model import ModelConfig
from .model_trainer import ModelKind, TrainConfig

MINEROI_KEYS = {
    "D_MODEL": "d_model",
    "N_HEADS": "n_heads",
    "N_LAYERS": "n_layers",
    "D_FF": "d_ff",
    "DROPOUT": "dropout",
    "REDUCTION": "reduction",
    "SPECTRAL_MODE": "spectral_mode",
    "HEAD_HIDDEN": "head_hidden",
}
LSTM_KEYS = {
    "HIDDEN_SIZE": "hidden_size",
    "LSTM_LAYERS": "n_layers",
    "LSTM_DROPOUT": "dropout",
    "REDUCTION": "reduction",
    "SPECTRAL_MODE": "spectral_mode",
}
TRAIN_KEYS = {
    "BATCH_SIZE": "batch_size",
    "MAX_EPOCHS": "max_epochs",
    "LEARNING_RATE": "learning_rate",
    "WEIGHT_DECAY": "weight_decay",
    "LABEL_SMOOTHING": "label_smoothing",
    "SELECTION_METRIC": "selection_metric",
    "VALIDATION_FRACTION": "validation_fraction",
}
META_KEYS = {"MODEL_KIND", "PRESET"}


@dataclass(frozen=True)
class ExperimentConfig:
    kind: ModelKind
    model: Union[ModelConfig, LstmConfig]
    train: TrainConfig
    preset: Optional[str] = None
    label: str = "base"

    def with_seed(self, seed: int) -> "ExperimentConfig":
        return ExperimentConfig(self.kind, self.model, self.train.model_copy(update={"seed": seed}),
                                self.preset, self.label)

    def to_key_values(self) -> Dict[str, object]:
        """Resolved settings for run manifests."""
        values: Dict[str, object] = {"MODEL_KIND": self.kind.value, "PRESET": self.preset or "",
                                     "SWEEP_POINT": self.label}
        for key, value in self.model.model_dump(mode="json").items():
            values[f"MODEL_{key.upper()}"] = "" if value is None else value
        for key, value in self.train.model_dump(mode="json").items():
            if isinstance(value, list):
                value = ",".join(str(v) for v in value)
            values[f"TRAIN_{key.upper()}"] = "" if value is None else value
        return values


def _model_keys(kind: ModelKind) -> Dict[str, str]:
    return MINEROI_KEYS if kind is ModelKind.MINEROI else LSTM_KEYS


def _build(kind: ModelKind, preset_name: Optional[str], model_values: Dict[str, Any],
           train_values: Dict[str, Any], window: int, n_features: int, source: Optional[str],
           label: str) -> ExperimentConfig:
    problems: List[str] = []
    module = mineroi_model if kind is ModelKind.MINEROI else lstm_baseline
    config_cls = ModelConfig if kind is ModelKind.MINEROI else LstmConfig
    base: Dict[str, Any] = {}
    if preset_name is not None:
        if preset_name not in module.PRESETS:
            problems.append(f"PRESET: unknown preset {preset_name!r}; choose from {sorted(module.PRESETS)}")
        else:
            base = dict(module.PRESETS[preset_name])
    base.update(model_values)
    base.update(window=window, n_features=n_features)

    model_cfg = train_cfg = None
    try:
        model_cfg = config_cls.create(source=source, **base)
    except ConfigError as e:
        problems.extend(e.problems)
    try:
        train_cfg = TrainConfig.create(source=source, **train_values)
    except ConfigError as e:
        problems.extend(e.problems)
    if problems:
        raise ConfigError(problems, source=source)
    return ExperimentConfig(kind, model_cfg, train_cfg, preset_name, label)


def expand_experiments(values: Dict[str, str], window: int, n_features: int = 14,
                       source: Optional[str] = None) -> List[ExperimentConfig]:
    """All configurations described by one experiment file, in file order of the swept keys."""
    problems: List[str] = []
    try:
        kind = ModelKind(values.get("MODEL_KIND", ModelKind.MINEROI.value).lower())
    except ValueError:
        raise ConfigError([f"MODEL_KIND: expected one of {[k.value for k in ModelKind]}, "
                           f"got {values['MODEL_KIND']!r}"], source=source)
    model_keys = _model_keys(kind)

    axes: Dict[str, List[str]] = {}
    for key, raw in values.items():
        if key in META_KEYS:
            continue
        if key not in model_keys and key not in TRAIN_KEYS:
            problems.append(f"{key}: not a {kind.value} model or training key")
            continue
        axes[key] = [item.strip() for item in raw.split(",") if item.strip()]
    if problems:
        raise ConfigError(problems, source=source)

    keys = list(axes)
    swept = [k for k in keys if len(axes[k]) > 1]
    experiments = []
    for combo in itertools.product(*(axes[k] for k in keys)):
        chosen = dict(zip(keys, combo))
        model_values = {model_keys[k]: v for k, v in chosen.items() if k in model_keys}
        train_values = {TRAIN_KEYS[k]: v for k, v in chosen.items() if k in TRAIN_KEYS}
        label = ",".join(f"{k.lower()}={chosen[k]}" for k in swept) or "base"
        experiments.append(_build(kind, values.get("PRESET"), model_values, train_values,
                                  window, n_features, source, label))
    return experiments


def load_experiments(path: Path, window: int, n_features: int = 14) -> List[ExperimentConfig]:
    return expand_experiments(read_key_values(path), window, n_features, source=str(path))


def load_experiment(path: Path, window: int, n_features: int = 14) -> ExperimentConfig:
    """Single-configuration file; a sweep here is a configuration error."""
    experiments = load_experiments(path, window, n_features)
    if len(experiments) != 1:
        raise ConfigError([f"expected one configuration, file describes a sweep of {len(experiments)}"],
                          source=str(path))
    return experiments[0]


def default_experiment(kind: ModelKind, window: int, n_features: int = 14) -> ExperimentConfig:
    """Preset matching the window (base-60 for 60 days, else base-30)."""
    name = "base-60" if window == 60 else "base-30"
    return _build(ModelKind(kind), name, {}, {}, window, n_features, None, "base")
