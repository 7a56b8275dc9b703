"""
Mining ROI classification - learning side.

Windowed feature datasets, the MineROI-Net classifier (spectral extractor,
channel mixing, Transformer encoder) and its LSTM baseline, training with
weighted label-smoothed cross-entropy and AdamW, metrics and the
expanding-window cross-validation harness.
"""

from .feature_engineering import MiningFeatureEngineer, WindowSample
from .preprocessing import Scaler, fit_scaler
from .model import MineROINet, ModelConfig
from .lstm_baseline import LstmBaseline, LstmConfig
from .model_trainer import ModelKind, ModelTrainer, TrainConfig, train
from .dataset_store import DatasetStore
from .cross_validation import cross_validate, final_evaluation

__version__ = "0.1.0"

__all__ = [
    'MiningFeatureEngineer',
    'WindowSample',
    'Scaler',
    'fit_scaler',
    'MineROINet',
    'ModelConfig',
    'LstmBaseline',
    'LstmConfig',
    'ModelKind',
    'ModelTrainer',
    'TrainConfig',
    'train',
    'DatasetStore',
    'cross_validate',
    'final_evaluation',
]
