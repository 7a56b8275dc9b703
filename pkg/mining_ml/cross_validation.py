"""
Expanding-window cross-validation, final evaluation, config sweeps and the
look-back ablation.

Each (split, seed) run fits on the split's train samples (the chronological tail
held out for epoch selection), then is scored once on the split's eval range.
Runs are independent and can be spread over processes with joblib.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from mining_etl.core.errors import MetricError, SplitError

from .data_splitting import FINAL_SPLIT_NAME, SplitData, holdout_tail, stack
from .dataset_store import DatasetStore
from .evaluation import EvalReport, aggregate_table, evaluate, split_table
from .experiment import ExperimentConfig
from .model_trainer import TrainResult, predict_proba, train
from .preprocessing import Scaler, class_weights, fit_scaler

try:
    from .logging_config import get_ml_logger
except ImportError:
    from logging_config import get_ml_logger
logger = get_ml_logger(__name__)


@dataclass
class SplitRun:
    split: str
    seed: int
    report: EvalReport
    result: TrainResult
    y_true: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int), repr=False)
    probabilities: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)), repr=False)


@dataclass
class CrossValidationResult:
    experiment: ExperimentConfig
    runs: List[SplitRun] = field(default_factory=list)
    # scaler of the split the runs were scored on, set by final_evaluation
    scaler: Optional[Scaler] = None

    @property
    def reports(self) -> List[EvalReport]:
        return [r.report for r in self.runs]

    def table(self, title: str = "Cross-validation") -> str:
        return split_table(self.reports, title=f"{title} [{self.experiment.kind.value}, {self.experiment.label}]")

    def mean_macro_f1(self) -> float:
        return float(np.mean([r.macro_f1 for r in self.reports]))

    def mean_accuracy(self) -> float:
        return float(np.mean([r.accuracy for r in self.reports]))


def _scaled(split: SplitData, samples) -> Tuple[np.ndarray, np.ndarray]:
    X, y = stack(samples)
    return (split.scaler.transform(X) if len(samples) else X), y


def fit_on_split(split: SplitData, experiment: ExperimentConfig, seed: int,
                 select_epoch: bool = True) -> TrainResult:
    """Train one seed on a split's train samples.

    With select_epoch, the last `validation_fraction` of the train samples is held
    out to pick the epoch; otherwise all train samples are used and the final
    epoch is kept.
    """
    exp = experiment.with_seed(seed)
    if select_epoch:
        fit, validation = holdout_tail(split.train, exp.train.validation_fraction)
    else:
        fit, validation = list(split.train), []
    X_fit, y_fit = _scaled(split, fit)
    X_val, y_val = _scaled(split, validation) if validation else (None, None)
    return train(exp.kind, exp.model, exp.train, X_fit, y_fit, X_val, y_val, weights=split.class_weights)


def run_split(split: SplitData, experiment: ExperimentConfig, seed: int, select_epoch: bool = True) -> SplitRun:
    result = fit_on_split(split, experiment, seed, select_epoch)
    X_eval, y_eval = split.eval_arrays()
    probabilities = predict_proba(result.model, X_eval)
    report = evaluate(y_eval, probabilities, split=split.name, seed=seed)
    return SplitRun(split=split.name, seed=seed, report=report, result=result,
                    y_true=np.asarray(y_eval), probabilities=probabilities)


def _run_all(jobs: List[Tuple[SplitData, int]], experiment: ExperimentConfig, select_epoch: bool,
             n_jobs: int) -> List[SplitRun]:
    if n_jobs == 1:
        return [run_split(split, experiment, seed, select_epoch) for split, seed in jobs]
    runs = Parallel(n_jobs=n_jobs)(delayed(run_split)(split, experiment, seed, select_epoch) for split, seed in jobs)
    order = {(split.name, seed): i for i, (split, seed) in enumerate(jobs)}
    return sorted(runs, key=lambda r: order[(r.split, r.seed)])


def cross_validate(store: DatasetStore, experiment: ExperimentConfig, seeds: Sequence[int],
                   n_jobs: int = 1) -> CrossValidationResult:
    """Every validation split of the store's plan times every seed; the final test range is never read."""
    splits = store.validation_splits()
    if not splits:
        raise MetricError("the split plan has no validation splits to cross-validate")
    jobs = [(split, seed) for split in splits for seed in seeds]
    logger.info(f"Cross-validating {experiment.kind.value} [{experiment.label}] over {len(splits)} splits "
                f"x {len(seeds)} seeds (n_jobs={n_jobs})")
    runs = _run_all(jobs, experiment, select_epoch=True, n_jobs=n_jobs)
    return CrossValidationResult(experiment=experiment, runs=runs)


def final_evaluation(store: DatasetStore, experiment: ExperimentConfig, seeds: Sequence[int],
                     n_jobs: int = 1) -> CrossValidationResult:
    """Retrain on the full final train range per seed (final epoch) and score the test range once."""
    plan = store.plan
    split = store.split(FINAL_SPLIT_NAME, plan.final_train, plan.final_test, plan.purge_days)
    runs = _run_all([(split, seed) for seed in seeds], experiment, select_epoch=False, n_jobs=n_jobs)
    result = CrossValidationResult(experiment=experiment, runs=runs, scaler=split.scaler)
    if len(seeds) > 1:
        logger.info("\n" + aggregate_table(result.reports))
    return result


def train_final(store: DatasetStore, experiment: ExperimentConfig, seed: int) -> Tuple[TrainResult, Scaler]:
    """Fit on the final train range with its chronological tail held out for epoch selection.

    Scaler and class weights come from the whole final train range.
    """
    plan = store.plan
    train_samples = store.select(plan.final_train, plan.purge_days)
    if not train_samples:
        raise SplitError(f"no training samples with end date in {plan.final_train}")
    X_all, y_all = stack(train_samples)
    scaler = fit_scaler(X_all)
    weights = class_weights(y_all)

    exp = experiment.with_seed(seed)
    fit, validation = holdout_tail(train_samples, exp.train.validation_fraction)
    X_fit, y_fit = stack(fit)
    X_val, y_val = stack(validation) if validation else (None, None)
    result = train(exp.kind, exp.model, exp.train, scaler.transform(X_fit), y_fit,
                   scaler.transform(X_val) if validation else None, y_val, weights=weights)
    return result, scaler


def sweep(store: DatasetStore, experiments: Sequence[ExperimentConfig], seeds: Sequence[int],
          n_jobs: int = 1) -> Tuple[pd.DataFrame, List[CrossValidationResult]]:
    """Cross-validate every configuration and rank by mean validation macro F1."""
    results = [cross_validate(store, exp, seeds, n_jobs) for exp in experiments]
    frame = pd.DataFrame({
        "config": [r.experiment.label for r in results],
        "mean_accuracy": [r.mean_accuracy() for r in results],
        "mean_macro_f1": [r.mean_macro_f1() for r in results],
        "runs": [len(r.runs) for r in results],
    })
    frame = frame.sort_values("mean_macro_f1", ascending=False, kind="mergesort").reset_index(drop=True)
    frame.insert(0, "rank", np.arange(1, len(frame) + 1))
    logger.info(f"Sweep over {len(experiments)} configurations; best: {frame.loc[0, 'config']} "
                f"(macro F1 {frame.loc[0, 'mean_macro_f1']:.4f})")
    return frame, results


def ablation(stores: Dict[int, DatasetStore], experiments: Dict[int, ExperimentConfig], seeds: Sequence[int],
             n_jobs: int = 1) -> Dict[int, CrossValidationResult]:
    """Cross-validation per look-back window, each with its own dataset and preset."""
    return {window: cross_validate(stores[window], experiments[window], seeds, n_jobs) for window in sorted(stores)}
