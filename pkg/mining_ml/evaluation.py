"""
Classification metrics, seed aggregation and report emission.

Confusion rows are true classes, columns predicted classes. Undefined 0/0
fractions are reported as 0 and flagged. AUC is one-vs-rest, rank based.
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import pandas as pd
from jinja2 import Template
from scipy.stats import rankdata
from sklearn.metrics import confusion_matrix, roc_curve

from mining_etl.core.errors import MetricError
from mining_etl.core.models import ROI_CLASS_LEGEND

# Optional visualization imports
try:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    import seaborn as sns
    VISUALIZATION_AVAILABLE = True
except ImportError:
    VISUALIZATION_AVAILABLE = False

try:
    from .logging_config import get_ml_logger
except ImportError:
    from logging_config import get_ml_logger
logger = get_ml_logger(__name__)

CLASSES = (0, 1, 2)
N_CLASSES = len(CLASSES)
PROBABILITY_TOLERANCE = 1e-6

REPORT_COLUMNS = (
    ["split", "seed", "accuracy", "macro_f1"]
    + [f"prec_{c}" for c in CLASSES]
    + [f"rec_{c}" for c in CLASSES]
    + [f"f1_{c}" for c in CLASSES]
    + [f"auc_{c}" for c in CLASSES]
    + ["macro_precision", "macro_recall", "macro_auc"]
)
METRIC_COLUMNS = [c for c in REPORT_COLUMNS if c not in ("split", "seed")]


@dataclass(frozen=True)
class ConfusionMatrix:
    counts: np.ndarray

    def __post_init__(self):
        counts = np.array(self.counts, dtype=np.int64)
        if counts.shape != (N_CLASSES, N_CLASSES) or np.any(counts < 0):
            raise MetricError(f"confusion matrix must be a non-negative {N_CLASSES}x{N_CLASSES} count table")
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())


@dataclass
class ClassMetrics:
    accuracy: float
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    macro_precision: float
    macro_recall: float
    macro_f1: float
    # metric name -> classes where a 0/0 was reported as 0
    degenerate: Dict[str, List[int]] = field(default_factory=dict)


def _check_labels(y: np.ndarray, name: str) -> np.ndarray:
    y = np.asarray(y)
    if y.ndim != 1:
        raise MetricError(f"{name} must be a 1-D label sequence")
    if y.size and not np.isin(y, CLASSES).all():
        bad = sorted(set(np.unique(y).tolist()) - set(CLASSES))
        raise MetricError(f"{name} contains labels outside {{0,1,2}}: {bad}")
    return y.astype(np.int64)


def confusion(y_true: Sequence[int], y_pred: Sequence[int]) -> ConfusionMatrix:
    y_true = _check_labels(y_true, "true labels")
    y_pred = _check_labels(y_pred, "predicted labels")
    if y_true.shape != y_pred.shape:
        raise MetricError(f"label sequences differ in length: {y_true.size} vs {y_pred.size}")
    if y_true.size == 0:
        return ConfusionMatrix(np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64))
    return ConfusionMatrix(confusion_matrix(y_true, y_pred, labels=list(CLASSES)))


def _prf_divide(numerator: np.ndarray, denominator: np.ndarray, metric: str,
                degenerate: Dict[str, List[int]]) -> np.ndarray:
    """Divide with 0/0 set to 0; remember which classes were affected."""
    mask = denominator == 0
    safe = np.where(mask, 1, denominator).astype(np.float64)
    result = numerator / safe
    result[mask] = 0.0
    if mask.any():
        degenerate[metric] = np.flatnonzero(mask).tolist()
        logger.warning(f"{metric} undefined (0/0) for class(es) {degenerate[metric]}; reported as 0")
    return result


def metrics(cm: ConfusionMatrix) -> ClassMetrics:
    if cm.total == 0:
        raise MetricError("metrics of an empty confusion matrix are undefined")
    counts = cm.counts.astype(np.float64)
    tp = np.diag(counts)
    predicted = counts.sum(axis=0)
    actual = counts.sum(axis=1)

    degenerate: Dict[str, List[int]] = {}
    precision = _prf_divide(tp, predicted, "precision", degenerate)
    recall = _prf_divide(tp, actual, "recall", degenerate)
    denom = precision + recall
    f1 = _prf_divide(2 * precision * recall, denom, "f1", degenerate)

    return ClassMetrics(
        accuracy=float(np.trace(counts) / counts.sum()),
        precision=precision,
        recall=recall,
        f1=f1,
        macro_precision=float(np.mean(precision)),
        macro_recall=float(np.mean(recall)),
        macro_f1=float(np.mean(f1)),
        degenerate=degenerate,
    )


def binary_auc(scores: np.ndarray, positive: np.ndarray) -> float:
    """Mann-Whitney AUC with average ranks, so ties count 1/2."""
    n_pos = int(positive.sum())
    n_neg = positive.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise MetricError("AUC needs both positive and negative samples")
    ranks = rankdata(scores, method="average")
    u = ranks[positive].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def auc_ovr(probabilities: np.ndarray, y_true: Sequence[int], strict: bool = True) -> Dict[str, object]:
    """Per-class one-vs-rest AUC and their mean.

    With strict=False a class whose label set is one-sided gets NaN (and a
    warning) instead of raising; the macro value averages the defined classes.
    """
    p = np.asarray(probabilities, dtype=np.float64)
    y = _check_labels(y_true, "true labels")
    if p.ndim != 2 or p.shape != (y.size, N_CLASSES):
        raise MetricError(f"probabilities must be ({y.size}, {N_CLASSES}), got {p.shape}")
    if not np.allclose(p.sum(axis=1), 1.0, rtol=0, atol=PROBABILITY_TOLERANCE):
        raise MetricError("probability rows must sum to 1")

    per_class = np.full(N_CLASSES, np.nan)
    for c in CLASSES:
        try:
            per_class[c] = binary_auc(p[:, c], y == c)
        except MetricError as e:
            if strict:
                raise MetricError(f"AUC undefined for class {c}: {e}") from e
            logger.warning(f"AUC undefined for class {c} (single-class labels); recorded as NaN")
    defined = per_class[~np.isnan(per_class)]
    macro = float(defined.mean()) if defined.size else float("nan")
    return {"per_class": per_class, "macro": macro}


@dataclass
class EvalReport:
    split: str
    seed: int
    confusion: ConfusionMatrix
    metrics: ClassMetrics
    auc: np.ndarray
    macro_auc: float

    @property
    def accuracy(self) -> float:
        return self.metrics.accuracy

    @property
    def macro_f1(self) -> float:
        return self.metrics.macro_f1

    def to_row(self) -> Dict[str, object]:
        m = self.metrics
        row: Dict[str, object] = {"split": self.split, "seed": self.seed,
                                  "accuracy": m.accuracy, "macro_f1": m.macro_f1}
        for c in CLASSES:
            row[f"prec_{c}"] = float(m.precision[c])
        for c in CLASSES:
            row[f"rec_{c}"] = float(m.recall[c])
        for c in CLASSES:
            row[f"f1_{c}"] = float(m.f1[c])
        for c in CLASSES:
            row[f"auc_{c}"] = float(self.auc[c])
        row["macro_precision"] = m.macro_precision
        row["macro_recall"] = m.macro_recall
        row["macro_auc"] = self.macro_auc
        return row


def evaluate(y_true: Sequence[int], probabilities: np.ndarray, split: str, seed: int) -> EvalReport:
    p = np.asarray(probabilities, dtype=np.float64)
    y_pred = p.argmax(axis=1)
    cm = confusion(y_true, y_pred)
    auc = auc_ovr(p, y_true, strict=False)
    report = EvalReport(split=split, seed=seed, confusion=cm, metrics=metrics(cm),
                        auc=auc["per_class"], macro_auc=auc["macro"])
    logger.info(f"[{split} seed={seed}] accuracy={report.accuracy:.4f} macro_f1={report.macro_f1:.4f} "
                f"macro_auc={report.macro_auc:.4f} n={cm.total}")
    return report


def aggregate_seeds(reports: Sequence[EvalReport]) -> pd.DataFrame:
    """Mean and sample standard deviation (n-1) of every metric; index = metric, columns = mean, std."""
    if len(reports) < 2:
        raise MetricError(f"aggregation needs at least 2 reports, got {len(reports)}")
    frame = reports_frame(reports)[METRIC_COLUMNS].astype(np.float64)
    return pd.DataFrame({"mean": frame.mean(axis=0), "std": frame.std(axis=0, ddof=1)})


def reports_frame(reports: Sequence[EvalReport]) -> pd.DataFrame:
    return pd.DataFrame([r.to_row() for r in reports], columns=REPORT_COLUMNS)


def write_reports_csv(reports: Sequence[EvalReport], path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    reports_frame(reports).to_csv(path, index=False)
    return path


def write_confusion_blocks(reports: Sequence[EvalReport], path: Path) -> Path:
    """One header line and three count rows per report."""
    lines = []
    for r in reports:
        lines.append(f"# split={r.split},seed={r.seed}")
        lines.extend(",".join(str(int(v)) for v in row) for row in r.confusion.counts)
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")
    return Path(path)


def roc_points(probabilities: np.ndarray, y_true: Sequence[int]) -> pd.DataFrame:
    """One-vs-rest ROC curve points per class with both classes present."""
    p = np.asarray(probabilities, dtype=np.float64)
    y = _check_labels(y_true, "true labels")
    frames = []
    for c in CLASSES:
        positive = y == c
        if positive.all() or not positive.any():
            continue
        fpr, tpr, thresholds = roc_curve(positive.astype(int), p[:, c])
        frames.append(pd.DataFrame({"class": c, "fpr": fpr, "tpr": tpr, "threshold": thresholds}))
    if not frames:
        return pd.DataFrame(columns=["class", "fpr", "tpr", "threshold"])
    return pd.concat(frames, ignore_index=True)


def _pm(mean: float, std: float) -> str:
    return f"{mean:.3f} ± {std:.3f}"


_TABLE = Template(
    """{{ title }}
{{ rule }}
{% for row in rows -%}
{{ row }}
{% endfor -%}
{{ rule }}
"""
)


def _render(title: str, header: List[str], body: List[List[str]]) -> str:
    widths = [max(len(h), *(len(r[i]) for r in body)) if body else len(h) for i, h in enumerate(header)]
    fmt = lambda cells: "  ".join(c.ljust(w) for c, w in zip(cells, widths)).rstrip()  # noqa: E731
    rows = [fmt(header), "-" * len(fmt(header))] + [fmt(r) for r in body]
    return _TABLE.render(title=title, rule="=" * max(len(r) for r in rows), rows=rows)


def split_table(reports: Sequence[EvalReport], title: str = "Cross-validation") -> str:
    """Accuracy and macro F1 per split (mean ± std over seeds) plus an Avg ± Std row across splits."""
    frame = reports_frame(reports)
    body = []
    split_means = []
    for split, group in frame.groupby("split", sort=False):
        acc, f1 = group["accuracy"].astype(float), group["macro_f1"].astype(float)
        std = (lambda s: float(s.std(ddof=1)) if len(s) > 1 else 0.0)
        body.append([str(split), _pm(acc.mean(), std(acc)), _pm(f1.mean(), std(f1)), str(len(group))])
        split_means.append((acc.mean(), f1.mean()))
    means = np.array(split_means)
    if len(means) > 1:
        avg_std = means.std(axis=0, ddof=1)
    else:
        avg_std = np.zeros(2)
    body.append(["Avg ± Std", _pm(means[:, 0].mean(), avg_std[0]), _pm(means[:, 1].mean(), avg_std[1]),
                 str(len(frame))])
    return _render(title, ["split", "accuracy", "macro_f1", "runs"], body)


def window_table(results: Dict[int, Sequence[EvalReport]], title: str = "Look-back ablation") -> str:
    """Per look-back window: per-split rows and the Avg ± Std row, side by side by window."""
    body = []
    for window in sorted(results):
        frame = reports_frame(results[window])
        split_means = frame.groupby("split", sort=False)[["accuracy", "macro_f1"]].mean()
        for split, row in split_means.iterrows():
            body.append([f"L={window}", str(split), f"{row['accuracy']:.3f}", f"{row['macro_f1']:.3f}"])
        std = split_means.std(ddof=1) if len(split_means) > 1 else split_means.iloc[0] * 0
        body.append([f"L={window}", "Avg ± Std", _pm(split_means["accuracy"].mean(), std["accuracy"]),
                     _pm(split_means["macro_f1"].mean(), std["macro_f1"])])
    return _render(title, ["window", "split", "accuracy", "macro_f1"], body)


def aggregate_table(reports: Sequence[EvalReport], title: str = "Final evaluation") -> str:
    """Mean ± std over seeds for every headline metric."""
    agg = aggregate_seeds(reports)
    keys = ["accuracy", "macro_precision", "macro_recall", "macro_f1", "macro_auc"]
    body = [[k, _pm(agg.loc[k, "mean"], agg.loc[k, "std"])] for k in keys]
    return _render(f"{title} ({len(reports)} seeds)", ["metric", "mean ± std"], body)


def class_table(results: Dict[int, Sequence[EvalReport]], title: str = "Per-class results") -> str:
    """Precision, recall, F1 and AUC per ROI class (seed means), one block per window."""
    body = []
    for window in sorted(results):
        frame = reports_frame(results[window])
        for c in CLASSES:
            body.append([
                f"L={window}", ROI_CLASS_LEGEND[c],
                f"{frame[f'prec_{c}'].astype(float).mean():.3f}",
                f"{frame[f'rec_{c}'].astype(float).mean():.3f}",
                f"{frame[f'f1_{c}'].astype(float).mean():.3f}",
                f"{frame[f'auc_{c}'].astype(float).mean():.3f}",
            ])
    return _render(title, ["window", "class", "precision", "recall", "f1", "auc"], body)


def plot_confusion(report: EvalReport, path: Path) -> Optional[Path]:
    """Heatmap PNG of the confusion matrix, when matplotlib/seaborn are installed."""
    if not VISUALIZATION_AVAILABLE:
        logger.info("matplotlib/seaborn not installed; skipping confusion heatmap")
        return None
    fig, ax = plt.subplots(figsize=(4, 3.5))
    sns.heatmap(report.confusion.counts, annot=True, fmt="d", cmap="Blues", cbar=False, ax=ax,
                xticklabels=list(CLASSES), yticklabels=list(CLASSES))
    ax.set_xlabel("predicted class")
    ax.set_ylabel("true class")
    ax.set_title(f"{report.split} (seed {report.seed})")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)
