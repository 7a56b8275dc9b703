"""Tests for metrics, AUC, seed aggregation and report tables."""

import numpy as np
import pytest

from mining_etl.core.errors import MetricError
from mining_etl.synthetic.oracles import mean_std, naive_confusion, naive_metrics, pairwise_auc

from mining_ml.evaluation import (
    REPORT_COLUMNS,
    ConfusionMatrix,
    EvalReport,
    aggregate_seeds,
    aggregate_table,
    auc_ovr,
    binary_auc,
    class_table,
    confusion,
    evaluate,
    metrics,
    reports_frame,
    roc_points,
    split_table,
    window_table,
    write_confusion_blocks,
)


def report_from_counts(counts, split="s", seed=0):
    cm = ConfusionMatrix(np.array(counts))
    return EvalReport(split=split, seed=seed, confusion=cm, metrics=metrics(cm),
                      auc=np.array([0.9, 0.8, 0.7]), macro_auc=0.8)


class TestMetricsAgainstOracle:

    @pytest.mark.parametrize("seed", range(50))
    def test_fixture(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(1, 60))
        y_true = rng.integers(0, 3, n).tolist()
        y_pred = rng.integers(0, 3, n).tolist()

        cm = confusion(y_true, y_pred)
        assert cm.counts.tolist() == naive_confusion(y_true, y_pred)

        fast = metrics(cm)
        slow = naive_metrics(naive_confusion(y_true, y_pred))
        assert fast.accuracy == slow["accuracy"]
        assert fast.precision.tolist() == slow["precision"]
        assert fast.recall.tolist() == slow["recall"]
        assert fast.f1.tolist() == slow["f1"]
        assert fast.macro_f1 == slow["macro_f1"]

    @pytest.mark.parametrize("seed", range(20))
    def test_auc_exact(self, seed):
        rng = np.random.default_rng(100 + seed)
        n = int(rng.integers(6, 80))
        y = rng.integers(0, 3, n)
        y[:3] = [0, 1, 2]
        probs = rng.dirichlet(np.ones(3), size=n)
        result = auc_ovr(probs, y)
        for c in range(3):
            assert result["per_class"][c] == pairwise_auc(probs[:, c].tolist(), (y == c).tolist())

    def test_auc_ties_count_half(self):
        scores = np.array([0.1, 0.5, 0.5, 0.5, 0.9, 0.2])
        positive = np.array([False, True, False, True, True, False])
        assert binary_auc(scores, positive) == pairwise_auc(scores.tolist(), positive.tolist())


class TestMetricEdgeCases:

    def test_perfect_prediction(self):
        m = metrics(confusion([0, 1, 2, 1], [0, 1, 2, 1]))
        assert m.accuracy == 1.0 and m.macro_f1 == 1.0
        assert m.degenerate == {}

    def test_never_predicted_class_is_flagged(self):
        m = metrics(confusion([0, 1, 2], [0, 0, 0]))
        assert m.precision[1] == 0.0 and m.precision[2] == 0.0
        assert m.degenerate["precision"] == [1, 2]

    def test_empty_matrix(self):
        with pytest.raises(MetricError):
            metrics(confusion([], []))

    def test_labels_out_of_range(self):
        with pytest.raises(MetricError):
            confusion([0, 3], [0, 1])

    def test_length_mismatch(self):
        with pytest.raises(MetricError):
            confusion([0, 1], [0])

    def test_auc_rows_must_sum_to_one(self):
        with pytest.raises(MetricError):
            auc_ovr(np.array([[0.5, 0.5, 0.5], [0.2, 0.2, 0.6]]), [0, 1])

    def test_auc_one_sided_class(self):
        probs = np.array([[0.8, 0.1, 0.1], [0.1, 0.8, 0.1]])
        with pytest.raises(MetricError):
            auc_ovr(probs, [0, 1])
        result = auc_ovr(probs, [0, 1], strict=False)
        assert np.isnan(result["per_class"][2])
        assert result["macro"] == 1.0


class TestAggregation:

    def test_mean_and_sample_std(self):
        # 8/10 and 9/10 correct
        reports = [
            report_from_counts([[3, 1, 0], [0, 3, 0], [0, 1, 2]], seed=1),
            report_from_counts([[3, 0, 0], [0, 3, 1], [0, 0, 3]], seed=2),
        ]
        agg = aggregate_seeds(reports)
        assert agg.loc["accuracy", "mean"] == pytest.approx(0.85)
        assert agg.loc["accuracy", "std"] == pytest.approx(0.0707, abs=1e-4)
        mean, std = mean_std([r.macro_f1 for r in reports])
        assert agg.loc["macro_f1", "mean"] == pytest.approx(mean)
        assert agg.loc["macro_f1", "std"] == pytest.approx(std)
        assert "0.850 ± 0.071" in aggregate_table(reports)

    def test_single_report_rejected(self):
        with pytest.raises(MetricError):
            aggregate_seeds([report_from_counts([[1, 0, 0], [0, 1, 0], [0, 0, 1]])])


class TestReports:

    @pytest.fixture
    def reports(self):
        return [
            report_from_counts([[3, 1, 0], [0, 3, 0], [0, 1, 2]], split="split_1", seed=42),
            report_from_counts([[3, 0, 0], [0, 3, 1], [0, 0, 3]], split="split_1", seed=43),
            report_from_counts([[2, 1, 1], [0, 4, 0], [0, 0, 2]], split="split_2", seed=42),
            report_from_counts([[4, 0, 0], [1, 3, 0], [0, 0, 2]], split="split_2", seed=43),
        ]

    def test_frame_columns(self, reports):
        frame = reports_frame(reports)
        assert list(frame.columns) == REPORT_COLUMNS
        assert REPORT_COLUMNS[:4] == ["split", "seed", "accuracy", "macro_f1"]
        assert len(frame) == 4

    def test_split_table_rows(self, reports):
        text = split_table(reports)
        lines = text.splitlines()
        assert any(line.startswith("split_1") for line in lines)
        assert any(line.startswith("split_2") for line in lines)
        assert any(line.startswith("Avg ± Std") for line in lines)

    def test_window_and_class_tables(self, reports):
        by_window = {30: reports, 60: reports[:2] + reports[2:]}
        text = window_table(by_window)
        assert "L=30" in text and "L=60" in text
        assert "profitable (ROI >= 1)" in class_table(by_window)

    def test_confusion_blocks(self, reports, tmp_path):
        path = write_confusion_blocks(reports[:1], tmp_path / "confusion.csv")
        assert path.read_text().splitlines() == ["# split=split_1,seed=42", "3,1,0", "0,3,0", "0,1,2"]

    def test_evaluate_uses_argmax(self):
        probs = np.array([[0.7, 0.2, 0.1], [0.1, 0.6, 0.3], [0.2, 0.2, 0.6], [0.5, 0.4, 0.1]])
        report = evaluate([0, 1, 2, 1], probs, split="x", seed=1)
        assert report.confusion.counts.tolist() == [[1, 0, 0], [1, 1, 0], [0, 0, 1]]
        assert report.accuracy == 0.75

    def test_roc_points(self):
        probs = np.array([[0.7, 0.2, 0.1], [0.1, 0.6, 0.3], [0.2, 0.2, 0.6], [0.5, 0.4, 0.1]])
        frame = roc_points(probs, [0, 1, 2, 1])
        assert set(frame["class"]) == {0, 1, 2}
        assert frame["tpr"].max() == 1.0
