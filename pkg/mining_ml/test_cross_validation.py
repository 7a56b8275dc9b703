"""Tests for the dataset store, cross-validation, final evaluation and sweeps."""

import numpy as np
import pytest

from mining_etl.core.errors import ConfigError, ParseError
from mining_etl.synthetic.market import separable_arrays, separable_dataset

from conftest import planted_manifest
from mining_ml.cross_validation import ablation, cross_validate, final_evaluation, sweep, train_final
from mining_ml.dataset_store import DatasetStore, write_dataset
from mining_ml.evaluation import evaluate
from mining_ml.experiment import default_experiment, expand_experiments, load_experiment
from mining_ml.model_trainer import ModelKind, TrainConfig, train

SEEDS = (0, 1)


@pytest.fixture
def store(planted_dataset_dir):
    return DatasetStore(planted_dataset_dir)


@pytest.fixture
def experiment(tiny_experiment_file):
    return load_experiment(tiny_experiment_file, window=8)


class TestDatasetStore:

    def test_hash_is_reproducible(self, tmp_path):
        samples = separable_dataset(window=6, n_per_class=10, seed=9)
        manifest = planted_manifest(samples, window=6)
        first = write_dataset(tmp_path / "a", samples, {}, manifest)
        second = write_dataset(tmp_path / "b", samples, {}, manifest)
        assert first == second
        assert DatasetStore(tmp_path / "a").hash == first

    def test_samples_survive_the_disk(self, tmp_path):
        samples = separable_dataset(window=6, n_per_class=10, seed=9)
        write_dataset(tmp_path / "d", samples, {}, planted_manifest(samples, window=6))
        loaded = DatasetStore(tmp_path / "d")._load()
        assert [s.end_date for s in loaded] == [s.end_date for s in samples]
        assert [s.label for s in loaded] == [s.label for s in samples]
        np.testing.assert_array_equal(loaded[7].matrix, samples[7].matrix)
        assert loaded[7].row_dates[-1] == samples[7].end_date

    def test_tampered_file(self, planted_dataset_dir):
        with open(planted_dataset_dir / "samples.csv", "a", encoding="utf-8") as fh:
            fh.write("999,planted-0,2030-01-01,0,0.5\n")
        with pytest.raises(ConfigError):
            DatasetStore(planted_dataset_dir)

    def test_missing_dataset(self, tmp_path):
        with pytest.raises(ParseError):
            DatasetStore(tmp_path)

    def test_split_roles_recorded(self, store):
        roles = store.split_table()
        assert set(roles["role"]) == {"train", "eval", "test"}
        assert set(roles["split"]) == {"split_1", "split_2", "final"}

    def test_select_records_access(self, store):
        assert not store.touched(store.plan.final_test)
        store.select(store.plan.final_test)
        assert store.touched(store.plan.final_test)


class TestCrossValidation:

    def test_runs_every_split_and_seed(self, store, experiment):
        result = cross_validate(store, experiment, SEEDS)
        assert [(r.split, r.seed) for r in result.runs] == [
            ("split_1", 0), ("split_1", 1), ("split_2", 0), ("split_2", 1)]
        table = result.table()
        assert "split_1" in table and "split_2" in table and "Avg ± Std" in table

    def test_final_test_range_never_read(self, store, experiment):
        cross_validate(store, experiment, SEEDS)
        assert not store.touched(store.plan.final_test)
        assert store.touched(store.plan.splits[-1].eval)

    def test_train_final_leaves_test_alone(self, store, experiment):
        result, scaler = train_final(store, experiment, seed=3)
        assert scaler.n_features == 14
        assert result.history.selected_epoch >= 1
        assert not store.touched(store.plan.final_test)

    def test_final_evaluation_reads_test_once(self, store, experiment):
        result = final_evaluation(store, experiment, SEEDS)
        assert [r.split for r in result.reports] == ["final", "final"]
        assert store.touched(store.plan.final_test)
        # final retraining keeps the last epoch
        assert all(run.result.history.selected_epoch == experiment.train.max_epochs for run in result.runs)

    def test_final_runs_keep_their_test_scores(self, store, experiment):
        result = final_evaluation(store, experiment, SEEDS)
        n_test = len(store.select(store.plan.final_test))
        assert result.scaler is not None
        for run in result.runs:
            assert run.probabilities.shape == (n_test, 3)
            assert run.y_true.shape == (n_test,)
            again = evaluate(run.y_true, run.probabilities, split="final", seed=run.seed)
            np.testing.assert_array_equal(again.confusion.counts, run.report.confusion.counts)
            np.testing.assert_array_equal(again.auc, run.report.auc)

    def test_same_seed_same_report(self, store, experiment):
        a = cross_validate(store, experiment, (5,))
        b = cross_validate(store, experiment, (5,))
        assert [r.macro_f1 for r in a.reports] == [r.macro_f1 for r in b.reports]


class TestSweep:

    def test_ranked_by_macro_f1(self, store):
        experiments = expand_experiments({"D_MODEL": "4,8", "N_HEADS": "2", "N_LAYERS": "1", "D_FF": "8",
                                          "MAX_EPOCHS": "1", "DROPOUT": "0.0"}, window=8)
        frame, results = sweep(store, experiments, (0,))
        assert list(frame["rank"]) == [1, 2]
        assert set(frame["config"]) == {"d_model=4", "d_model=8"}
        assert frame["mean_macro_f1"].is_monotonic_decreasing
        assert all(len(r.runs) == 2 for r in results)

    def test_ablation_runs_each_window_on_its_own_dataset(self, tmp_path, tiny_experiment_file):
        stores, experiments = {}, {}
        for window in (6, 8):
            samples = separable_dataset(window=window, n_per_class=60, seed=3)
            write_dataset(tmp_path / f"L{window}", samples, {}, planted_manifest(samples, window=window))
            stores[window] = DatasetStore(tmp_path / f"L{window}")
            experiments[window] = load_experiment(tiny_experiment_file, window=window)
        results = ablation(stores, experiments, (0,))
        assert list(results) == [6, 8]
        for window, res in results.items():
            assert res.experiment.model.window == window
            assert [r.split for r in res.reports] == ["split_1", "split_2"]
            assert not stores[window].touched(stores[window].plan.final_test)


@pytest.mark.slow
class TestParallelAndLearnability:

    def test_parallel_matches_sequential(self, store, experiment):
        sequential = cross_validate(store, experiment, SEEDS, n_jobs=1)
        parallel = cross_validate(DatasetStore(store.directory), experiment, SEEDS, n_jobs=2)
        assert [r.macro_f1 for r in sequential.reports] == [r.macro_f1 for r in parallel.reports]

    def test_base_config_learns_planted_classes(self):
        X, y = separable_arrays(window=30, n_features=14, n_per_class=500, seed=0)
        n_train = int(len(X) * 0.8)
        experiment = default_experiment(ModelKind.MINEROI, 30)
        config = TrainConfig(max_epochs=20, batch_size=64, learning_rate=1e-4, seed=42)
        history = train(experiment.kind, experiment.model, config, X[:n_train], y[:n_train],
                        X[n_train:], y[n_train:]).history
        assert max(history.val_accuracy) >= 0.90
