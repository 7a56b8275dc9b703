"""Tests for the training objective, AdamW and the training loop."""

import math

import numpy as np
import pytest

from mining_etl.core.errors import ConfigError, DomainError, ShapeError, SplitError
from mining_etl.synthetic.market import separable_arrays
from mining_etl.synthetic.oracles import naive_weighted_ce

from mining_ml.model import ModelConfig
from mining_ml.model_trainer import (
    AdamWState,
    ModelKind,
    SelectionMetric,
    TrainConfig,
    adamw_step,
    build_model,
    one_hot,
    predict_proba,
    smooth_labels,
    train,
    weighted_ce,
    weighted_ce_grad,
)
from mining_ml.lstm_baseline import LstmConfig

UNIT = np.ones(3)


class TestLoss:

    def test_uniform_logits_give_log3(self):
        assert weighted_ce(np.zeros((4, 3)), one_hot([0, 1, 2, 0]), UNIT) == pytest.approx(math.log(3))

    def test_smoothing(self):
        smoothed = smooth_labels(one_hot([2]), 0.1)
        np.testing.assert_allclose(smoothed, [[1 / 30, 1 / 30, 28 / 30]], atol=1e-15)

    def test_smoothing_single_vector(self):
        np.testing.assert_allclose(smooth_labels(np.array([1.0, 0.0, 0.0]), 0.0), [1.0, 0.0, 0.0])

    def test_smoothing_rejects_soft_targets(self):
        with pytest.raises(DomainError):
            smooth_labels(np.array([[0.5, 0.5, 0.0]]), 0.1)
        with pytest.raises(DomainError):
            smooth_labels(one_hot([1]), 1.0)

    def test_large_logits_stay_finite(self):
        logits = np.array([[1000.0, 0.0, 0.0]])
        assert weighted_ce(logits, one_hot([0]), UNIT) == pytest.approx(0.0, abs=1e-300)
        assert weighted_ce(logits, one_hot([1]), UNIT) == pytest.approx(1000.0)
        assert np.all(np.isfinite(weighted_ce_grad(logits, one_hot([1]), UNIT)))

    def test_matches_naive_oracle(self, rng):
        logits = rng.standard_normal((16, 3)) * 3
        targets = smooth_labels(one_hot(rng.integers(0, 3, 16)), 0.1)
        weights = np.array([0.7, 1.9, 1.2])
        naive = naive_weighted_ce(logits.tolist(), targets.tolist(), weights.tolist())
        assert weighted_ce(logits, targets, weights) == pytest.approx(naive, abs=1e-10)

    def test_gradient_matches_finite_differences(self, rng):
        logits = rng.standard_normal((5, 3))
        targets = smooth_labels(one_hot([0, 1, 2, 2, 1]), 0.1)
        weights = np.array([2.0, 0.5, 1.0])
        grad = weighted_ce_grad(logits, targets, weights)
        eps = 1e-6
        for i in range(5):
            for c in range(3):
                up, down = logits.copy(), logits.copy()
                up[i, c] += eps
                down[i, c] -= eps
                numeric = (weighted_ce(up, targets, weights) - weighted_ce(down, targets, weights)) / (2 * eps)
                assert grad[i, c] == pytest.approx(numeric, abs=1e-8)

    def test_non_finite_logits(self):
        with pytest.raises(DomainError):
            weighted_ce(np.array([[np.nan, 0.0, 0.0]]), one_hot([0]), UNIT)

    def test_bad_logit_shape(self):
        with pytest.raises(ShapeError):
            weighted_ce(np.zeros((2, 4)), one_hot([0, 1]), UNIT)


class TestAdamW:

    def test_zero_gradient_only_decays(self):
        params = {"w": np.array([1.0, -2.0, 0.5])}
        grads = {"w": np.zeros(3)}
        new, state = adamw_step(params, grads, AdamWState.zeros_like(params), lr=0.01, weight_decay=0.1)
        np.testing.assert_allclose(new["w"], params["w"] * (1 - 0.01 * 0.1), rtol=1e-15)
        assert state.step == 1

    def test_two_hand_computed_steps(self):
        params = {"w": np.array([1.0])}
        state = AdamWState.zeros_like(params)
        lr, wd, eps = 0.1, 0.01, 1e-8

        params, state = adamw_step(params, {"w": np.array([0.5])}, state, lr, wd)
        # m = 0.05, v = 0.00025; bias-corrected 0.5 and 0.25
        p1 = 1.0 * (1 - lr * wd) - lr * 0.5 / (0.5 + eps)
        assert params["w"][0] == pytest.approx(p1, abs=1e-12)

        params, state = adamw_step(params, {"w": np.array([-0.2])}, state, lr, wd)
        m2 = 0.9 * 0.05 + 0.1 * -0.2
        v2 = 0.999 * 0.00025 + 0.001 * 0.04
        p2 = p1 * (1 - lr * wd) - lr * (m2 / (1 - 0.9 ** 2)) / (math.sqrt(v2 / (1 - 0.999 ** 2)) + eps)
        assert params["w"][0] == pytest.approx(p2, abs=1e-12)
        assert state.step == 2
        assert state.m["w"][0] == pytest.approx(m2)

    def test_inputs_untouched(self):
        params = {"w": np.array([1.0])}
        state = AdamWState.zeros_like(params)
        adamw_step(params, {"w": np.array([3.0])}, state, 0.1, 0.1)
        assert params["w"][0] == 1.0
        assert state.step == 0 and state.m["w"][0] == 0.0

    def test_mismatched_tensors(self):
        params = {"w": np.zeros(2)}
        with pytest.raises(ShapeError):
            adamw_step(params, {"w": np.zeros(3)}, AdamWState.zeros_like(params), 0.1, 0.0)
        with pytest.raises(ShapeError):
            adamw_step(params, {"v": np.zeros(2)}, AdamWState.zeros_like(params), 0.1, 0.0)


@pytest.fixture
def planted():
    X, y = separable_arrays(window=8, n_features=3, n_per_class=20, seed=11)
    return X, y


@pytest.fixture
def tiny_model(tiny_config_values):
    return ModelConfig(**tiny_config_values)


class TestTraining:

    def test_same_seed_same_run(self, planted, tiny_model):
        X, y = planted
        cfg = TrainConfig(max_epochs=2, batch_size=16, learning_rate=1e-3, seed=5)
        a = train(ModelKind.MINEROI, tiny_model, cfg, X[:48], y[:48], X[48:], y[48:])
        b = train(ModelKind.MINEROI, tiny_model, cfg, X[:48], y[:48], X[48:], y[48:])
        assert a.history.train_loss == b.history.train_loss
        for name in a.model.params:
            np.testing.assert_array_equal(a.model.params[name], b.model.params[name])

    def test_different_seed_different_run(self, planted, tiny_model):
        X, y = planted
        a = train(ModelKind.MINEROI, tiny_model, TrainConfig(max_epochs=1, seed=1), X, y)
        b = train(ModelKind.MINEROI, tiny_model, TrainConfig(max_epochs=1, seed=2), X, y)
        assert not np.allclose(a.model.params["head.w2"], b.model.params["head.w2"])

    def test_full_batch_loss_decreases(self, planted, tiny_model):
        X, y = planted
        cfg = TrainConfig(max_epochs=5, batch_size=len(X), learning_rate=1e-3, seed=0)
        history = train(ModelKind.MINEROI, tiny_model, cfg, X, y).history
        assert all(b < a for a, b in zip(history.train_loss, history.train_loss[1:]))

    def test_selects_first_best_epoch(self, planted, tiny_model):
        X, y = planted
        cfg = TrainConfig(max_epochs=4, batch_size=16, learning_rate=1e-3)
        history = train(ModelKind.MINEROI, tiny_model, cfg, X[:45], y[:45], X[45:], y[45:]).history
        assert history.selected_epoch == int(np.argmax(history.val_macro_f1)) + 1

    def test_select_by_loss(self, planted, tiny_model):
        X, y = planted
        cfg = TrainConfig(max_epochs=3, learning_rate=1e-3, selection_metric=SelectionMetric.VAL_LOSS)
        history = train(ModelKind.MINEROI, tiny_model, cfg, X[:45], y[:45], X[45:], y[45:]).history
        assert history.selected_epoch == int(np.argmin(history.val_loss)) + 1

    def test_without_validation_keeps_last_epoch(self, planted, tiny_model):
        X, y = planted
        result = train(ModelKind.MINEROI, tiny_model, TrainConfig(max_epochs=3), X, y)
        assert result.history.selected_epoch == 3
        assert list(result.history.to_frame().columns) == ["epoch", "train_loss", "val_loss", "val_acc",
                                                           "val_macro_f1"]

    def test_configured_weights_win(self, planted, tiny_model):
        X, y = planted
        cfg = TrainConfig(max_epochs=1, class_weights=(1.0, 2.0, 3.0))
        result = train(ModelKind.MINEROI, tiny_model, cfg, X, y, weights=[5.0, 5.0, 5.0])
        np.testing.assert_array_equal(result.class_weights, [1.0, 2.0, 3.0])

    def test_default_weights_are_inverse_frequency(self, planted, tiny_model):
        X, y = planted
        result = train(ModelKind.MINEROI, tiny_model, TrainConfig(max_epochs=1), X, y)
        np.testing.assert_allclose(result.class_weights, 1.0)

    def test_lstm_trains(self, planted):
        X, y = planted
        config = LstmConfig(window=8, n_features=3, hidden_size=4, n_layers=1, dropout=0.0)
        result = train(ModelKind.LSTM, config, TrainConfig(max_epochs=1), X, y)
        p = predict_proba(result.model, X)
        assert p.shape == (len(X), 3)

    def test_empty_training_set(self, tiny_model):
        with pytest.raises(SplitError):
            train(ModelKind.MINEROI, tiny_model, TrainConfig(), np.zeros((0, 8, 3)), np.zeros(0, dtype=int))

    def test_kind_config_mismatch(self, tiny_model):
        with pytest.raises(DomainError):
            build_model(ModelKind.LSTM, tiny_model)

    def test_invalid_config_lists_problems(self):
        with pytest.raises(ConfigError) as exc:
            TrainConfig.create(batch_size=0, label_smoothing=1.5)
        assert len(exc.value.problems) == 2
