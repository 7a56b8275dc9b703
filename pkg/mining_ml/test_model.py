"""Tests for the network layers, MineROI-Net and the LSTM baseline (forward values and analytic gradients)."""

import numpy as np
import pytest

from mining_etl.core.errors import ShapeError, TraceError
from mining_etl.synthetic.oracles import (
    naive_attention,
    naive_dft,
    naive_idft,
    naive_lstm_cells,
    naive_mineroi_logits,
    naive_positional,
    naive_spectral_literal,
    naive_spectral_per_bin,
)

from mining_ml.layers import (
    SpectralMode,
    attention_forward,
    channel_mix_forward,
    gelu,
    gelu_grad,
    sinusoidal_encoding,
    spectral_bins,
    spectral_forward,
)
from mining_ml.lstm_baseline import LstmBaseline, LstmConfig
from mining_ml.model import PRESETS, MineROINet, ModelConfig, parameter_count


def perturbed(model, rng, scale=0.3):
    """Move every parameter off its initial value so gradients are generic."""
    model.params = {k: v + scale * rng.standard_normal(v.shape) for k, v in model.params.items()}
    return model


def numeric_grad_check(model, X, R, rng, n_checks=4, eps=1e-6):
    trace = model.forward(X)
    grads = model.backward(trace, R)
    for name, p in model.params.items():
        flat_idx = rng.choice(p.size, size=min(n_checks, p.size), replace=False)
        for idx in flat_idx:
            pos = np.unravel_index(idx, p.shape)
            original = p[pos]
            p[pos] = original + eps
            up = float((model.forward(X, retain=False).logits * R).sum())
            p[pos] = original - eps
            down = float((model.forward(X, retain=False).logits * R).sum())
            p[pos] = original
            numeric = (up - down) / (2 * eps)
            analytic = grads[name][pos]
            assert abs(numeric - analytic) <= 1e-5 * max(1.0, abs(numeric), abs(analytic)), name


class TestSpectral:

    @pytest.mark.parametrize("length", [11, 30, 60])
    def test_naive_dft_round_trip(self, rng, length):
        x = rng.standard_normal(length)
        back = np.array(naive_idft(naive_dft(x)))
        np.testing.assert_allclose(back.real, x, atol=1e-9)
        np.testing.assert_allclose(back.imag, 0.0, atol=1e-9)

    @pytest.mark.parametrize("length", [16, 30, 60])
    def test_fft_matches_naive_dft(self, rng, length):
        x = rng.standard_normal(length)
        np.testing.assert_allclose(np.fft.fft(x), naive_dft(x), atol=1e-9)

    @pytest.mark.parametrize("length", [8, 9])
    def test_per_bin_matches_naive_oracle(self, rng, length):
        x = rng.standard_normal((1, length, 2))
        shape = (2, spectral_bins(length))
        w_real, w_imag = rng.standard_normal(shape), rng.standard_normal(shape)
        y, _ = spectral_forward(x, w_real, w_imag, SpectralMode.PER_BIN)
        for f in range(2):
            expected = naive_spectral_per_bin(x[0, :, f], [complex(a, b) for a, b in zip(w_real[f], w_imag[f])])
            np.testing.assert_allclose(y[0, :, f], expected, atol=1e-10)

    def test_dc_only_weights_give_the_mean(self, rng):
        x = rng.standard_normal((2, 30, 3))
        w_real = np.zeros((3, spectral_bins(30)))
        w_real[:, 0] = 1.0
        y, _ = spectral_forward(x, w_real, np.zeros_like(w_real), SpectralMode.PER_BIN)
        np.testing.assert_allclose(y, np.broadcast_to(x.mean(axis=1, keepdims=True), x.shape), atol=1e-12)
        expected = naive_spectral_per_bin(x[1, :, 2], [1.0] + [0.0] * (spectral_bins(30) - 1))
        np.testing.assert_allclose(y[1, :, 2], expected, atol=1e-9)

    @pytest.mark.parametrize("length", [8, 30, 60])
    @pytest.mark.parametrize("mode", [SpectralMode.PER_BIN, SpectralMode.LITERAL])
    def test_linearity(self, rng, length, mode):
        shape = (3, spectral_bins(length)) if mode is SpectralMode.PER_BIN else (3,)
        w_real, w_imag = rng.standard_normal(shape), rng.standard_normal(shape)
        X, Y = rng.standard_normal((2, length, 3)), rng.standard_normal((2, length, 3))
        a, b = 1.7, -0.4
        combined, _ = spectral_forward(a * X + b * Y, w_real, w_imag, mode)
        fx, _ = spectral_forward(X, w_real, w_imag, mode)
        fy, _ = spectral_forward(Y, w_real, w_imag, mode)
        np.testing.assert_allclose(combined, a * fx + b * fy, atol=1e-8)

    def test_identity_weights_leave_input_unchanged(self, rng):
        x = rng.standard_normal((2, 12, 3))
        for mode, shape in ((SpectralMode.PER_BIN, (3, 7)), (SpectralMode.LITERAL, (3,))):
            y, _ = spectral_forward(x, np.ones(shape), np.zeros(shape), mode)
            np.testing.assert_allclose(y, x, atol=1e-12)

    def test_literal_mode_matches_naive_oracle(self, rng):
        x = rng.standard_normal((1, 9, 2))
        w_real, w_imag = np.array([0.7, -1.3]), np.array([0.4, 2.0])
        y, _ = spectral_forward(x, w_real, w_imag, SpectralMode.LITERAL)
        for f in range(2):
            expected = naive_spectral_literal(x[0, :, f], complex(w_real[f], w_imag[f]))
            np.testing.assert_allclose(y[0, :, f], expected, atol=1e-10)

    def test_literal_scalar_reduces_to_real_scaling(self, rng):
        # a complex scalar on the full spectrum of a real signal only keeps its real part
        x = rng.standard_normal((3, 10, 2))
        y, _ = spectral_forward(x, np.array([2.0, 0.5]), np.array([5.0, -1.0]), SpectralMode.LITERAL)
        np.testing.assert_allclose(y, x * np.array([2.0, 0.5]), atol=1e-12)

    def test_rejects_non_finite(self):
        x = np.zeros((1, 4, 1))
        x[0, 2, 0] = np.nan
        with pytest.raises(ShapeError):
            spectral_forward(x, np.ones((1, 3)), np.zeros((1, 3)), SpectralMode.PER_BIN)


class TestActivations:

    def test_gelu_values(self):
        assert gelu(np.array([0.0]))[0] == 0.0
        assert gelu(np.array([1.0]))[0] == pytest.approx(0.8413447460685429)

    def test_gelu_grad_matches_difference(self):
        x = np.linspace(-3, 3, 13)
        numeric = (gelu(x + 1e-6) - gelu(x - 1e-6)) / 2e-6
        np.testing.assert_allclose(gelu_grad(x), numeric, atol=1e-8)

    def test_channel_mix_shapes(self, rng):
        xs = rng.standard_normal((4, 6, 5))
        z, s, out, _ = channel_mix_forward(xs, rng.standard_normal((2, 5)), rng.standard_normal((5, 2)))
        assert z.shape == (4, 5) and s.shape == (4, 5) and out.shape == xs.shape
        np.testing.assert_allclose(out, xs * s[:, None, :])


class TestEncoder:

    def test_positional_encoding_at_position_zero(self):
        pe = sinusoidal_encoding(5, 8)
        np.testing.assert_array_equal(pe[0], [0.0, 1.0] * 4)
        np.testing.assert_allclose(pe, naive_positional(5, 8), atol=1e-12)

    @pytest.mark.parametrize("d_model,n_heads", [(2, 1), (8, 2), (8, 4)])
    def test_attention_matches_loops(self, rng, d_model, n_heads):
        x = rng.standard_normal((2, 5, d_model))
        p = {}
        for name in ("q", "k", "v", "o"):
            p[f"w{name}"] = rng.standard_normal((d_model, d_model)) / np.sqrt(d_model)
            p[f"b{name}"] = rng.standard_normal(d_model) * 0.1
        out, _ = attention_forward(x, p, n_heads)
        plain = {k: v.tolist() for k, v in p.items()}
        for b in range(2):
            np.testing.assert_allclose(out[b], naive_attention(x[b].tolist(), plain, n_heads), atol=1e-10)


class TestMineROINet:

    @pytest.mark.parametrize("mode", [SpectralMode.PER_BIN, SpectralMode.LITERAL])
    def test_logits_match_scalar_reference(self, tiny_config_values, rng, mode):
        config = ModelConfig(**tiny_config_values, spectral_mode=mode)
        model = perturbed(MineROINet(config, seed=11), np.random.default_rng(5))
        X = rng.uniform(0, 1, size=(2, 8, 3))
        logits = model.forward(X).logits
        plain = {k: v.tolist() for k, v in model.params.items()}
        for b in range(2):
            expected = naive_mineroi_logits(X[b].tolist(), plain, n_heads=2, n_layers=1,
                                            per_bin=mode is SpectralMode.PER_BIN)
            np.testing.assert_allclose(logits[b], expected, atol=1e-9)

    def test_zero_weights_leave_only_the_head_bias(self, tiny_config_values, rng):
        model = MineROINet(ModelConfig(**tiny_config_values), seed=0)
        model.params = {k: np.zeros_like(v) for k, v in model.params.items()}
        model.params["head.b2"] = np.array([0.25, -0.5, 1.0])
        logits = model.forward(rng.uniform(size=(3, 8, 3))).logits
        np.testing.assert_array_equal(logits, np.tile([0.25, -0.5, 1.0], (3, 1)))

    def test_identical_rows_identical_logits(self, tiny_config_values, rng):
        model = perturbed(MineROINet(ModelConfig(**tiny_config_values), seed=2), rng)
        X = np.repeat(rng.uniform(size=(1, 8, 3)), 4, axis=0)
        logits = model.forward(X).logits
        np.testing.assert_allclose(logits, np.repeat(logits[:1], 4, axis=0), rtol=1e-12, atol=1e-14)

    def test_zero_upstream_gradient(self, tiny_config_values, rng):
        model = perturbed(MineROINet(ModelConfig(**tiny_config_values), seed=0), rng)
        X = rng.uniform(size=(2, 8, 3))
        grads = model.backward(model.forward(X), np.zeros((2, 3)))
        assert set(grads) == set(model.params)
        for name, g in grads.items():
            np.testing.assert_array_equal(g, np.zeros_like(model.params[name]), err_msg=name)

    @pytest.mark.parametrize("mode", [SpectralMode.PER_BIN, SpectralMode.LITERAL])
    def test_gradients_match_finite_differences(self, tiny_config_values, rng, mode):
        config = ModelConfig(**tiny_config_values, spectral_mode=mode)
        model = perturbed(MineROINet(config, seed=0), rng)
        X = rng.uniform(0, 1, size=(3, 8, 3))
        R = rng.standard_normal((3, 3))
        numeric_grad_check(model, X, R, rng)

    def test_probabilities_sum_to_one(self, tiny_config_values, rng):
        model = MineROINet(ModelConfig(**tiny_config_values), seed=1)
        trace = model.forward(rng.uniform(size=(5, 8, 3)))
        np.testing.assert_allclose(trace.probabilities.sum(axis=1), 1.0, atol=1e-12)
        assert trace.H.shape == (5, 8, 8)
        assert trace.pooled.shape == (5, 8)

    def test_same_seed_same_parameters(self, tiny_config_values):
        a = MineROINet(ModelConfig(**tiny_config_values), seed=3)
        b = MineROINet(ModelConfig(**tiny_config_values), seed=3)
        for name in a.params:
            np.testing.assert_array_equal(a.params[name], b.params[name])

    def test_eval_mode_is_deterministic_with_dropout(self, tiny_config_values, rng):
        config = ModelConfig(**{**tiny_config_values, "dropout": 0.5})
        model = MineROINet(config, seed=0)
        X = rng.uniform(size=(2, 8, 3))
        np.testing.assert_array_equal(model.predict_proba(X), model.predict_proba(X))

    def test_backward_without_trace(self, tiny_config_values, rng):
        model = MineROINet(ModelConfig(**tiny_config_values), seed=0)
        trace = model.forward(rng.uniform(size=(2, 8, 3)), retain=False)
        with pytest.raises(TraceError):
            model.backward(trace, np.zeros((2, 3)))

    def test_wrong_feature_count(self, tiny_config_values, rng):
        model = MineROINet(ModelConfig(**tiny_config_values), seed=0)
        with pytest.raises(ShapeError):
            model.forward(rng.uniform(size=(2, 8, 4)))

    def test_heads_must_divide_width(self, tiny_config_values):
        with pytest.raises(ValueError):
            ModelConfig(**{**tiny_config_values, "n_heads": 3})

    def test_presets_build(self):
        for name, values in PRESETS.items():
            config = ModelConfig(**values)
            assert parameter_count(config) == MineROINet(config).n_parameters


class TestLstmBaseline:

    @pytest.fixture
    def config(self):
        return LstmConfig(window=6, n_features=3, hidden_size=4, n_layers=2, dropout=0.0)

    def test_gradients_match_finite_differences(self, config, rng):
        model = perturbed(LstmBaseline(config, seed=0), rng)
        X = rng.uniform(0, 1, size=(2, 6, 3))
        R = rng.standard_normal((2, 3))
        numeric_grad_check(model, X, R, rng)

    def test_initial_state_changes_output(self, config, rng):
        model = LstmBaseline(config, seed=0)
        X = rng.uniform(size=(2, 6, 3))
        zero = model.forward(X).logits
        state = [(np.full(4, 0.5), np.full(4, -0.5))] * 2
        assert not np.allclose(zero, model.forward(X, initial_state=state).logits)

    def test_probabilities_sum_to_one(self, config, rng):
        p = LstmBaseline(config, seed=2).predict_proba(rng.uniform(size=(4, 6, 3)))
        np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-12)

    def test_zero_input_depends_only_on_recurrence_and_biases(self, config, rng):
        model = perturbed(LstmBaseline(config, seed=0), rng)
        logits = model.forward(np.zeros((3, 6, 3))).logits
        np.testing.assert_allclose(logits, np.repeat(logits[:1], 3, axis=0), rtol=1e-13, atol=1e-15)

        p = {k: v.tolist() for k, v in model.params.items()}
        hs, _ = naive_lstm_cells([[0.0] * 3] * 6, p["lstm0.wx"], p["lstm0.wh"], p["lstm0.b"], [0.0] * 4, [0.0] * 4)
        hs, _ = naive_lstm_cells(hs, p["lstm1.wx"], p["lstm1.wh"], p["lstm1.b"], [0.0] * 4, [0.0] * 4)
        expected = np.array(hs[-1]) @ model.params["head.weight"] + model.params["head.bias"]
        np.testing.assert_allclose(logits[0], expected, atol=1e-12)

        # input-side weights never see a non-zero value
        model.params["lstm0.wx"] = rng.standard_normal(model.params["lstm0.wx"].shape)
        model.params["mix.w1"] = rng.standard_normal(model.params["mix.w1"].shape)
        np.testing.assert_array_equal(model.forward(np.zeros((3, 6, 3))).logits, logits)

    def test_saturated_forget_gate_keeps_cell_state(self, config, rng):
        model = perturbed(LstmBaseline(config, seed=0), rng)
        h = config.hidden_size
        for layer in range(config.n_layers):
            b = model.params[f"lstm{layer}.b"].copy()
            b[:h] = -50.0
            b[h:2 * h] = 50.0
            model.params[f"lstm{layer}.b"] = b
        c0 = rng.standard_normal(h)
        state = [(np.zeros(h), c0)] * config.n_layers
        trace = model.forward(rng.uniform(size=(2, 6, 3)), initial_state=state)
        for cells in trace.cells:
            assert cells.shape == (2, 7, h)
            np.testing.assert_allclose(cells, np.broadcast_to(c0, cells.shape), atol=1e-12)

    def test_batch_permutation(self, config, rng):
        model = perturbed(LstmBaseline(config, seed=3), rng)
        X = rng.uniform(size=(5, 6, 3))
        perm = np.array([3, 0, 4, 1, 2])
        trace = model.forward(X)
        permuted = model.forward(X[perm])
        np.testing.assert_allclose(permuted.hidden, trace.hidden[perm], rtol=1e-12, atol=1e-14)
        np.testing.assert_allclose(permuted.logits, trace.logits[perm], rtol=1e-12, atol=1e-14)

    def test_init_uses_each_weight_fan_in(self):
        config = LstmConfig(window=6, n_features=3, hidden_size=16, n_layers=2)
        params = LstmBaseline(config, seed=0).params
        wide, narrow = np.sqrt(1 / 3), np.sqrt(1 / 16)
        assert np.abs(params["lstm0.wx"]).max() <= wide
        assert np.abs(params["lstm0.wx"]).max() > narrow
        assert np.abs(params["lstm0.b"]).max() <= wide
        for name in ("lstm0.wh", "lstm1.wx", "lstm1.wh", "lstm1.b", "head.weight", "head.bias"):
            assert np.abs(params[name]).max() <= narrow, name
