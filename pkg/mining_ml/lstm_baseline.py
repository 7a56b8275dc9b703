"""
LSTM baseline: the same spectral and channel-mixing front end as MineROI-Net,
then stacked unidirectional LSTM layers read out at the last time step.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from mining_etl.core.errors import ConfigError, ShapeError, TraceError
from mining_etl.core.models import FEATURE_NAMES, validated

from .layers import (
    SpectralMode,
    channel_mix_backward,
    channel_mix_forward,
    check_finite,
    dropout_backward,
    dropout_forward,
    linear_backward,
    linear_forward,
    sigmoid,
    spectral_backward,
    spectral_bins,
    spectral_forward,
    stable_softmax,
    uniform_init,
)

N_CLASSES = 3
ARCH_TAG = "lstm-baseline"

Params = Dict[str, np.ndarray]
# per layer (h0, c0), each (B, hidden)
InitialState = Sequence[Tuple[np.ndarray, np.ndarray]]


class LstmConfig(BaseModel):
    """Recurrent baseline settings; front-end fields mirror ModelConfig."""
    model_config = ConfigDict(frozen=True)

    window: int = Field(30, ge=2)
    n_features: int = Field(len(FEATURE_NAMES), ge=1)
    hidden_size: int = Field(16, ge=1)
    n_layers: int = Field(2, ge=1)
    dropout: float = Field(0.3, ge=0.0, lt=1.0)
    reduction: int = Field(4, ge=1)
    spectral_mode: SpectralMode = SpectralMode.PER_BIN
    learning_rate: float = Field(1e-4, gt=0)

    @property
    def bottleneck(self) -> int:
        return max(1, self.n_features // self.reduction)

    @classmethod
    def create(cls, source: Optional[str] = None, **values: Any) -> "LstmConfig":
        return validated(cls, values, source)


PRESETS: Dict[str, Dict[str, Any]] = {
    "base-30": dict(window=30, hidden_size=16, n_layers=2, dropout=0.3, learning_rate=1e-4),
    "base-60": dict(window=60, hidden_size=16, n_layers=2, dropout=0.3, learning_rate=1e-4),
}


def preset(name: str, **overrides: Any) -> LstmConfig:
    if name not in PRESETS:
        raise ConfigError([f"unknown preset {name!r}; choose from {sorted(PRESETS)}"])
    return LstmConfig.create(**{**PRESETS[name], **overrides})


def param_shapes(config: LstmConfig) -> Dict[str, Tuple[int, ...]]:
    F, h, r = config.n_features, config.hidden_size, config.bottleneck
    spectral = (F, spectral_bins(config.window)) if config.spectral_mode is SpectralMode.PER_BIN else (F,)
    shapes: Dict[str, Tuple[int, ...]] = {
        "spectral.w_real": spectral,
        "spectral.w_imag": spectral,
        "mix.w1": (r, F),
        "mix.w2": (F, r),
    }
    for layer in range(config.n_layers):
        width = F if layer == 0 else h
        # gate columns ordered input, forget, cell, output
        shapes[f"lstm{layer}.wx"] = (width, 4 * h)
        shapes[f"lstm{layer}.wh"] = (h, 4 * h)
        shapes[f"lstm{layer}.b"] = (4 * h,)
    shapes["head.weight"] = (h, N_CLASSES)
    shapes["head.bias"] = (N_CLASSES,)
    return shapes


def init_params(config: LstmConfig, seed: int = 0) -> Params:
    rng = np.random.default_rng(seed)
    params: Params = {}
    for name, shape in param_shapes(config).items():
        if name == "spectral.w_real":
            params[name] = np.ones(shape)
        elif name == "spectral.w_imag":
            params[name] = np.zeros(shape)
        elif name.startswith("mix."):
            params[name] = uniform_init(rng, shape[1], shape)
        elif len(shape) == 2:
            # (in, out) layout: layer-0 wx reads F inputs, the rest read hidden_size
            params[name] = uniform_init(rng, shape[0], shape)
        else:
            # biases share the fan-in of the matching input weight
            owner = name.rsplit(".", 1)[0]
            weight = f"{owner}.wx" if owner.startswith("lstm") else f"{owner}.weight"
            params[name] = uniform_init(rng, params[weight].shape[0], shape)
    return params


@dataclass
class LstmTrace:
    X_spectral: np.ndarray
    X_mixed: np.ndarray
    hidden: np.ndarray
    cells: List[np.ndarray]
    logits: np.ndarray
    probabilities: np.ndarray
    cache: Optional[Dict[str, Any]] = field(default=None, repr=False)


def lstm_layer_forward(x: np.ndarray, wx: np.ndarray, wh: np.ndarray, b: np.ndarray,
                       h0: np.ndarray, c0: np.ndarray):
    """One layer over the whole sequence. Returns (hs (B, L, h), cs (B, L+1, h), cache)."""
    B, L, _ = x.shape
    h = wh.shape[0]
    hs = np.zeros((B, L + 1, h))
    cs = np.zeros((B, L + 1, h))
    hs[:, 0], cs[:, 0] = h0, c0
    gates = np.zeros((B, L, 4 * h))
    tanh_c = np.zeros((B, L, h))
    x_proj = x @ wx + b
    for t in range(L):
        a = x_proj[:, t] + hs[:, t] @ wh
        i = sigmoid(a[:, :h])
        f = sigmoid(a[:, h:2 * h])
        g = np.tanh(a[:, 2 * h:3 * h])
        o = sigmoid(a[:, 3 * h:])
        cs[:, t + 1] = f * cs[:, t] + i * g
        tanh_c[:, t] = np.tanh(cs[:, t + 1])
        hs[:, t + 1] = o * tanh_c[:, t]
        gates[:, t] = np.concatenate([i, f, g, o], axis=1)
    return hs[:, 1:], cs, (x, hs, cs, gates, tanh_c)


def lstm_layer_backward(g_out: np.ndarray, cache, wx: np.ndarray, wh: np.ndarray):
    """Backpropagation through time. Returns (grad_x, grad_wx, grad_wh, grad_b)."""
    x, hs, cs, gates, tanh_c = cache
    B, L, _ = x.shape
    h = wh.shape[0]
    gx = np.zeros_like(x)
    gwx = np.zeros_like(wx)
    gwh = np.zeros_like(wh)
    gb = np.zeros(4 * h)
    dh_next = np.zeros((B, h))
    dc_next = np.zeros((B, h))
    for t in reversed(range(L)):
        i, f, g, o = (gates[:, t, k * h:(k + 1) * h] for k in range(4))
        dh = g_out[:, t] + dh_next
        do = dh * tanh_c[:, t]
        dc = dh * o * (1.0 - tanh_c[:, t] ** 2) + dc_next
        di = dc * g
        dg = dc * i
        df = dc * cs[:, t]
        dc_next = dc * f
        da = np.concatenate([di * i * (1 - i), df * f * (1 - f), dg * (1 - g * g), do * o * (1 - o)], axis=1)
        gwx += x[:, t].T @ da
        gwh += hs[:, t].T @ da
        gb += da.sum(axis=0)
        gx[:, t] = da @ wx.T
        dh_next = da @ wh.T
    return gx, gwx, gwh, gb


def lstm_forward(X: np.ndarray, params: Params, config: LstmConfig, training: bool = False,
                 rng: Optional[np.random.Generator] = None, retain: bool = True,
                 initial_state: Optional[InitialState] = None) -> LstmTrace:
    """Spectral -> channel mix -> stacked LSTM -> last hidden state -> linear head.

    `initial_state` overrides the zero (h0, c0) of each layer.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 3 or X.shape[2] != config.n_features:
        raise ShapeError(f"expected (B, L, {config.n_features}) input, got {X.shape}")
    B = X.shape[0]
    h = config.hidden_size
    if initial_state is not None and len(initial_state) != config.n_layers:
        raise ShapeError(f"initial_state needs {config.n_layers} (h0, c0) pairs")

    X_spectral, spec_cache = spectral_forward(X, params["spectral.w_real"], params["spectral.w_imag"],
                                              config.spectral_mode)
    _, _, X_mixed, mix_cache = channel_mix_forward(X_spectral, params["mix.w1"], params["mix.w2"])

    seq = X_mixed
    layers = []
    cells = []
    for layer in range(config.n_layers):
        mask = None
        if layer > 0:
            seq, mask = dropout_forward(seq, config.dropout, rng, training)
        if initial_state is not None:
            h0, c0 = (np.broadcast_to(np.asarray(s, dtype=np.float64), (B, h)) for s in initial_state[layer])
        else:
            h0, c0 = np.zeros((B, h)), np.zeros((B, h))
        seq, cs, layer_cache = lstm_layer_forward(
            seq, params[f"lstm{layer}.wx"], params[f"lstm{layer}.wh"], params[f"lstm{layer}.b"], h0, c0)
        layers.append((mask, layer_cache))
        cells.append(cs)

    last = seq[:, -1]
    logits, head_cache = linear_forward(last, params["head.weight"], params["head.bias"])
    cache = None
    if retain:
        cache = dict(params=params, config=config, spectral=spec_cache, mix=mix_cache,
                     layers=layers, head=head_cache, shape=seq.shape)
    return LstmTrace(X_spectral=X_spectral, X_mixed=X_mixed, hidden=last, cells=cells,
                     logits=logits, probabilities=stable_softmax(logits, axis=-1), cache=cache)


def lstm_backward(trace: Optional[LstmTrace], grad_logits: np.ndarray) -> Params:
    if trace is None or trace.cache is None:
        raise TraceError("backward needs a forward trace retained with retain=True")
    cache = trace.cache
    params: Params = cache["params"]
    config: LstmConfig = cache["config"]
    grad_logits = np.asarray(grad_logits, dtype=np.float64)
    if grad_logits.shape != trace.logits.shape:
        raise ShapeError(f"grad_logits shape {grad_logits.shape} != logits {trace.logits.shape}")

    grads: Params = {}
    g_last, grads["head.weight"], grads["head.bias"] = linear_backward(
        grad_logits, cache["head"], params["head.weight"])
    g_seq = np.zeros(cache["shape"])
    g_seq[:, -1] = g_last
    for layer in reversed(range(config.n_layers)):
        mask, layer_cache = cache["layers"][layer]
        g_seq, grads[f"lstm{layer}.wx"], grads[f"lstm{layer}.wh"], grads[f"lstm{layer}.b"] = \
            lstm_layer_backward(g_seq, layer_cache, params[f"lstm{layer}.wx"], params[f"lstm{layer}.wh"])
        g_seq = dropout_backward(g_seq, mask)

    g_spec, grads["mix.w1"], grads["mix.w2"] = channel_mix_backward(
        g_seq, cache["mix"], params["mix.w1"], params["mix.w2"])
    _, grads["spectral.w_real"], grads["spectral.w_imag"] = spectral_backward(g_spec, cache["spectral"])
    return {name: grads[name] for name in params}


class LstmBaseline:
    """Parameters plus config for the recurrent baseline."""

    arch_tag = ARCH_TAG

    def __init__(self, config: LstmConfig, seed: int = 0, params: Optional[Params] = None):
        self.config = config
        self.params: Params = params if params is not None else init_params(config, seed)
        for name, shape in param_shapes(config).items():
            if name not in self.params or self.params[name].shape != shape:
                got = None if name not in self.params else self.params[name].shape
                raise ShapeError(f"parameter {name}: expected shape {shape}, got {got}")
        for name, value in self.params.items():
            check_finite(value, name)

    def forward(self, X: np.ndarray, training: bool = False, rng: Optional[np.random.Generator] = None,
                retain: bool = True, initial_state: Optional[InitialState] = None) -> LstmTrace:
        return lstm_forward(X, self.params, self.config, training, rng, retain, initial_state)

    def backward(self, trace: LstmTrace, grad_logits: np.ndarray) -> Params:
        return lstm_backward(trace, grad_logits)

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return self.forward(X, training=False, retain=False).probabilities

    def config_dict(self) -> Dict[str, Any]:
        return self.config.model_dump(mode="json")

    @property
    def n_parameters(self) -> int:
        return int(sum(p.size for p in self.params.values()))
