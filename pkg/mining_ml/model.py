"""
MineROI-Net: spectral extractor, channel mixing, Transformer encoder and a
two-layer classification head, in numpy with analytic gradients.

Parameters live in a flat dict keyed by dotted names so the optimizer, the
checkpoint writer and the gradient checks can treat every tensor alike.
"""

from dataclasses import dataclass, field
from typing import Any, Dict, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from mining_etl.core.errors import ConfigError, ShapeError, TraceError
from mining_etl.core.models import FEATURE_NAMES, validated

from .layers import (
    SpectralMode,
    attention_backward,
    attention_forward,
    channel_mix_backward,
    channel_mix_forward,
    check_finite,
    dropout_backward,
    dropout_forward,
    gelu,
    gelu_grad,
    layernorm_backward,
    layernorm_forward,
    linear_backward,
    linear_forward,
    sinusoidal_encoding,
    spectral_backward,
    spectral_bins,
    spectral_forward,
    stable_softmax,
    uniform_init,
)

N_CLASSES = 3
ARCH_TAG = "mineroi-net"

Params = Dict[str, np.ndarray]


class ModelConfig(BaseModel):
    """Shape and regularization settings of MineROI-Net."""
    model_config = ConfigDict(frozen=True)

    window: int = Field(30, ge=2, description="look-back length L")
    n_features: int = Field(len(FEATURE_NAMES), ge=1)
    d_model: int = Field(64, ge=1)
    n_heads: int = Field(2, ge=1)
    n_layers: int = Field(2, ge=1)
    d_ff: int = Field(256, ge=1)
    dropout: float = Field(0.2, ge=0.0, lt=1.0)
    reduction: int = Field(4, ge=1)
    spectral_mode: SpectralMode = SpectralMode.PER_BIN
    head_hidden: Optional[int] = Field(None, ge=1)
    learning_rate: float = Field(1e-4, gt=0, description="default when training config leaves it unset")

    @model_validator(mode="after")
    def heads_divide_width(self) -> "ModelConfig":
        if self.d_model % self.n_heads:
            raise ValueError(f"d_model {self.d_model} must be divisible by n_heads {self.n_heads}")
        return self

    @property
    def bottleneck(self) -> int:
        return max(1, self.n_features // self.reduction)

    @property
    def hidden(self) -> int:
        return self.head_hidden if self.head_hidden is not None else max(1, self.d_model // 2)

    @classmethod
    def create(cls, source: Optional[str] = None, **values: Any) -> "ModelConfig":
        """Validated construction that reports every problem as a ConfigError."""
        return validated(cls, values, source)


PRESETS: Dict[str, Dict[str, Any]] = {
    "base-30": dict(window=30, d_model=64, n_heads=2, n_layers=2, d_ff=256, dropout=0.2, learning_rate=1e-4),
    "base-60": dict(window=60, d_model=64, n_heads=4, n_layers=2, d_ff=256, dropout=0.2, learning_rate=1e-4),
}


def preset(name: str, **overrides: Any) -> ModelConfig:
    if name not in PRESETS:
        raise ConfigError([f"unknown preset {name!r}; choose from {sorted(PRESETS)}"])
    return ModelConfig.create(**{**PRESETS[name], **overrides})


def param_shapes(config: ModelConfig) -> Dict[str, Tuple[int, ...]]:
    F, d, r, h = config.n_features, config.d_model, config.bottleneck, config.hidden
    if config.spectral_mode is SpectralMode.PER_BIN:
        spectral = (F, spectral_bins(config.window))
    else:
        spectral = (F,)
    shapes: Dict[str, Tuple[int, ...]] = {
        "spectral.w_real": spectral,
        "spectral.w_imag": spectral,
        "mix.w1": (r, F),
        "mix.w2": (F, r),
        "proj.weight": (F, d),
        "proj.bias": (d,),
    }
    for i in range(config.n_layers):
        b = f"block{i}"
        for name in ("q", "k", "v", "o"):
            shapes[f"{b}.attn.w{name}"] = (d, d)
            shapes[f"{b}.attn.b{name}"] = (d,)
        shapes[f"{b}.ln1.gamma"] = (d,)
        shapes[f"{b}.ln1.beta"] = (d,)
        shapes[f"{b}.ffn.w1"] = (d, config.d_ff)
        shapes[f"{b}.ffn.b1"] = (config.d_ff,)
        shapes[f"{b}.ffn.w2"] = (config.d_ff, d)
        shapes[f"{b}.ffn.b2"] = (d,)
        shapes[f"{b}.ln2.gamma"] = (d,)
        shapes[f"{b}.ln2.beta"] = (d,)
    shapes["head.w1"] = (d, h)
    shapes["head.b1"] = (h,)
    shapes["head.w2"] = (h, N_CLASSES)
    shapes["head.b2"] = (N_CLASSES,)
    return shapes


def parameter_count(config: ModelConfig) -> int:
    return int(sum(np.prod(s) for s in param_shapes(config).values()))


def _fan_in(name: str, shapes: Dict[str, Tuple[int, ...]]) -> int:
    """Input width of the affine layer owning `name`; mixing matrices are stored (out, in)."""
    if name.startswith("mix."):
        return shapes[name][1]
    owner, leaf = name.rsplit(".", 1)
    if leaf == "bias":
        leaf = "weight"
    elif leaf.startswith("b"):
        leaf = "w" + leaf[1:]
    return shapes[f"{owner}.{leaf}"][0]


def init_params(config: ModelConfig, seed: int = 0) -> Params:
    """Uniform(+-sqrt(1/fan_in)) affine weights and biases, identity spectral weights, unit LayerNorm."""
    rng = np.random.default_rng(seed)
    shapes = param_shapes(config)
    params: Params = {}
    for name, shape in shapes.items():
        if name == "spectral.w_real" or name.endswith(".gamma"):
            params[name] = np.ones(shape)
        elif name == "spectral.w_imag" or name.endswith(".beta"):
            params[name] = np.zeros(shape)
        else:
            params[name] = uniform_init(rng, _fan_in(name, shapes), shape)
    return params


def spectral_params(params: Params) -> Tuple[np.ndarray, np.ndarray]:
    return params["spectral.w_real"], params["spectral.w_imag"]


@dataclass
class ForwardTrace:
    """Intermediate tensors of one forward pass; `cache` holds what backward needs."""
    X_spectral: np.ndarray
    z: np.ndarray
    s: np.ndarray
    X_mixed: np.ndarray
    Z_0: np.ndarray
    H: np.ndarray
    pooled: np.ndarray
    logits: np.ndarray
    probabilities: np.ndarray
    cache: Optional[Dict[str, Any]] = field(default=None, repr=False)


def encoder_forward(X_mixed: np.ndarray, params: Params, config: ModelConfig,
                    training: bool = False, rng: Optional[np.random.Generator] = None):
    """Projection + sinusoidal positions, then post-norm Transformer blocks.

    Returns (H, Z_0, cache).
    """
    if config.d_model % config.n_heads:
        raise ConfigError([f"d_model {config.d_model} must be divisible by n_heads {config.n_heads}"])
    B, L, F = X_mixed.shape
    if F != config.n_features:
        raise ShapeError(f"expected {config.n_features} features, got {F}")

    proj, proj_cache = linear_forward(X_mixed, params["proj.weight"], params["proj.bias"])
    Z_0 = proj + sinusoidal_encoding(L, config.d_model)[None]
    x, pe_mask = dropout_forward(Z_0, config.dropout, rng, training)

    blocks = []
    for i in range(config.n_layers):
        b = f"block{i}"
        attn_p = {k.split(".")[-1]: v for k, v in params.items() if k.startswith(f"{b}.attn.")}
        a, attn_cache = attention_forward(x, attn_p, config.n_heads)
        a, attn_mask = dropout_forward(a, config.dropout, rng, training)
        x1, ln1_cache = layernorm_forward(x + a, params[f"{b}.ln1.gamma"], params[f"{b}.ln1.beta"])

        pre, ff1_cache = linear_forward(x1, params[f"{b}.ffn.w1"], params[f"{b}.ffn.b1"])
        act = gelu(pre)
        act_d, ff_mask = dropout_forward(act, config.dropout, rng, training)
        f2, ff2_cache = linear_forward(act_d, params[f"{b}.ffn.w2"], params[f"{b}.ffn.b2"])
        x2, ln2_cache = layernorm_forward(x1 + f2, params[f"{b}.ln2.gamma"], params[f"{b}.ln2.beta"])

        blocks.append(dict(attn_p=attn_p, attn=attn_cache, attn_mask=attn_mask, ln1=ln1_cache,
                           ff1=ff1_cache, pre=pre, ff_mask=ff_mask, ff2=ff2_cache, ln2=ln2_cache))
        x = x2

    return x, Z_0, dict(proj=proj_cache, pe_mask=pe_mask, blocks=blocks)


def encoder_backward(gH: np.ndarray, cache: Dict[str, Any], params: Params, config: ModelConfig):
    """Returns (grad wrt X_mixed, parameter grads)."""
    grads: Params = {}
    g = gH
    for i in reversed(range(config.n_layers)):
        b = f"block{i}"
        c = cache["blocks"][i]
        g_sum2, grads[f"{b}.ln2.gamma"], grads[f"{b}.ln2.beta"] = layernorm_backward(g, c["ln2"])
        g_act_d, grads[f"{b}.ffn.w2"], grads[f"{b}.ffn.b2"] = linear_backward(
            g_sum2, c["ff2"], params[f"{b}.ffn.w2"])
        g_pre = dropout_backward(g_act_d, c["ff_mask"]) * gelu_grad(c["pre"])
        g_x1, grads[f"{b}.ffn.w1"], grads[f"{b}.ffn.b1"] = linear_backward(
            g_pre, c["ff1"], params[f"{b}.ffn.w1"])
        g_x1 = g_x1 + g_sum2

        g_sum1, grads[f"{b}.ln1.gamma"], grads[f"{b}.ln1.beta"] = layernorm_backward(g_x1, c["ln1"])
        g_a = dropout_backward(g_sum1, c["attn_mask"])
        g_x, attn_grads = attention_backward(g_a, c["attn"], c["attn_p"])
        for k, v in attn_grads.items():
            grads[f"{b}.attn.{k}"] = v
        g = g_x + g_sum1

    g_z0 = dropout_backward(g, cache["pe_mask"])
    g_xm, grads["proj.weight"], grads["proj.bias"] = linear_backward(g_z0, cache["proj"], params["proj.weight"])
    return g_xm, grads


def head_forward(pooled: np.ndarray, params: Params, config: ModelConfig,
                 training: bool, rng: Optional[np.random.Generator]):
    pre, c1 = linear_forward(pooled, params["head.w1"], params["head.b1"])
    act, mask = dropout_forward(gelu(pre), config.dropout, rng, training)
    logits, c2 = linear_forward(act, params["head.w2"], params["head.b2"])
    return logits, dict(c1=c1, pre=pre, mask=mask, c2=c2)


def head_backward(grad_logits: np.ndarray, cache: Dict[str, Any], params: Params):
    grads: Params = {}
    g_act, grads["head.w2"], grads["head.b2"] = linear_backward(grad_logits, cache["c2"], params["head.w2"])
    g_pre = dropout_backward(g_act, cache["mask"]) * gelu_grad(cache["pre"])
    g_pooled, grads["head.w1"], grads["head.b1"] = linear_backward(g_pre, cache["c1"], params["head.w1"])
    return g_pooled, grads


def forward(X: np.ndarray, params: Params, config: ModelConfig, training: bool = False,
            rng: Optional[np.random.Generator] = None, retain: bool = True) -> ForwardTrace:
    """Full forward pass on a (B, L, F) batch of normalized windows."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 3 or X.shape[2] != config.n_features:
        raise ShapeError(f"expected (B, L, {config.n_features}) input, got {X.shape}")

    w_real, w_imag = spectral_params(params)
    X_spectral, spec_cache = spectral_forward(X, w_real, w_imag, config.spectral_mode)
    z, s, X_mixed, mix_cache = channel_mix_forward(X_spectral, params["mix.w1"], params["mix.w2"])
    H, Z_0, enc_cache = encoder_forward(X_mixed, params, config, training, rng)
    pooled = H.mean(axis=1)
    logits, head_cache = head_forward(pooled, params, config, training, rng)
    probabilities = stable_softmax(logits, axis=-1)

    cache = None
    if retain:
        cache = dict(params=params, config=config, spectral=spec_cache, mix=mix_cache,
                     encoder=enc_cache, head=head_cache, length=X.shape[1])
    return ForwardTrace(X_spectral=X_spectral, z=z, s=s, X_mixed=X_mixed, Z_0=Z_0, H=H,
                        pooled=pooled, logits=logits, probabilities=probabilities, cache=cache)


def backward(trace: Optional[ForwardTrace], grad_logits: np.ndarray) -> Params:
    """Gradients of every parameter given d(loss)/d(logits)."""
    if trace is None or trace.cache is None:
        raise TraceError("backward needs a forward trace retained with retain=True")
    cache = trace.cache
    params: Params = cache["params"]
    config: ModelConfig = cache["config"]
    grad_logits = np.asarray(grad_logits, dtype=np.float64)
    if grad_logits.shape != trace.logits.shape:
        raise ShapeError(f"grad_logits shape {grad_logits.shape} != logits {trace.logits.shape}")

    g_pooled, grads = head_backward(grad_logits, cache["head"], params)
    L = cache["length"]
    gH = np.repeat(g_pooled[:, None, :], L, axis=1) / L
    g_mixed, enc_grads = encoder_backward(gH, cache["encoder"], params, config)
    grads.update(enc_grads)
    g_spec, grads["mix.w1"], grads["mix.w2"] = channel_mix_backward(
        g_mixed, cache["mix"], params["mix.w1"], params["mix.w2"])
    _, grads["spectral.w_real"], grads["spectral.w_imag"] = spectral_backward(g_spec, cache["spectral"])
    return {name: grads[name] for name in params}


class MineROINet:
    """Parameters plus config, with seeded dropout for training."""

    arch_tag = ARCH_TAG

    def __init__(self, config: ModelConfig, seed: int = 0, params: Optional[Params] = None):
        self.config = config
        self.params: Params = params if params is not None else init_params(config, seed)
        expected = param_shapes(config)
        for name, shape in expected.items():
            if name not in self.params or self.params[name].shape != shape:
                got = None if name not in self.params else self.params[name].shape
                raise ShapeError(f"parameter {name}: expected shape {shape}, got {got}")
        for name, value in self.params.items():
            check_finite(value, name)

    def forward(self, X: np.ndarray, training: bool = False,
                rng: Optional[np.random.Generator] = None, retain: bool = True) -> ForwardTrace:
        return forward(X, self.params, self.config, training, rng, retain)

    def backward(self, trace: ForwardTrace, grad_logits: np.ndarray) -> Params:
        return backward(trace, grad_logits)

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return self.forward(X, training=False, retain=False).probabilities

    def config_dict(self) -> Dict[str, Any]:
        return self.config.model_dump(mode="json")

    @property
    def n_parameters(self) -> int:
        return int(sum(p.size for p in self.params.values()))
