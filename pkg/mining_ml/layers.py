"""
Network building blocks in float64 numpy, each with a hand-derived backward pass.

Forward functions return (output, cache); backward functions take the upstream
gradient and the cache and return the input gradient plus parameter gradients.
Affine weights are stored (in_features, out_features).
"""

import math
from enum import Enum
from typing import Dict, Optional, Tuple

import numpy as np
from scipy.special import erf, softmax

from mining_etl.core.errors import ShapeError

_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
LAYERNORM_EPS = 1e-5


class SpectralMode(str, Enum):
    """How the spectral extractor's complex weights are laid out."""
    PER_BIN = "per_bin"
    LITERAL = "literal"


def check_finite(x: np.ndarray, name: str) -> None:
    if not np.all(np.isfinite(x)):
        raise ShapeError(f"{name} contains non-finite values")


def uniform_init(rng: np.random.Generator, fan_in: int, shape: Tuple[int, ...]) -> np.ndarray:
    bound = math.sqrt(1.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape)


# --- affine -----------------------------------------------------------------

def linear_forward(x: np.ndarray, weight: np.ndarray, bias: Optional[np.ndarray] = None):
    if x.shape[-1] != weight.shape[0]:
        raise ShapeError(f"linear: input width {x.shape[-1]} != weight rows {weight.shape[0]}")
    y = x @ weight
    if bias is not None:
        y = y + bias
    return y, x


def linear_backward(grad: np.ndarray, x: np.ndarray, weight: np.ndarray):
    """Returns (grad_x, grad_weight, grad_bias)."""
    x2 = x.reshape(-1, x.shape[-1])
    g2 = grad.reshape(-1, grad.shape[-1])
    return grad @ weight.T, x2.T @ g2, g2.sum(axis=0)


# --- activations --------------------------------------------------------------

def gelu(x: np.ndarray) -> np.ndarray:
    """Exact GELU, x * Phi(x)."""
    return 0.5 * x * (1.0 + erf(x / _SQRT2))


def gelu_grad(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + erf(x / _SQRT2)) + x * _INV_SQRT_2PI * np.exp(-0.5 * x * x)


def sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def stable_softmax(x: np.ndarray, axis: int = -1) -> np.ndarray:
    return softmax(x, axis=axis)


# --- layer norm ---------------------------------------------------------------

def layernorm_forward(x: np.ndarray, gamma: np.ndarray, beta: np.ndarray, eps: float = LAYERNORM_EPS):
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = (x - mu) * inv_std
    return gamma * xhat + beta, (xhat, inv_std, gamma)


def layernorm_backward(grad: np.ndarray, cache):
    xhat, inv_std, gamma = cache
    d = xhat.shape[-1]
    gxhat = grad * gamma
    gx = (inv_std / d) * (d * gxhat
                          - gxhat.sum(axis=-1, keepdims=True)
                          - xhat * (gxhat * xhat).sum(axis=-1, keepdims=True))
    lead = tuple(range(grad.ndim - 1))
    return gx, (grad * xhat).sum(axis=lead), grad.sum(axis=lead)


# --- dropout ------------------------------------------------------------------

def dropout_forward(x: np.ndarray, rate: float, rng: Optional[np.random.Generator], training: bool):
    """Inverted dropout; identity (mask None) outside training or at rate 0."""
    if not training or rate <= 0.0:
        return x, None
    if rng is None:
        raise ValueError("dropout in training mode needs a random generator")
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * mask, mask


def dropout_backward(grad: np.ndarray, mask: Optional[np.ndarray]) -> np.ndarray:
    return grad if mask is None else grad * mask


# --- positional encoding ------------------------------------------------------

def sinusoidal_encoding(length: int, d_model: int) -> np.ndarray:
    """Sine on even channels, cosine on odd channels."""
    position = np.arange(length, dtype=np.float64)[:, None]
    div = np.exp(np.arange(0, d_model, 2, dtype=np.float64) * (-math.log(10000.0) / d_model))
    pe = np.zeros((length, d_model))
    pe[:, 0::2] = np.sin(position * div)
    pe[:, 1::2] = np.cos(position * div[: d_model // 2])
    return pe


# --- multi-head self-attention ------------------------------------------------

def attention_forward(x: np.ndarray, p: Dict[str, np.ndarray], n_heads: int):
    """Full (unmasked) multi-head self-attention over the time axis of x: (B, L, d)."""
    B, L, d = x.shape
    if d % n_heads:
        raise ShapeError(f"d_model {d} not divisible by {n_heads} heads")
    dh = d // n_heads
    scale = 1.0 / math.sqrt(dh)

    def heads(t):
        return t.reshape(B, L, n_heads, dh).transpose(0, 2, 1, 3)

    q = heads(x @ p["wq"] + p["bq"])
    k = heads(x @ p["wk"] + p["bk"])
    v = heads(x @ p["wv"] + p["bv"])
    scores = (q @ k.transpose(0, 1, 3, 2)) * scale
    attn = stable_softmax(scores, axis=-1)
    ctx = (attn @ v).transpose(0, 2, 1, 3).reshape(B, L, d)
    out = ctx @ p["wo"] + p["bo"]
    return out, (x, q, k, v, attn, ctx, scale)


def attention_backward(grad: np.ndarray, cache, p: Dict[str, np.ndarray]):
    x, q, k, v, attn, ctx, scale = cache
    B, H, L, dh = q.shape
    d = H * dh
    g = {}

    gctx, g["wo"], g["bo"] = linear_backward(grad, ctx, p["wo"])
    gctx = gctx.reshape(B, L, H, dh).transpose(0, 2, 1, 3)

    gattn = gctx @ v.transpose(0, 1, 3, 2)
    gv = attn.transpose(0, 1, 3, 2) @ gctx
    gscores = attn * (gattn - (gattn * attn).sum(axis=-1, keepdims=True))
    gq = (gscores @ k) * scale
    gk = (gscores.transpose(0, 1, 3, 2) @ q) * scale

    def merge(t):
        return t.transpose(0, 2, 1, 3).reshape(B, L, d)

    gx = np.zeros_like(x)
    for name, gt in (("q", gq), ("k", gk), ("v", gv)):
        gx_part, g[f"w{name}"], g[f"b{name}"] = linear_backward(merge(gt), x, p[f"w{name}"])
        gx += gx_part
    return gx, g


# --- spectral extractor -------------------------------------------------------

def spectral_bins(length: int) -> int:
    return length // 2 + 1


def spectral_forward(x: np.ndarray, w_real: np.ndarray, w_imag: np.ndarray, mode: SpectralMode):
    """DFT along time, multiply by complex weights, inverse DFT, real part.

    per_bin: weights (F, L//2+1) on the real-input spectrum.
    literal: weights (F,), one complex scalar per feature broadcast over all L bins.
    """
    check_finite(x, "spectral input")
    B, L, F = x.shape
    w = w_real + 1j * w_imag
    mode = SpectralMode(mode)
    if mode is SpectralMode.PER_BIN:
        if w.shape != (F, spectral_bins(L)):
            raise ShapeError(f"per_bin weights must be {(F, spectral_bins(L))}, got {w.shape}")
        xf = np.fft.rfft(x, axis=1)
        y = np.fft.irfft(xf * w.T[None], n=L, axis=1)
    else:
        if w.shape != (F,):
            raise ShapeError(f"literal weights must be ({F},), got {w.shape}")
        xf = np.fft.fft(x, axis=1)
        y = np.fft.ifft(xf * w[None, None, :], axis=1).real
    return y, (xf, w, mode, L)


def spectral_backward(grad: np.ndarray, cache):
    """Returns (grad_x, grad_w_real, grad_w_imag)."""
    xf, w, mode, L = cache
    if mode is SpectralMode.PER_BIN:
        K = xf.shape[1]
        c = np.full(K, 2.0)
        c[0] = 1.0
        if L % 2 == 0:
            c[-1] = 1.0
        c = c[None, :, None]
        gy = np.fft.rfft(grad, axis=1) * (c / L)
        gw = (gy * np.conj(xf)).sum(axis=0).T
        gxf = gy * np.conj(w.T)[None]
        gx = np.fft.irfft(gxf * (L / c), n=L, axis=1)
    else:
        gy = np.fft.fft(grad, axis=1) / L
        gw = (gy * np.conj(xf)).sum(axis=(0, 1))
        gxf = gy * np.conj(w)[None, None, :]
        gx = (np.fft.ifft(gxf, axis=1) * L).real
    return gx, gw.real, gw.imag


# --- channel mixing -----------------------------------------------------------

def channel_mix_forward(xs: np.ndarray, w1: np.ndarray, w2: np.ndarray):
    """z = temporal mean; s = W2 GELU(W1 z); output xs scaled per feature by s."""
    B, L, F = xs.shape
    if w1.shape[1] != F or w2.shape != (F, w1.shape[0]):
        raise ShapeError(f"mixing weights {w1.shape}/{w2.shape} do not fit {F} features")
    z = xs.mean(axis=1)
    h = z @ w1.T
    a = gelu(h)
    s = a @ w2.T
    return z, s, xs * s[:, None, :], (xs, z, h, a, s)


def channel_mix_backward(grad: np.ndarray, cache, w1: np.ndarray, w2: np.ndarray):
    """Returns (grad_xs, grad_w1, grad_w2)."""
    xs, z, h, a, s = cache
    L = xs.shape[1]
    gs = (grad * xs).sum(axis=1)
    gw2 = gs.T @ a
    gh = (gs @ w2) * gelu_grad(h)
    gw1 = gh.T @ z
    gz = gh @ w1
    gxs = grad * s[:, None, :] + gz[:, None, :] / L
    return gxs, gw1, gw2
