"""
Brute-force reference implementations.

Plain loops over Python floats, sharing no code with the optimized paths they
check: ROI accumulation, the O(L^2) DFT, confusion counting, class metrics,
pairwise AUC, the seed mean/std, a scalar-loop MineROI-Net forward pass and
one LSTM layer.
"""

import cmath
import math
from datetime import date, timedelta
from typing import Dict, List, Sequence, Tuple

from ..core.errors import CoverageError, DomainError
from ..core.models import BLOCKS_PER_DAY, MachineSpec, MarketDay, RevenueSource, RoiResult


def oracle_roi(machine: MachineSpec, purchase_date: date, horizon_days: int,
               market: Sequence[MarketDay], region: str,
               revenue_source: RevenueSource = RevenueSource.NETWORK_REVENUE) -> RoiResult:
    """Day-by-day ROI of buying `machine` on `purchase_date`."""
    by_date: Dict[date, MarketDay] = {}
    for day in market:
        by_date[day.date] = day

    capital = machine.price_series.get(purchase_date)
    if capital is None:
        raise CoverageError(f"no price on {purchase_date}", missing_date=purchase_date)

    revenue = 0.0
    cost = 0.0
    for k in range(horizon_days):
        d = purchase_date + timedelta(days=k)
        if d not in by_date:
            raise CoverageError(f"missing market day {d}", missing_date=d)
        day = by_date[d]
        if region not in day.electricity_rates:
            raise CoverageError(f"missing rate on {d}", missing_date=d)
        if revenue_source == RevenueSource.RECONSTRUCTED:
            network_usd = (day.block_reward * BLOCKS_PER_DAY + day.transaction_fees) * day.btc_price
        else:
            network_usd = day.network_revenue
        revenue += machine.hashrate / day.network_hashrate * network_usd
        cost += machine.power * 24.0 / 1000.0 * day.electricity_rates[region]

    value = (revenue - cost) / capital
    if not math.isfinite(value):
        raise DomainError(f"non-finite ROI {value}")
    if value <= 0:
        cls = 0
    elif value < 1:
        cls = 1
    else:
        cls = 2
    return RoiResult(roi=value, revenue_total=revenue, op_cost_total=cost, capital=capital, label=cls)


def naive_dft(x: Sequence[float]) -> List[complex]:
    n = len(x)
    return [sum(x[t] * cmath.exp(-2j * math.pi * k * t / n) for t in range(n)) for k in range(n)]


def naive_idft(X: Sequence[complex]) -> List[complex]:
    n = len(X)
    return [sum(X[k] * cmath.exp(2j * math.pi * k * t / n) for k in range(n)) / n for t in range(n)]


def naive_spectral_literal(x: Sequence[float], weight: complex) -> List[float]:
    """Real part of IDFT(weight * DFT(x)) for one feature column."""
    return [v.real for v in naive_idft([weight * v for v in naive_dft(x)])]


def naive_confusion(y_true: Sequence[int], y_pred: Sequence[int]) -> List[List[int]]:
    counts = [[0, 0, 0] for _ in range(3)]
    for t, p in zip(y_true, y_pred):
        counts[t][p] += 1
    return counts


def naive_metrics(counts: Sequence[Sequence[int]]) -> Dict[str, object]:
    total = 0
    diagonal = 0
    for i in range(3):
        for j in range(3):
            total += counts[i][j]
        diagonal += counts[i][i]
    precision, recall, f1 = [], [], []
    for c in range(3):
        tp = counts[c][c]
        predicted = counts[0][c] + counts[1][c] + counts[2][c]
        actual = counts[c][0] + counts[c][1] + counts[c][2]
        p = tp / predicted if predicted else 0.0
        r = tp / actual if actual else 0.0
        precision.append(p)
        recall.append(r)
        f1.append(2 * p * r / (p + r) if p + r else 0.0)
    return {
        "accuracy": diagonal / total,
        "precision": precision,
        "recall": recall,
        "f1": f1,
        "macro_f1": (f1[0] + f1[1] + f1[2]) / 3,
    }


def pairwise_auc(scores: Sequence[float], positive: Sequence[bool]) -> float:
    """Fraction of (positive, negative) pairs ordered correctly; ties count 1/2."""
    pos = [s for s, is_pos in zip(scores, positive) if is_pos]
    neg = [s for s, is_pos in zip(scores, positive) if not is_pos]
    wins = 0.0
    for a in pos:
        for b in neg:
            if a > b:
                wins += 1.0
            elif a == b:
                wins += 0.5
    return wins / (len(pos) * len(neg))


def mean_std(values: Sequence[float]) -> Tuple[float, float]:
    """Mean and sample (n - 1) standard deviation."""
    n = len(values)
    mean = sum(values) / n
    return mean, math.sqrt(sum((v - mean) ** 2 for v in values) / (n - 1))


def naive_weighted_ce(logits: Sequence[Sequence[float]], targets: Sequence[Sequence[float]],
                      weights: Sequence[float]) -> float:
    total = 0.0
    for row, target in zip(logits, targets):
        exps = [math.exp(v) for v in row]
        z = sum(exps)
        for c in range(len(row)):
            total -= weights[c] * target[c] * math.log(exps[c] / z)
    return total / len(logits)


# --- network references -------------------------------------------------------
# Matrices arrive as nested lists (`ndarray.tolist()`); affine weights are (in, out).

Matrix = List[List[float]]


def _affine(rows: Matrix, weight: Matrix, bias: Sequence[float]) -> Matrix:
    n_out = len(bias)
    return [[sum(row[i] * weight[i][j] for i in range(len(row))) + bias[j] for j in range(n_out)]
            for row in rows]


def _gelu(v: float) -> float:
    return 0.5 * v * (1.0 + math.erf(v / math.sqrt(2.0)))


def _layernorm(row: Sequence[float], gamma: Sequence[float], beta: Sequence[float],
               eps: float = 1e-5) -> List[float]:
    n = len(row)
    mu = sum(row) / n
    var = sum((v - mu) ** 2 for v in row) / n
    return [gamma[i] * (row[i] - mu) / math.sqrt(var + eps) + beta[i] for i in range(n)]


def naive_spectral_per_bin(x: Sequence[float], weights: Sequence[complex]) -> List[float]:
    """Per-bin filter of one feature column: weights cover bins 0..L//2, mirrored onto the rest."""
    n = len(x)
    spectrum = naive_dft(x)
    filtered = []
    for k in range(n):
        if k <= n // 2:
            filtered.append(spectrum[k] * weights[k])
        else:
            filtered.append((spectrum[n - k] * weights[n - k]).conjugate())
    return [v.real for v in naive_idft(filtered)]


def naive_positional(length: int, d_model: int) -> Matrix:
    pe = []
    for t in range(length):
        row = []
        for c in range(d_model):
            angle = t / 10000.0 ** ((c - c % 2) / d_model)
            row.append(math.sin(angle) if c % 2 == 0 else math.cos(angle))
        pe.append(row)
    return pe


def naive_attention(x: Matrix, p: Dict[str, object], n_heads: int) -> Matrix:
    """softmax(Q K^T / sqrt(d_head)) V per head, heads concatenated, then the output projection."""
    q = _affine(x, p["wq"], p["bq"])
    k = _affine(x, p["wk"], p["bk"])
    v = _affine(x, p["wv"], p["bv"])
    length, d = len(x), len(x[0])
    dh = d // n_heads
    ctx = [[0.0] * d for _ in range(length)]
    for h in range(n_heads):
        cols = range(h * dh, (h + 1) * dh)
        for i in range(length):
            scores = [sum(q[i][c] * k[j][c] for c in cols) / math.sqrt(dh) for j in range(length)]
            top = max(scores)
            exps = [math.exp(s - top) for s in scores]
            z = sum(exps)
            for c in cols:
                ctx[i][c] = sum(exps[j] / z * v[j][c] for j in range(length))
    return _affine(ctx, p["wo"], p["bo"])


def naive_mineroi_logits(window: Matrix, params: Dict[str, object], n_heads: int, n_layers: int,
                         per_bin: bool = True) -> List[float]:
    """Inference-mode logits of one (L, F) window, one scalar at a time."""
    length, n_features = len(window), len(window[0])
    w_real, w_imag = params["spectral.w_real"], params["spectral.w_imag"]

    columns = []
    for f in range(n_features):
        series = [window[t][f] for t in range(length)]
        if per_bin:
            weights = [complex(w_real[f][k], w_imag[f][k]) for k in range(len(w_real[f]))]
            columns.append(naive_spectral_per_bin(series, weights))
        else:
            columns.append(naive_spectral_literal(series, complex(w_real[f], w_imag[f])))
    xs = [[columns[f][t] for f in range(n_features)] for t in range(length)]

    w1, w2 = params["mix.w1"], params["mix.w2"]
    z = [sum(xs[t][f] for t in range(length)) / length for f in range(n_features)]
    hidden = [_gelu(sum(w1[j][f] * z[f] for f in range(n_features))) for j in range(len(w1))]
    s = [sum(w2[f][j] * hidden[j] for j in range(len(hidden))) for f in range(n_features)]
    mixed = [[xs[t][f] * s[f] for f in range(n_features)] for t in range(length)]

    x = _affine(mixed, params["proj.weight"], params["proj.bias"])
    pe = naive_positional(length, len(x[0]))
    x = [[x[t][c] + pe[t][c] for c in range(len(x[0]))] for t in range(length)]

    for i in range(n_layers):
        b = f"block{i}"
        attn = naive_attention(x, {k: params[f"{b}.attn.{k}"] for k in
                                   ("wq", "bq", "wk", "bk", "wv", "bv", "wo", "bo")}, n_heads)
        x1 = [_layernorm([x[t][c] + attn[t][c] for c in range(len(x[t]))],
                         params[f"{b}.ln1.gamma"], params[f"{b}.ln1.beta"]) for t in range(length)]
        pre = _affine(x1, params[f"{b}.ffn.w1"], params[f"{b}.ffn.b1"])
        ff = _affine([[_gelu(v) for v in row] for row in pre], params[f"{b}.ffn.w2"], params[f"{b}.ffn.b2"])
        x = [_layernorm([x1[t][c] + ff[t][c] for c in range(len(x1[t]))],
                        params[f"{b}.ln2.gamma"], params[f"{b}.ln2.beta"]) for t in range(length)]

    pooled = [sum(x[t][c] for t in range(length)) / length for c in range(len(x[0]))]
    head = _affine([pooled], params["head.w1"], params["head.b1"])[0]
    return _affine([[_gelu(v) for v in head]], params["head.w2"], params["head.b2"])[0]


def naive_lstm_cells(xs: Matrix, wx: Matrix, wh: Matrix, b: Sequence[float],
                     h0: Sequence[float], c0: Sequence[float]) -> Tuple[Matrix, Matrix]:
    """Hidden and cell states of one LSTM layer (gate order input, forget, cell, output)."""
    size = len(h0)
    h, c = list(h0), list(c0)
    hs, cs = [], []
    for x in xs:
        a = [sum(x[i] * wx[i][j] for i in range(len(x))) + sum(h[i] * wh[i][j] for i in range(size)) + b[j]
             for j in range(4 * size)]
        sig = [1.0 / (1.0 + math.exp(-v)) for v in a]
        c = [sig[size + u] * c[u] + sig[u] * math.tanh(a[2 * size + u]) for u in range(size)]
        h = [sig[3 * size + u] * math.tanh(c[u]) for u in range(size)]
        hs.append(h)
        cs.append(c)
    return hs, cs
