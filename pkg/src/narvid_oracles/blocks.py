"""Scalar-loop re-implementation of the enhancement blocks.

Mirrors the engine architecture exactly: pre-norm attention and FFN deltas
added to a residual base, temporal deltas computed on (input + positions)
but landing on the position-free input.
"""

import math

from .common import as_matrix, as_vector, dot, softmax_temp

LN_EPS = 1e-5
GELU_A = math.sqrt(2.0 / math.pi)
GELU_B = 0.044715


def _layer_norm(rows, gain, bias):
    out = []
    for row in rows:
        n = len(row)
        mu = sum(row) / n
        var = sum((x - mu) ** 2 for x in row) / n
        inv = 1.0 / math.sqrt(var + LN_EPS)
        out.append([(x - mu) * inv * g + b for x, g, b in zip(row, gain, bias)])
    return out


def _matmul(rows, weight):
    cols = len(weight[0])
    return [[dot(row, [weight[i][j] for i in range(len(weight))])
             for j in range(cols)] for row in rows]


def _gelu(x):
    return 0.5 * x * (1.0 + math.tanh(GELU_A * (x + GELU_B * x ** 3)))


def _ffn(rows, w1, b1, w2, b2):
    hidden = [[_gelu(h + b) for h, b in zip(row, b1)] for row in _matmul(rows, w1)]
    return [[h + b for h, b in zip(row, b2)] for row in _matmul(hidden, w2)]


def oracle_multi_head_attention(queries, keys, values, wq, wk, wv, wo, heads):
    queries, keys, values = map(as_matrix, (queries, keys, values))
    d = len(queries[0])
    dh = d // heads
    q = _matmul(queries, as_matrix(wq))
    k = _matmul(keys, as_matrix(wk))
    v = _matmul(values, as_matrix(wv))
    merged = [[0.0] * d for _ in queries]
    for h in range(heads):
        lo, hi = h * dh, (h + 1) * dh
        for i in range(len(queries)):
            scores = [dot(q[i][lo:hi], k[j][lo:hi]) / math.sqrt(dh)
                      for j in range(len(keys))]
            weights = softmax_temp(scores, 1.0)
            for j, w in enumerate(weights):
                for c in range(lo, hi):
                    merged[i][c] += w * v[j][c]
    return _matmul(merged, as_matrix(wo))


def _contributions(x_in, ctx, block, heads):
    # deltas are scaled by 1/sqrt(D) to keep the unit-norm residual stream
    # dominant at init, mirroring the engine block
    scale = 1.0 / math.sqrt(len(x_in[0]))
    gain1, bias1 = as_vector(block["ln1_gain"]), as_vector(block["ln1_bias"])
    xn = _layer_norm(x_in, gain1, bias1)
    cn = xn if ctx is x_in else _layer_norm(ctx, gain1, bias1)
    a = oracle_multi_head_attention(xn, cn, cn, block["wq"], block["wk"],
                                    block["wv"], block["wo"], heads)
    a = [[scale * x for x in row] for row in a]
    z = [[x + y for x, y in zip(xr, ar)] for xr, ar in zip(x_in, a)]
    zn = _layer_norm(z, as_vector(block["ln2_gain"]), as_vector(block["ln2_bias"]))
    f = _ffn(zn, as_matrix(block["ffn_w1"]), as_vector(block["ffn_b1"]),
             as_matrix(block["ffn_w2"]), as_vector(block["ffn_b2"]))
    f = [[scale * x for x in row] for row in f]
    return a, f


def _add3(base, a, f):
    return [[x + y + z for x, y, z in zip(br, ar, fr)]
            for br, ar, fr in zip(base, a, f)]


def oracle_co_attention(frames, captions, video_block, narration_block, heads):
    frames, captions = as_matrix(frames), as_matrix(captions)
    av, fv = _contributions(frames, captions, video_block, heads)
    an, fn = _contributions(captions, frames, narration_block, heads)
    return _add3(frames, av, fv), _add3(captions, an, fn)


def oracle_temporal(seq, positions, block, heads):
    seq = as_matrix(seq)
    pos = as_matrix(positions)
    y = [[x + p for x, p in zip(row, pos[k])] for k, row in enumerate(seq)]
    a, f = _contributions(y, y, block, heads)
    return _add3(seq, a, f)
