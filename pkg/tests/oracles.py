"""Scalar, loop-only reference evaluations of the two attention formulas.

No numpy broadcasting or matrix products: every sum is spelled out so
the oracle shares no code path with the tape implementation.
"""

import math


def _vecmat(x, w):
    return [sum(x[i] * w[i][j] for i in range(len(x))) for j in range(len(w[0]))]


def _dot(a, b):
    return sum(x * y for x, y in zip(a, b))


def _softmax(row):
    m = max(row)
    e = [math.exp(v - m) for v in row]
    s = sum(e)
    return [v / s for v in e]


def bucket(pa, pb, clip):
    dr = max(-clip, min(clip, pa[0] - pb[0])) + clip
    dc = max(-clip, min(clip, pa[1] - pb[1])) + clip
    return dr * (2 * clip + 1) + dc


def self_attention_irpe(x, positions, wq, wk, wv, wo, tq, tk, tv, clip):
    """Single head. ``x``: N rows of C; tables: (2 clip + 1)^2 rows of C."""
    n = len(x)
    q = [_vecmat(r, wq) for r in x]
    k = [_vecmat(r, wk) for r in x]
    v = [_vecmat(r, wv) for r in x]
    d = len(q[0])
    heads = []
    for a in range(n):
        logits = []
        for b in range(n):
            r = bucket(positions[a], positions[b], clip)
            logits.append(_dot(q[a], k[b]) / math.sqrt(d) + _dot(q[a], tq[r]) + _dot(k[b], tk[r]))
        att = _softmax(logits)
        row = [0.0] * d
        for b in range(n):
            r = bucket(positions[a], positions[b], clip)
            for c in range(d):
                row[c] += att[b] * (v[b][c] + tv[r][c])
        heads.append(row)
    return [_vecmat(h, wo) for h in heads]


def cross_attention(x_query, x_memory, wq, wk, wv, wo):
    q = [_vecmat(r, wq) for r in x_query]
    k = [_vecmat(r, wk) for r in x_memory]
    v = [_vecmat(r, wv) for r in x_memory]
    d = len(q[0])
    out = []
    for a in range(len(q)):
        att = _softmax([_dot(q[a], k[b]) / math.sqrt(d) for b in range(len(k))])
        row = [sum(att[b] * v[b][c] for b in range(len(k))) for c in range(d)]
        out.append(_vecmat(row, wo))
    return out
