"""Fused differentiable kernels built on :mod:`dsvpr.numerics.tensor`."""

from __future__ import annotations

import numpy as np

from dsvpr.errors import DimensionError
from dsvpr.numerics.tensor import Tensor, _make, as_tensor, unbroadcast

LAYER_NORM_EPS = 1e-5
L2_EPS = 1e-12


def softmax_rows(x: Tensor) -> Tensor:
    """Softmax over the trailing axis, max-subtracted for stability."""
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        return (y * (g - (g * y).sum(axis=-1, keepdims=True)),)

    return _make(y, (x,), backward)


def log_softmax_rows(x: Tensor) -> Tensor:
    z = x.data - x.data.max(axis=-1, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=-1, keepdims=True))
    out = z - lse

    def backward(g):
        return (g - np.exp(out) * g.sum(axis=-1, keepdims=True),)

    return _make(out, (x,), backward)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = LAYER_NORM_EPS) -> Tensor:
    """Normalize each trailing-axis row to zero mean / unit (biased) variance, then affine."""
    c = x.shape[-1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise DimensionError(f"layer_norm affine shapes {gamma.shape}, {beta.shape} != ({c},)")
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    var = (centered * centered).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv
    gd = gamma.data
    out = xhat * gd + beta.data

    def backward(g):
        gxhat = g * gd
        gx = inv * (
            gxhat
            - gxhat.mean(axis=-1, keepdims=True)
            - xhat * (gxhat * xhat).mean(axis=-1, keepdims=True)
        )
        lead = tuple(range(g.ndim - 1))
        return gx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return _make(out, (x, gamma, beta), backward)


def l2_normalize(x: Tensor, eps: float = L2_EPS) -> Tensor:
    """Scale each trailing-axis row to unit Euclidean norm; rows with norm <= eps are divided by eps."""
    xd = x.data
    norm = np.sqrt((xd * xd).sum(axis=-1, keepdims=True))
    big = norm > eps
    denom = np.where(big, norm, eps)
    y = xd / denom

    def backward(g):
        proj = (g * y).sum(axis=-1, keepdims=True)
        return (np.where(big, (g - y * proj) / denom, g / eps),)

    return _make(y, (x,), backward)


def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 1, padding: int = 0) -> Tensor:
    """2-D cross-correlation. ``x`` is (B, Cin, H, W), ``w`` is (Cout, Cin, k, k)."""
    if x.ndim != 4 or w.ndim != 4:
        raise DimensionError(f"conv2d expects 4-D input and kernel, got {x.shape}, {w.shape}")
    bsz, cin, h, wd = x.shape
    cout, cin_w, kh, kw = w.shape
    if cin != cin_w:
        raise DimensionError(f"conv2d channel mismatch: input {cin}, kernel {cin_w}")
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (wd + 2 * padding - kw) // stride + 1
    if ho < 1 or wo < 1:
        raise DimensionError("conv2d output would be empty")
    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    # channels-last view keeps every offset a plain matmul
    xp_last = xp.transpose(0, 2, 3, 1)
    wd_ = w.data
    out = np.zeros((bsz, ho, wo, cout), dtype=np.result_type(x.dtype, w.dtype))
    span_h = stride * (ho - 1) + 1
    span_w = stride * (wo - 1) + 1
    for di in range(kh):
        for dj in range(kw):
            patch = xp_last[:, di : di + span_h : stride, dj : dj + span_w : stride, :]
            out += patch @ wd_[:, :, di, dj].T
    if b is not None:
        out += b.data
    result = np.ascontiguousarray(out.transpose(0, 3, 1, 2))

    def backward(g):
        g_last = g.transpose(0, 2, 3, 1)
        g_flat = g_last.reshape(-1, cout)
        gxp = np.zeros(xp_last.shape, dtype=xp.dtype)
        gw = np.zeros_like(wd_)
        for di in range(kh):
            for dj in range(kw):
                sl = (slice(None), slice(di, di + span_h, stride), slice(dj, dj + span_w, stride))
                patch = xp_last[sl]
                gw[:, :, di, dj] = g_flat.T @ patch.reshape(-1, cin)
                gxp[sl] += g_last @ wd_[:, :, di, dj]
        gx = gxp.transpose(0, 3, 1, 2)
        if padding:
            gx = gx[:, :, padding : padding + h, padding : padding + wd]
        grads = [np.ascontiguousarray(gx), gw]
        if b is not None:
            grads.append(g_flat.sum(axis=0))
        return tuple(grads)

    parents = (x, w) if b is None else (x, w, b)
    return _make(result, parents, backward)


_FLAT_CACHE: dict = {}


def _flat_bucket_index(lead: int, n_rows: int, n_cols: int, n_buckets: int, idx: np.ndarray) -> np.ndarray:
    key = (lead, n_rows, n_cols, n_buckets, idx.tobytes())
    hit = _FLAT_CACHE.get(key)
    if hit is not None:
        return hit
    if len(_FLAT_CACHE) > 256:
        _FLAT_CACHE.clear()
    base = (np.arange(lead)[:, None, None] * n_rows + np.arange(n_rows)[None, :, None]) * n_buckets
    flat = (base + idx[None, :, :]).reshape(-1)
    _FLAT_CACHE[key] = flat
    return flat


def bucket_gather(x: Tensor, idx: np.ndarray) -> Tensor:
    """``out[..., a, b] = x[..., a, idx[a, b]]`` for a constant integer table ``idx``."""
    n_rows, n_buckets = x.shape[-2:]
    if idx.shape[0] != n_rows:
        raise DimensionError(f"bucket table has {idx.shape[0]} rows, input has {n_rows}")
    lead_shape = x.shape[:-2]
    lead = int(np.prod(lead_shape, dtype=np.int64))
    n_cols = idx.shape[1]
    flat = _flat_bucket_index(lead, n_rows, n_cols, n_buckets, idx)
    out = x.data.reshape(-1)[flat].reshape(lead_shape + (n_rows, n_cols))

    def backward(g):
        gx = np.bincount(flat, weights=g.reshape(-1), minlength=lead * n_rows * n_buckets)
        return (gx.astype(x.dtype, copy=False).reshape(x.shape),)

    return _make(out, (x,), backward)


def bucket_scatter(a: Tensor, idx: np.ndarray, n_buckets: int) -> Tensor:
    """``out[..., r, k] = sum_b a[..., r, b] * [idx[r, b] == k]``; adjoint of :func:`bucket_gather`."""
    n_rows, n_cols = a.shape[-2:]
    if idx.shape != (n_rows, n_cols):
        raise DimensionError(f"bucket table shape {idx.shape} != {(n_rows, n_cols)}")
    lead_shape = a.shape[:-2]
    lead = int(np.prod(lead_shape, dtype=np.int64))
    flat = _flat_bucket_index(lead, n_rows, n_cols, n_buckets, idx)
    out = np.bincount(flat, weights=a.data.reshape(-1), minlength=lead * n_rows * n_buckets)
    out = out.astype(a.dtype, copy=False).reshape(lead_shape + (n_rows, n_buckets))

    def backward(g):
        return (g.reshape(-1)[flat].reshape(a.shape),)

    return _make(out, (a,), backward)


def linear(x: Tensor, w: Tensor, b: Tensor | None = None) -> Tensor:
    """``x @ w (+ b)`` with ``w`` stored as (in, out)."""
    y = x @ w
    return y if b is None else y + b


__all__ = [
    "L2_EPS",
    "LAYER_NORM_EPS",
    "as_tensor",
    "bucket_gather",
    "bucket_scatter",
    "conv2d",
    "l2_normalize",
    "layer_norm",
    "linear",
    "log_softmax_rows",
    "softmax_rows",
    "unbroadcast",
]
