"""Building blocks: toy backbone, patch embedding, IRPE self-attention,
shared cross-attention, encoder block, GeM pooling and the descriptor head.

All ops accept an optional leading batch axis.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from dsvpr.dsformer.config import DsFormerConfig
from dsvpr.dsformer.weights import AttentionWeights, BlockWeights, DsFormerWeights
from dsvpr.errors import DimensionError, ParameterError
from dsvpr.numerics import (
    Tensor,
    bucket_gather,
    bucket_scatter,
    clamp_min,
    concat,
    conv2d,
    exp,
    gelu,
    l2_normalize,
    layer_norm,
    log,
    softmax_rows,
)

GEM_EPS = 1e-6


@dataclass
class FeatureMap:
    values: Tensor  # (C, H, W) or (B, C, H, W)

    @property
    def channels(self) -> int:
        return self.values.shape[-3]

    @property
    def height(self) -> int:
        return self.values.shape[-2]

    @property
    def width(self) -> int:
        return self.values.shape[-1]


@dataclass
class TokenSequence:
    tokens: Tensor  # (N, C) or (B, N, C)
    grid: tuple[int, int]

    def __post_init__(self):
        h, w = self.grid
        if self.tokens.shape[-2] != h * w:
            raise DimensionError(f"{self.tokens.shape[-2]} tokens do not fill a {h}x{w} grid")

    @property
    def length(self) -> int:
        return self.tokens.shape[-2]


@dataclass
class Descriptor:
    values: np.ndarray
    id: str = ""


# ------------------------------------------------------------------- backbone
def toy_backbone(image: Tensor, weights: DsFormerWeights) -> tuple[FeatureMap, FeatureMap]:
    """Four stride-2 3x3 convolutions with GELU; taps after the 3rd (stride 8) and 4th (stride 16)."""
    single = image.ndim == 3
    x = image.reshape((1,) + image.shape) if single else image
    if x.ndim != 4 or x.shape[1] != 3:
        raise DimensionError(f"expected a 3-channel image, got shape {image.shape}")
    side_h, side_w = x.shape[-2:]
    if side_h % 16 or side_w % 16:
        raise DimensionError(f"image side {side_h}x{side_w} is not divisible by 16")
    taps = []
    for i in range(4):
        x = gelu(conv2d(x, weights[f"backbone.conv{i}.w"], weights[f"backbone.conv{i}.b"], stride=2, padding=1))
        taps.append(x)
    f1, f2 = taps[2], taps[3]
    if single:
        f1 = f1.reshape(f1.shape[1:])
        f2 = f2.reshape(f2.shape[1:])
    return FeatureMap(f1), FeatureMap(f2)


def project_and_patchify(f: FeatureMap, w_in: Tensor, e_pos: Tensor) -> TokenSequence:
    """Raster-flatten (row-major, top-left first), project channels, add positional table."""
    v = f.values
    c, h, w = v.shape[-3:]
    if e_pos.shape[0] != h * w:
        raise DimensionError(f"positional table has {e_pos.shape[0]} rows, map has {h * w} cells")
    if w_in.shape[0] != c:
        raise DimensionError(f"projection expects {w_in.shape[0]} channels, map has {c}")
    lead = v.shape[:-3]
    flat = v.reshape(lead + (c, h * w))
    axes = tuple(range(len(lead))) + (len(lead) + 1, len(lead))
    tokens = flat.transpose(axes) @ w_in + e_pos
    return TokenSequence(tokens, (h, w))


# ------------------------------------------------------------------ attention
@lru_cache(maxsize=64)
def rpe_buckets(grid: tuple[int, int], clip: int) -> np.ndarray:
    """(N, N) table of bucket ids for clipped 2-D offsets ``pos(a) - pos(b)``."""
    h, w = grid
    rows, cols = np.divmod(np.arange(h * w), w)
    dr = np.clip(rows[:, None] - rows[None, :], -clip, clip) + clip
    dc = np.clip(cols[:, None] - cols[None, :], -clip, clip) + clip
    idx = dr * (2 * clip + 1) + dc
    idx.setflags(write=False)
    return idx


def _split_heads(x: Tensor, heads: int) -> Tensor:
    *lead, n, c = x.shape
    y = x.reshape(tuple(lead) + (n, heads, c // heads))
    k = len(lead)
    return y.transpose(tuple(range(k)) + (k + 1, k, k + 2))


def _merge_heads(x: Tensor) -> Tensor:
    *lead, h, n, d = x.shape
    k = len(lead)
    y = x.transpose(tuple(range(k)) + (k + 1, k, k + 2))
    return y.reshape(tuple(lead) + (n, h * d))


def _swap_last(x: Tensor) -> Tensor:
    return x.swapaxes(-1, -2)


def mhsa_irpe(
    z: TokenSequence,
    weights: AttentionWeights,
    num_heads: int,
    use_irpe: bool = True,
    clip: int = 7,
) -> Tensor:
    """Multi-head self-attention with contextual relative-position terms.

    logits_ab = <q_a, k_b>/sqrt(d) + <q_a, T_q[r(a,b)]> + <k_b, T_k[r(a,b)]>,
    out_a = sum_b A_ab (v_b + T_v[r(a,b)]), heads concatenated then projected.
    """
    x = z.tokens
    c = x.shape[-1]
    if c % num_heads:
        raise DimensionError(f"embed dim {c} not divisible by {num_heads} heads")
    d = c // num_heads
    q = _split_heads(x @ weights.wq, num_heads)
    k = _split_heads(x @ weights.wk, num_heads)
    v = _split_heads(x @ weights.wv, num_heads)
    logits = (q @ _swap_last(k)) * (1.0 / np.sqrt(d))
    rpe = use_irpe and weights.rpe_q is not None
    if rpe:
        idx = rpe_buckets(tuple(z.grid), clip)
        n_buckets = (2 * clip + 1) ** 2
        if weights.rpe_q.shape[0] != n_buckets:
            raise DimensionError(f"RPE table has {weights.rpe_q.shape[0]} rows, clip {clip} needs {n_buckets}")
        logits = logits + bucket_gather(q @ _swap_last(weights.rpe_q), idx)
        logits = logits + _swap_last(bucket_gather(k @ _swap_last(weights.rpe_k), np.ascontiguousarray(idx.T)))
    attn = softmax_rows(logits)
    out = attn @ v
    if rpe:
        out = out + bucket_scatter(attn, idx, n_buckets) @ weights.rpe_v
    return _merge_heads(out) @ weights.wo


def _cross(query: Tensor, memory: Tensor, weights: AttentionWeights, heads: int) -> Tensor:
    d = query.shape[-1] // heads
    q = _split_heads(query @ weights.wq, heads)
    k = _split_heads(memory @ weights.wk, heads)
    v = _split_heads(memory @ weights.wv, heads)
    attn = softmax_rows((q @ _swap_last(k)) * (1.0 / np.sqrt(d)))
    return _merge_heads(attn @ v) @ weights.wo


def mhca_shared(
    z1: TokenSequence, z2: TokenSequence, weights: AttentionWeights, num_heads: int
) -> tuple[Tensor, Tensor]:
    """Bidirectional cross-attention with one projection set: (q1 vs k2,v2), (q2 vs k1,v1)."""
    c1, c2 = z1.tokens.shape[-1], z2.tokens.shape[-1]
    if c1 != c2 or weights.wq.shape[0] != c1:
        raise DimensionError(f"cross-attention dims disagree: {c1}, {c2}, weights {weights.wq.shape[0]}")
    if c1 % num_heads:
        raise DimensionError(f"embed dim {c1} not divisible by {num_heads} heads")
    return (
        _cross(z1.tokens, z2.tokens, weights, num_heads),
        _cross(z2.tokens, z1.tokens, weights, num_heads),
    )


def feed_forward(x: Tensor, bw: BlockWeights) -> Tensor:
    return gelu(x @ bw.ffn_w1 + bw.ffn_b1) @ bw.ffn_w2 + bw.ffn_b2


def _ffn_sublayer(x: Tensor, bw: BlockWeights) -> Tensor:
    return feed_forward(layer_norm(x, bw.ln2_g, bw.ln2_b), bw) + x


def encoder_block(
    z1: TokenSequence,
    z2: TokenSequence,
    weights: DsFormerWeights,
    layer: int,
    config: DsFormerConfig,
) -> tuple[TokenSequence, TokenSequence]:
    """Pre-norm self-encoder per stream, then the shared cross-encoder."""
    h = config.num_heads
    a, b = z1.tokens, z2.tokens
    if config.use_self_encoder:
        streams = []
        for seq, s in ((z1, 1), (z2, 2)):
            bw = weights.block(f"layer.{layer}.self.{s}")
            x = seq.tokens
            normed = TokenSequence(layer_norm(x, bw.ln1_g, bw.ln1_b), seq.grid)
            x = mhsa_irpe(normed, bw.attn, h, config.use_irpe, config.rpe_clip) + x
            streams.append(_ffn_sublayer(x, bw))
        a, b = streams
    if config.use_cross_encoder:
        bw = weights.block(f"layer.{layer}.cross")
        n1 = TokenSequence(layer_norm(a, bw.ln1_g, bw.ln1_b), z1.grid)
        n2 = TokenSequence(layer_norm(b, bw.ln1_g, bw.ln1_b), z2.grid)
        c1, c2 = mhca_shared(n1, n2, bw.attn, h)
        a = _ffn_sublayer(c1 + a, bw)
        b = _ffn_sublayer(c2 + b, bw)
    return TokenSequence(a, z1.grid), TokenSequence(b, z2.grid)


# ----------------------------------------------------------------- aggregation
def gem_pool(tokens: Tensor, p: Tensor, eps: float = GEM_EPS) -> Tensor:
    """Generalized mean over the token axis: (mean_a max(x_a, eps)^p)^(1/p)."""
    if tokens.shape[-2] < 1:
        raise DimensionError("gem_pool needs at least one token")
    if np.any(np.asarray(p.data) <= 0):
        raise ParameterError(f"GeM exponent must be positive, got {np.asarray(p.data).ravel()}")
    powered = exp(log(clamp_min(tokens, eps)) * p)
    return exp(log(powered.mean(axis=-2)) / p)


def descriptor_head(g1: Tensor, g2: Tensor, w_head: Tensor) -> Tensor:
    """L2-normalized linear map of the concatenated stream summaries."""
    fused = concat([g1, g2], axis=-1)
    if w_head.shape[0] != fused.shape[-1]:
        raise DimensionError(f"head expects {w_head.shape[0]} inputs, got {fused.shape[-1]}")
    if fused.ndim == 1:
        return l2_normalize((fused.reshape(1, -1) @ w_head).reshape(-1))
    return l2_normalize(fused @ w_head)
