"""Learnable parameters of the model, keyed by canonical container names.

Naming scheme (streams are ``1`` = stride 8, ``2`` = stride 16)::

    backbone.conv{i}.w / .b             i = 0..3
    proj.{s}.w                          (C_s, C)
    pos.{s}                             (N_s, C)
    layer.{l}.self.{s}.<block>          per-stream self-encoder
    layer.{l}.cross.<block>             one set, used by both directions
    gem.p.{s}                           (1,)
    head.w                              (2C, D)

``<block>`` is ``ln1.g ln1.b wq wk wv wo ln2.g ln2.b ffn.w1 ffn.b1 ffn.w2 ffn.b2``
plus ``rpe.q rpe.k rpe.v`` ((2*clip+1)^2, C/h) on self-encoders when IRPE is on.
Matrices are stored (in, out) so that layers compute ``x @ w``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Mapping

import numpy as np

from dsvpr.dsformer.config import DsFormerConfig
from dsvpr.errors import ConfigurationError, DimensionError
from dsvpr.numerics import Tensor

STREAMS = (1, 2)


def parameter_shapes(cfg: DsFormerConfig) -> dict[str, tuple[int, ...]]:
    """Ordered name -> shape map for every tensor this config owns."""
    c = cfg.embed_dim
    c1, c2 = cfg.backbone_channels
    s0, s1 = cfg.stem_channels
    hidden = cfg.ffn_ratio * c
    buckets = (2 * cfg.rpe_clip + 1) ** 2
    (h1, w1), (h2, w2) = cfg.grids

    shapes: dict[str, tuple[int, ...]] = {}
    chans = [3, s0, s1, c1, c2]
    for i in range(4):
        shapes[f"backbone.conv{i}.w"] = (chans[i + 1], chans[i], 3, 3)
        shapes[f"backbone.conv{i}.b"] = (chans[i + 1],)
    shapes["proj.1.w"] = (c1, c)
    shapes["proj.2.w"] = (c2, c)
    shapes["pos.1"] = (h1 * w1, c)
    shapes["pos.2"] = (h2 * w2, c)

    def block(prefix: str, rpe: bool) -> None:
        shapes[f"{prefix}.ln1.g"] = (c,)
        shapes[f"{prefix}.ln1.b"] = (c,)
        for m in ("wq", "wk", "wv", "wo"):
            shapes[f"{prefix}.{m}"] = (c, c)
        if rpe:
            for m in ("q", "k", "v"):
                shapes[f"{prefix}.rpe.{m}"] = (buckets, cfg.head_dim)
        shapes[f"{prefix}.ln2.g"] = (c,)
        shapes[f"{prefix}.ln2.b"] = (c,)
        shapes[f"{prefix}.ffn.w1"] = (c, hidden)
        shapes[f"{prefix}.ffn.b1"] = (hidden,)
        shapes[f"{prefix}.ffn.w2"] = (hidden, c)
        shapes[f"{prefix}.ffn.b2"] = (c,)

    for layer in range(cfg.num_layers):
        if cfg.use_self_encoder:
            for s in STREAMS:
                block(f"layer.{layer}.self.{s}", cfg.use_irpe)
        if cfg.use_cross_encoder:
            block(f"layer.{layer}.cross", False)
    shapes["gem.p.1"] = (1,)
    shapes["gem.p.2"] = (1,)
    shapes["head.w"] = (2 * c, cfg.descriptor_dim)
    return shapes


def _fan_in(name: str, shape: tuple[int, ...]) -> int:
    if len(shape) == 4:
        return shape[1] * shape[2] * shape[3]
    return shape[0]


def _init_value(name: str, shape, cfg: DsFormerConfig, rng: np.random.Generator) -> np.ndarray:
    leaf = name.rsplit(".", 1)[-1]
    if name.startswith("gem.p"):
        return np.full(shape, cfg.gem_p_init)
    if name.startswith("pos.") or ".rpe." in name:
        return np.zeros(shape)
    if leaf == "g":
        return np.ones(shape)
    if leaf in ("b", "b1", "b2"):
        return np.zeros(shape)
    bound = 1.0 / np.sqrt(_fan_in(name, shape))
    return rng.uniform(-bound, bound, size=shape)


@dataclass
class AttentionWeights:
    wq: Tensor
    wk: Tensor
    wv: Tensor
    wo: Tensor
    rpe_q: Tensor | None = None
    rpe_k: Tensor | None = None
    rpe_v: Tensor | None = None


@dataclass
class BlockWeights:
    ln1_g: Tensor
    ln1_b: Tensor
    attn: AttentionWeights
    ln2_g: Tensor
    ln2_b: Tensor
    ffn_w1: Tensor
    ffn_b1: Tensor
    ffn_w2: Tensor
    ffn_b2: Tensor


class DsFormerWeights:
    """Ordered store of named parameter tensors for one :class:`DsFormerConfig`."""

    def __init__(self, config: DsFormerConfig, tensors: Mapping[str, Tensor]):
        expected = parameter_shapes(config)
        if list(expected) != list(tensors):
            missing = sorted(set(expected) - set(tensors))
            extra = sorted(set(tensors) - set(expected))
            raise ConfigurationError(f"weight names do not match config (missing={missing[:5]}, extra={extra[:5]})")
        for name, shape in expected.items():
            if tuple(tensors[name].shape) != shape:
                raise DimensionError(f"{name}: shape {tensors[name].shape} != expected {shape}")
        self.config = config
        self.tensors: dict[str, Tensor] = dict(tensors)

    @classmethod
    def init(cls, config: DsFormerConfig, seed: int = 0, dtype=np.float64) -> "DsFormerWeights":
        rng = np.random.default_rng(seed)
        tensors = {
            name: Tensor(_init_value(name, shape, config, rng), requires_grad=True, dtype=dtype, name=name)
            for name, shape in parameter_shapes(config).items()
        }
        return cls(config, tensors)

    @classmethod
    def from_arrays(cls, config: DsFormerConfig, arrays: Mapping[str, np.ndarray], dtype=np.float64) -> "DsFormerWeights":
        order = parameter_shapes(config)
        missing = [n for n in order if n not in arrays]
        if missing:
            raise ConfigurationError(f"weight container lacks tensors: {missing[:5]}")
        tensors = {n: Tensor(np.array(arrays[n], dtype=dtype), requires_grad=True, name=n) for n in order}
        return cls(config, tensors)

    def to_arrays(self) -> dict[str, np.ndarray]:
        return {n: t.data for n, t in self.tensors.items()}

    def copy(self, dtype=None) -> "DsFormerWeights":
        return DsFormerWeights(
            self.config,
            {
                n: Tensor(np.array(t.data, dtype=dtype or t.dtype), requires_grad=True, name=n)
                for n, t in self.tensors.items()
            },
        )

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def __iter__(self) -> Iterator[str]:
        return iter(self.tensors)

    def __len__(self) -> int:
        return len(self.tensors)

    def items(self):
        return self.tensors.items()

    def num_parameters(self, prefix: str = "") -> int:
        return sum(t.size for n, t in self.tensors.items() if n.startswith(prefix))

    def zero_grad(self) -> None:
        for t in self.tensors.values():
            t.zero_grad()

    def block(self, prefix: str) -> BlockWeights:
        t = self.tensors
        rpe = f"{prefix}.rpe.q" in t
        attn = AttentionWeights(
            t[f"{prefix}.wq"],
            t[f"{prefix}.wk"],
            t[f"{prefix}.wv"],
            t[f"{prefix}.wo"],
            t[f"{prefix}.rpe.q"] if rpe else None,
            t[f"{prefix}.rpe.k"] if rpe else None,
            t[f"{prefix}.rpe.v"] if rpe else None,
        )
        return BlockWeights(
            t[f"{prefix}.ln1.g"],
            t[f"{prefix}.ln1.b"],
            attn,
            t[f"{prefix}.ln2.g"],
            t[f"{prefix}.ln2.b"],
            t[f"{prefix}.ffn.w1"],
            t[f"{prefix}.ffn.b1"],
            t[f"{prefix}.ffn.w2"],
            t[f"{prefix}.ffn.b2"],
        )
