from __future__ import annotations

from typing import Sequence

import numpy as np

from dsvpr.dsformer.config import DsFormerConfig
from dsvpr.dsformer.layers import (
    Descriptor,
    descriptor_head,
    encoder_block,
    gem_pool,
    project_and_patchify,
    toy_backbone,
)
from dsvpr.dsformer.weights import DsFormerWeights
from dsvpr.errors import ConfigurationError
from dsvpr.numerics import Tensor, as_tensor, no_grad


def dsformer_forward(image, weights: DsFormerWeights, config: DsFormerConfig | None = None) -> Tensor:
    """Image(s) (3,S,S) or (B,3,S,S) -> unit descriptor(s) (D,) or (B,D)."""
    config = config or weights.config
    if config != weights.config:
        raise ConfigurationError("weights were built for a different config")
    image = as_tensor(image, dtype=weights["head.w"].dtype)
    f1, f2 = toy_backbone(image, weights)
    z1 = project_and_patchify(f1, weights["proj.1.w"], weights["pos.1"])
    z2 = project_and_patchify(f2, weights["proj.2.w"], weights["pos.2"])
    for layer in range(config.num_layers):
        z1, z2 = encoder_block(z1, z2, weights, layer, config)
    g1 = gem_pool(z1.tokens, weights["gem.p.1"])
    g2 = gem_pool(z2.tokens, weights["gem.p.2"])
    return descriptor_head(g1, g2, weights["head.w"])


def embed_images(
    images: np.ndarray,
    weights: DsFormerWeights,
    ids: Sequence[str] | None = None,
    batch_size: int = 32,
) -> list[Descriptor]:
    """Inference without graph recording; returns one Descriptor per image."""
    images = np.asarray(images)
    if images.ndim == 3:
        images = images[None]
    ids = list(ids) if ids is not None else [str(i) for i in range(len(images))]
    out: list[Descriptor] = []
    with no_grad():
        for start in range(0, len(images), batch_size):
            desc = dsformer_forward(images[start : start + batch_size], weights).data
            for j, row in enumerate(desc):
                out.append(Descriptor(np.array(row, dtype=np.float64), ids[start + j]))
    return out
