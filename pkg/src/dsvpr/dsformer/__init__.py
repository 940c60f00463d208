from dsvpr.dsformer.config import DsFormerConfig
from dsvpr.dsformer.layers import (
    Descriptor,
    FeatureMap,
    TokenSequence,
    descriptor_head,
    encoder_block,
    feed_forward,
    gem_pool,
    mhca_shared,
    mhsa_irpe,
    project_and_patchify,
    rpe_buckets,
    toy_backbone,
)
from dsvpr.dsformer.model import dsformer_forward, embed_images
from dsvpr.dsformer.weights import AttentionWeights, BlockWeights, DsFormerWeights, parameter_shapes

__all__ = [
    "AttentionWeights",
    "BlockWeights",
    "Descriptor",
    "DsFormerConfig",
    "DsFormerWeights",
    "FeatureMap",
    "TokenSequence",
    "descriptor_head",
    "dsformer_forward",
    "embed_images",
    "encoder_block",
    "feed_forward",
    "gem_pool",
    "mhca_shared",
    "mhsa_irpe",
    "parameter_shapes",
    "project_and_patchify",
    "rpe_buckets",
    "toy_backbone",
]
