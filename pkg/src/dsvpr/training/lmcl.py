from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from dsvpr.errors import ConfigurationError, DimensionError
from dsvpr.numerics import Tensor, as_tensor, log_softmax_rows


@dataclass(frozen=True)
class LmclConfig:
    scale: float = 30.0
    margin: float = 0.40

    def __post_init__(self):
        if not self.scale > 0:
            raise ConfigurationError("LMCL scale must be positive")
        if not 0 <= self.margin < 1:
            raise ConfigurationError("LMCL margin must lie in [0, 1)")


def class_cosines(desc: Tensor, weights: Tensor) -> Tensor:
    """(B, D) x (K, D) -> (B, K) inner products; cosines when both sides are unit rows."""
    if desc.shape[-1] != weights.shape[-1]:
        raise DimensionError(f"descriptor dim {desc.shape[-1]} != classifier dim {weights.shape[-1]}")
    return desc @ weights.swapaxes(0, 1)


def lmcl_loss(desc, labels, weights: Tensor, cfg: LmclConfig = LmclConfig()) -> Tensor:
    """Mean large-margin cosine loss.

    Per sample: -log(e^{s(cos_y - m)} / (e^{s(cos_y - m)} + sum_{j != y} e^{s cos_j})).
    """
    desc = as_tensor(desc)
    if desc.ndim == 1:
        desc = desc.reshape(1, -1)
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    n_classes = weights.shape[0]
    if labels.shape[0] != desc.shape[0]:
        raise DimensionError(f"{labels.shape[0]} labels for {desc.shape[0]} descriptors")
    if np.any(labels < 0) or np.any(labels >= n_classes):
        raise IndexError(f"label out of range for {n_classes} classes: {labels.tolist()}")
    cos = class_cosines(desc, weights)
    onehot = np.zeros(cos.shape, dtype=cos.dtype)
    onehot[np.arange(len(labels)), labels] = 1.0
    logits = (cos - onehot * cfg.margin) * cfg.scale
    logp = log_softmax_rows(logits)
    picked = logp[np.arange(len(labels)), labels]
    return -picked.mean()


@dataclass
class ClassifierWeights:
    """One cosine classifier per training group; rows kept at unit norm."""

    matrices: dict[int, Tensor]

    @classmethod
    def init(cls, classes_per_group: dict[int, int], dim: int, seed: int = 0, dtype=np.float64) -> "ClassifierWeights":
        rng = np.random.default_rng(seed)
        mats = {}
        for g in sorted(classes_per_group):
            w = rng.normal(size=(classes_per_group[g], dim))
            w /= np.linalg.norm(w, axis=1, keepdims=True)
            mats[g] = Tensor(w, requires_grad=True, dtype=dtype, name=f"classifier.{g}")
        return cls(mats)

    def __getitem__(self, group: int) -> Tensor:
        return self.matrices[group]

    def renormalize(self, group: int | None = None) -> None:
        groups = self.matrices if group is None else [group]
        for g in groups:
            t = self.matrices[g]
            t.data = t.data / np.linalg.norm(t.data, axis=1, keepdims=True)
