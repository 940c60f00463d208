"""Group-cycled LMCL training.

Each epoch trains on one of the 2N partition groups with that group's own
cosine classifier; the next epoch moves to the next usable group. A batch
slot picks a class uniformly at random, then one of its images.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from dsvpr.dsformer import DsFormerWeights, dsformer_forward
from dsvpr.errors import ConfigurationError
from dsvpr.numerics import Tensor, no_grad
from dsvpr.training.lmcl import ClassifierWeights, LmclConfig, class_cosines, lmcl_loss
from dsvpr.training.optim import Adam

log = logging.getLogger(__name__)

_DTYPES = {"float32": np.float32, "float64": np.float64}


@dataclass(frozen=True)
class TrainConfig:
    lr_model: float = 1e-5
    lr_classifier: float = 1e-2
    batch_size: int = 32
    iterations_per_epoch: int = 50
    epochs: int = 2
    seed: int = 0
    augment: bool = True
    dtype: str = "float32"

    def __post_init__(self):
        if self.lr_model < 0 or self.lr_classifier < 0:
            raise ConfigurationError("learning rates must be non-negative")
        if self.batch_size < 1 or self.iterations_per_epoch < 1:
            raise ConfigurationError("batch_size and iterations_per_epoch must be >= 1")
        if self.epochs < 0:
            raise ConfigurationError("epochs must be >= 0")
        if self.dtype not in _DTYPES:
            raise ConfigurationError(f"dtype must be one of {sorted(_DTYPES)}")

    @property
    def np_dtype(self):
        return _DTYPES[self.dtype]


@dataclass
class GroupData:
    """Training images of one group: ``images[k]`` is an (n_k, 3, S, S) array for class k."""

    key: tuple[int, str]
    images: list[np.ndarray]
    class_ids: list[str] = field(default_factory=list)

    @property
    def num_classes(self) -> int:
        return len(self.images)

    @property
    def usable(self) -> bool:
        return self.num_classes >= 2 and all(len(x) > 0 for x in self.images)


@dataclass
class EpochMetrics:
    epoch: int
    group: tuple[int, str]
    mean_loss: float
    accuracy: float
    losses: list[float]

    def to_dict(self) -> dict:
        d = asdict(self)
        d["group"] = list(self.group)
        return d


def _augment(batch: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Per-channel affine colour noise, the stand-in for colour jitter."""
    b = batch.shape[0]
    gain = 1.0 + rng.uniform(-0.1, 0.1, size=(b, 3, 1, 1))
    bias = rng.uniform(-0.05, 0.05, size=(b, 3, 1, 1))
    return np.clip(batch * gain + bias, 0.0, 1.0).astype(batch.dtype)


def sample_batch(group: GroupData, batch_size: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    labels = rng.integers(group.num_classes, size=batch_size)
    picks = [group.images[k][rng.integers(len(group.images[k]))] for k in labels]
    return np.stack(picks), labels


def train_step(
    weights: DsFormerWeights,
    classifier: Tensor,
    images: np.ndarray,
    labels: np.ndarray,
    lmcl: LmclConfig,
    opt_model: Adam,
    opt_cls: Adam,
) -> tuple[float, float]:
    opt_model.zero_grad()
    opt_cls.zero_grad()
    desc = dsformer_forward(images, weights)
    loss = lmcl_loss(desc, labels, classifier, lmcl)
    loss.backward()
    correct = np.argmax(class_cosines(desc.detach(), classifier.detach()).data, axis=1) == labels
    if opt_model.lr > 0:
        opt_model.step()
    opt_cls.step()
    classifier.data = classifier.data / np.linalg.norm(classifier.data, axis=1, keepdims=True)
    return float(loss.data), float(correct.mean())


class Trainer:
    def __init__(
        self,
        weights: DsFormerWeights,
        groups: Sequence[GroupData],
        cfg: TrainConfig = TrainConfig(),
        lmcl: LmclConfig = LmclConfig(),
    ):
        usable = [g for g in groups if g.usable]
        for g in groups:
            if not g.usable:
                log.warning("skipping group %s: %d classes", g.key, g.num_classes)
        if not usable:
            raise ConfigurationError("partition has no group with >= 2 non-empty classes")
        self.cfg = cfg
        self.lmcl = lmcl
        self.weights = weights
        self.groups = [
            GroupData(g.key, [np.asarray(x, dtype=cfg.np_dtype) for x in g.images], list(g.class_ids))
            for g in usable
        ]
        self.classifiers = ClassifierWeights.init(
            {i: g.num_classes for i, g in enumerate(self.groups)},
            weights.config.descriptor_dim,
            seed=cfg.seed,
            dtype=cfg.np_dtype,
        )
        self.opt_model = Adam(dict(weights.items()), cfg.lr_model)
        self.opt_cls = {i: Adam({"w": self.classifiers[i]}, cfg.lr_classifier) for i in range(len(self.groups))}
        self.rng = np.random.default_rng(cfg.seed)
        self.epoch = 0
        self.history: list[EpochMetrics] = []

    def train_epoch(self, group_index: int | None = None) -> EpochMetrics:
        gi = self.epoch % len(self.groups) if group_index is None else group_index
        group = self.groups[gi]
        losses, accs = [], []
        for _ in range(self.cfg.iterations_per_epoch):
            images, labels = sample_batch(group, self.cfg.batch_size, self.rng)
            if self.cfg.augment:
                images = _augment(images, self.rng)
            loss, acc = train_step(
                self.weights, self.classifiers[gi], images, labels, self.lmcl, self.opt_model, self.opt_cls[gi]
            )
            losses.append(loss)
            accs.append(acc)
        m = EpochMetrics(self.epoch, group.key, float(np.mean(losses)), float(np.mean(accs)), losses)
        self.history.append(m)
        self.epoch += 1
        log.info("epoch %d group %s loss %.4f acc %.3f", m.epoch, m.group, m.mean_loss, m.accuracy)
        return m

    def fit(self, epochs: int | None = None) -> list[EpochMetrics]:
        for _ in range(self.cfg.epochs if epochs is None else epochs):
            self.train_epoch()
        return self.history

    def accuracy(self, group_index: int, batch_size: int = 64) -> float:
        """Classification accuracy of every image in a group under the current weights."""
        group = self.groups[group_index]
        w = self.classifiers[group_index].data
        hits = total = 0
        with no_grad():
            for k, imgs in enumerate(group.images):
                for s in range(0, len(imgs), batch_size):
                    d = dsformer_forward(imgs[s : s + batch_size], self.weights).data
                    hits += int(np.sum(np.argmax(d @ w.T, axis=1) == k))
                    total += len(d)
        return hits / total
