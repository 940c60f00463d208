"""Desk-scale ablation of the encoder components on synthetic places.

Every configuration trains from the same seed on jittered views of K
distant places (one class per place) and is scored by Recall@N of
held-out query views against a held-out database, with 25 m geo ground
truth.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from dsvpr.dsformer import DsFormerConfig, DsFormerWeights, embed_images
from dsvpr.retrieval import DbEntry, GroundTruth, build_db, recall_at_n
from dsvpr.synthetic import Jitter, WorldTexture, place_locations, render_views, separable_places
from dsvpr.training import GroupData, TrainConfig, Trainer

ABLATIONS: dict[str, dict] = {
    "zero-layer": {"num_layers": 0},
    "no-IRPE": {"use_irpe": False},
    "no-SE": {"use_self_encoder": False},
    "no-CE": {"use_cross_encoder": False},
    "3-layer": {},
}


@dataclass(frozen=True)
class AblationSetup:
    places: int = 8
    train_views: int = 64
    db_views: int = 4
    query_views: int = 20
    side: int = 32
    embed_dim: int = 32
    num_heads: int = 4
    descriptor_dim: int = 64
    epochs: int = 24
    iterations: int = 40
    batch_size: int = 16
    lr_model: float = 3e-4
    jitter: Jitter = field(default_factory=lambda: Jitter(position=2.0, heading=10.0))
    seed: int = 0

    def model_config(self, **overrides) -> DsFormerConfig:
        base = dict(num_layers=3, num_heads=self.num_heads, embed_dim=self.embed_dim,
                    descriptor_dim=self.descriptor_dim, input_side=self.side)
        return DsFormerConfig(**{**base, **overrides})


@dataclass
class AblationResult:
    name: str
    recall: dict[int, float]
    final_loss: float
    seconds: float


def _db(images, locs, weights, tag):
    desc = embed_images(images, weights)
    return build_db(
        DbEntry(f"{tag}{i:04d}", d.values / np.linalg.norm(d.values), loc.xy)
        for i, (d, loc) in enumerate(zip(desc, locs))
    )


def run_ablation(setup: AblationSetup = AblationSetup(), names=tuple(ABLATIONS), ns=(1, 5)) -> list[AblationResult]:
    s = setup
    imgs, labels, _ = separable_places(s.places, s.train_views, side=s.side, seed=s.seed, jitter=s.jitter)
    world = WorldTexture(s.seed)
    places = place_locations(s.places)
    db_locs, q_locs = places * s.db_views, places * s.query_views
    db_imgs = render_views(world, db_locs, s.side, seed=s.seed + 50, jitter=s.jitter)
    q_imgs = render_views(world, q_locs, s.side, seed=s.seed + 77, jitter=s.jitter)
    group = GroupData((1, "road"), [imgs[labels == k] for k in range(s.places)])
    gt = GroundTruth("geo", 25.0)

    out = []
    for name in names:
        t0 = time.perf_counter()
        weights = DsFormerWeights.init(s.model_config(**ABLATIONS[name]), seed=s.seed, dtype=np.float32)
        cfg = TrainConfig(lr_model=s.lr_model, batch_size=s.batch_size, iterations_per_epoch=s.iterations,
                          epochs=s.epochs, seed=s.seed)
        history = Trainer(weights, [group], cfg).fit()
        rep = recall_at_n(_db(db_imgs, db_locs, weights, "d"), _db(q_imgs, q_locs, weights, "q"), gt, ns)
        out.append(AblationResult(name, dict(zip(rep.ns, rep.recalls)),
                                  history[-1].mean_loss if history else float("nan"),
                                  time.perf_counter() - t0))
    return out
