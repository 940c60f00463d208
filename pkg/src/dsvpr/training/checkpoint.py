"""Checkpoint = DSWT weight container plus a JSON sidecar at ``<path>.json``."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict
from pathlib import Path
from typing import Sequence

import numpy as np

from dsvpr.dsformer import DsFormerConfig, DsFormerWeights
from dsvpr.errors import DataError
from dsvpr.numerics import load_weights, save_weights
from dsvpr.training.lmcl import LmclConfig
from dsvpr.training.loop import EpochMetrics, TrainConfig


def sidecar_path(path: str | Path) -> Path:
    return Path(str(path) + ".json")


def loss_csv_path(path: str | Path) -> Path:
    return Path(str(path) + ".loss.csv")


def save_checkpoint(
    path: str | Path,
    weights: DsFormerWeights,
    train_cfg: TrainConfig | None = None,
    lmcl: LmclConfig | None = None,
    history: Sequence[EpochMetrics] = (),
    epoch: int = 0,
) -> None:
    save_weights(path, weights.to_arrays())
    meta = {
        "config": weights.config.to_dict(),
        "train": asdict(train_cfg) if train_cfg is not None else None,
        "lmcl": asdict(lmcl) if lmcl is not None else None,
        "epoch": epoch,
        "seed": train_cfg.seed if train_cfg is not None else None,
        "history": [m.to_dict() for m in history],
    }
    sidecar_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def write_loss_csv(path: str | Path, history: Sequence[EpochMetrics]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["epoch", "iteration", "group_index", "direction", "loss"])
        for m in history:
            for it, loss in enumerate(m.losses):
                w.writerow([m.epoch, it, m.group[0], m.group[1], repr(loss)])


def load_checkpoint(path: str | Path, dtype=np.float64) -> tuple[DsFormerWeights, dict]:
    side = sidecar_path(path)
    if not side.exists():
        raise DataError(f"checkpoint sidecar {side} not found")
    meta = json.loads(side.read_text(encoding="utf-8"))
    cfg = DsFormerConfig.from_dict(meta["config"])
    return DsFormerWeights.from_arrays(cfg, load_weights(path), dtype=dtype), meta
