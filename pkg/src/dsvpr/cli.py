"""``dsvpr`` command line: synth, partition, train, embed, eval."""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from dsvpr.clustering import (
    PartitionConfig,
    build_partition,
    load_partition,
    read_manifest,
    resolve_image_path,
    write_partition,
)
from dsvpr.dsformer import DsFormerConfig, DsFormerWeights, embed_images
from dsvpr.errors import ConfigurationError, DataError, DsvprError
from dsvpr.retrieval import DbEntry, GroundTruth, build_db, load_db, persist_db, recall_at_n
from dsvpr.synthetic import load_image, street_segment, manhattan_grid, write_dataset
from dsvpr.training import (
    GroupData,
    LmclConfig,
    TrainConfig,
    Trainer,
    load_checkpoint,
    loss_csv_path,
    save_checkpoint,
    write_loss_csv,
)

log = logging.getLogger("dsvpr")


@dataclass
class RunConfig:
    command: str
    inputs: dict[str, Path]
    outputs: dict[str, Path]
    seed: int = 0
    log_level: str = "WARNING"
    overrides: dict = field(default_factory=dict)

    def check_inputs(self) -> None:
        for role, path in self.inputs.items():
            if not path.exists():
                raise ConfigurationError(f"--{role} path {path} does not exist")


def _run_config(args: argparse.Namespace, inputs: Sequence[str], outputs: Sequence[str]) -> RunConfig:
    rc = RunConfig(
        command=args.command,
        inputs={k: Path(getattr(args, k)) for k in inputs if getattr(args, k) is not None},
        outputs={k: Path(getattr(args, k)) for k in outputs if getattr(args, k) is not None},
        seed=getattr(args, "seed", 0),
        log_level=args.log_level,
    )
    rc.check_inputs()
    for path in rc.outputs.values():
        path.parent.mkdir(parents=True, exist_ok=True)
    return rc


# --------------------------------------------------------------------- synth
def _synthetic_locations(kind: str, seed: int, size: float):
    if kind == "grid":
        return manhattan_grid(extent=size, seed=seed)
    if kind == "street":
        return street_segment(length=size, seed=seed)
    raise ConfigurationError(f"unknown synthetic kind {kind!r}")


def write_synthetic(out_dir: Path, kind: str, seed: int, size: float, side: int, query_every: int = 5) -> tuple[Path, Path]:
    """Database manifest plus a query manifest re-rendered with fresh jitter at every ``query_every``-th location."""
    locs = _synthetic_locations(kind, seed, size)
    db = write_dataset(out_dir, locs, "db", side=side, seed=seed, world_seed=seed)
    queries = write_dataset(out_dir, locs[::query_every], "queries", side=side, seed=seed + 1000, world_seed=seed)
    return db, queries


def cmd_synth(args) -> int:
    _run_config(args, [], [])
    db, queries = write_synthetic(Path(args.out), args.kind, args.seed, args.size, args.side, args.query_every)
    print(f"wrote {db} and {queries}")
    return 0


# ----------------------------------------------------------------- partition
def cmd_partition(args) -> int:
    if args.meta is None and args.synthetic is None:
        raise ConfigurationError("partition needs --meta or --synthetic")
    rc = _run_config(args, ["meta"], ["out"])
    if args.synthetic is not None:
        meta, _ = write_synthetic(rc.outputs["out"].parent / "synthetic", args.synthetic, args.seed, args.size, args.side)
    else:
        meta = rc.inputs["meta"]
    cfg = PartitionConfig(
        block_width=args.block_width,
        groups_per_direction=args.groups,
        retain_radius=args.radius,
        min_separation=args.min_sep,
        focal_distance=args.focal,
        min_cluster_size=args.min_cluster_size,
        orientation_half_angle=args.half_angle,
        seed=args.seed,
    )
    entries = read_manifest(meta)
    part = build_partition([e.location for e in entries], cfg)
    write_partition(rc.outputs["out"], part, meta)
    s = part.stats
    for axis in ("east", "north"):
        a = s[axis]
        print(f"{axis}: groups {a['group_sizes']} clustered {a['clustered']} noise {a['noise']} "
              f"classes {a['classes_found']} -> {a['classes_after_prune']} after prune")
    print(f"merge: {s['merge']['classes_before']} -> {s['merge']['classes_after']} classes")
    print(f"final classes {s['final_classes']}, retained {s['retained_locations']}/{s['input_locations']} "
          f"locations (fraction {s['retained_fraction']:.4f})")
    return 0


# --------------------------------------------------------------------- train
def _load_images(manifest: Path, ids: set[str]) -> dict[str, np.ndarray]:
    out = {}
    for e in read_manifest(manifest):
        if e.id in ids:
            out[e.id] = _decode(resolve_image_path(manifest, e), e.id)
    missing = ids - set(out)
    if missing:
        raise DataError(f"partition references ids absent from the manifest: {sorted(missing)[:5]}")
    return out


def _decode(path: Path, rid: str) -> np.ndarray:
    try:
        return load_image(path)
    except (OSError, ValueError) as exc:
        raise DataError(f"cannot decode image for id {rid!r} at {path}: {exc}") from None


def cmd_train(args) -> int:
    rc = _run_config(args, ["partition"], ["out"])
    part = load_partition(rc.inputs["partition"])
    if part.manifest is None or not part.manifest.exists():
        raise ConfigurationError(f"partition manifest {part.manifest} not found")
    wanted = {i for g in part.groups for imgs in g.images for i in imgs}
    images = _load_images(part.manifest, wanted)
    side = next(iter(images.values())).shape[-1] if images else args.side
    model_cfg = DsFormerConfig(
        num_layers=args.layers,
        num_heads=args.heads,
        embed_dim=args.dim,
        descriptor_dim=args.descriptor_dim,
        input_side=side,
        use_irpe=not args.no_irpe,
        use_self_encoder=not args.no_se,
        use_cross_encoder=not args.no_ce,
    )
    train_cfg = TrainConfig(
        lr_model=args.lr_model,
        lr_classifier=args.lr_classifier,
        batch_size=args.batch,
        iterations_per_epoch=args.iters,
        epochs=args.epochs,
        seed=args.seed,
        dtype=args.dtype,
    )
    lmcl = LmclConfig(scale=args.lmcl_scale, margin=args.lmcl_margin)
    groups = []
    for g in part.groups:
        kept = [(cid, ids) for cid, ids in zip(g.class_ids, g.images) if ids]
        groups.append(GroupData(
            g.key,
            [np.stack([images[i] for i in ids]) for _, ids in kept],
            [cid for cid, _ in kept],
        ))
    weights = DsFormerWeights.init(model_cfg, seed=args.seed, dtype=train_cfg.np_dtype)
    trainer = Trainer(weights, groups, train_cfg, lmcl)
    history = trainer.fit()
    out = rc.outputs["out"]
    save_checkpoint(out, weights, train_cfg, lmcl, history, epoch=trainer.epoch)
    write_loss_csv(loss_csv_path(out), history)
    for m in history:
        print(f"epoch {m.epoch} group {m.group[0]}/{m.group[1]}: loss {m.mean_loss:.4f} acc {m.accuracy:.3f}")
    if history:
        for gi, g in enumerate(trainer.groups):
            print(f"final accuracy group {g.key[0]}/{g.key[1]}: {trainer.accuracy(gi):.4f}")
    print(f"wrote {out}")
    return 0


# --------------------------------------------------------------------- embed
def cmd_embed(args) -> int:
    rc = _run_config(args, ["ckpt", "meta"], ["out"])
    weights, _ = load_checkpoint(rc.inputs["ckpt"], dtype=np.float32)
    entries = read_manifest(rc.inputs["meta"])
    side = weights.config.input_side
    imgs = np.empty((len(entries), 3, side, side), dtype=np.float32)
    for i, e in enumerate(entries):
        img = _decode(resolve_image_path(rc.inputs["meta"], e), e.id)
        if img.shape != (3, side, side):
            raise DataError(f"image for id {e.id!r} has shape {img.shape}, checkpoint expects (3, {side}, {side})")
        imgs[i] = img
    descs = embed_images(imgs, weights, [e.id for e in entries], batch_size=args.batch)
    db = build_db(
        DbEntry(e.id, d.values / np.linalg.norm(d.values), e.location.xy, e.location.frame_index)
        for e, d in zip(entries, descs)
    )
    persist_db(db, rc.outputs["out"])
    print(f"wrote {len(db)} descriptors of dim {db.dim} to {rc.outputs['out']}")
    return 0


# ---------------------------------------------------------------------- eval
def _parse_topk(text: str) -> list[int]:
    try:
        ns = [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad --topk {text!r}") from None
    if not ns or min(ns) < 1:
        raise argparse.ArgumentTypeError("--topk values must be positive integers")
    return ns


def cmd_eval(args) -> int:
    rc = _run_config(args, ["db", "queries"], ["report"])
    db = load_db(rc.inputs["db"])
    queries = load_db(rc.inputs["queries"])
    report = recall_at_n(db, queries, GroundTruth.parse(args.gt), args.topk)
    out = rc.outputs["report"]
    out.write_text(json.dumps(report.as_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    csv_out = Path(args.csv) if args.csv else out.with_suffix(".csv")
    with open(csv_out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["N", "recall"])
        for n, r in zip(report.ns, report.recalls):
            w.writerow([n, repr(r)])
    for n, r in zip(report.ns, report.recalls):
        print(f"R@{n} = {r:.4f}")
    return 0


# -------------------------------------------------------------------- parser
def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="dsvpr", description=__doc__)
    p.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("synth", help="render a synthetic geo-tagged dataset")
    s.add_argument("--kind", choices=["grid", "street"], default="grid")
    s.add_argument("--out", required=True)
    s.add_argument("--size", type=float, default=200.0, help="grid extent or street length in meters")
    s.add_argument("--side", type=int, default=64)
    s.add_argument("--query-every", type=int, default=5)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("partition", help="block-cluster a manifest into 2N training groups")
    s.add_argument("--meta")
    s.add_argument("--synthetic", choices=["grid", "street"])
    s.add_argument("--size", type=float, default=200.0, help="synthetic extent in meters")
    s.add_argument("--side", type=int, default=64, help="synthetic image side")
    s.add_argument("--out", required=True)
    s.add_argument("--block-width", type=float, default=10.0)
    s.add_argument("--groups", type=int, default=5)
    s.add_argument("--radius", type=float, default=7.5)
    s.add_argument("--min-sep", type=float, default=40.0)
    s.add_argument("--focal", type=float, default=15.0)
    s.add_argument("--min-cluster-size", type=int, default=10)
    s.add_argument("--half-angle", type=float, default=45.0)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_partition)

    s = sub.add_parser("train", help="group-cycled LMCL training")
    s.add_argument("--partition", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--layers", type=int, default=3)
    s.add_argument("--heads", type=int, default=16)
    s.add_argument("--dim", type=int, default=128)
    s.add_argument("--descriptor-dim", type=int, default=512)
    s.add_argument("--side", type=int, default=64)
    s.add_argument("--no-irpe", action="store_true")
    s.add_argument("--no-se", action="store_true")
    s.add_argument("--no-ce", action="store_true")
    s.add_argument("--epochs", type=int, default=2)
    s.add_argument("--iters", type=int, default=50)
    s.add_argument("--batch", type=int, default=32)
    s.add_argument("--lr-model", type=float, default=1e-5)
    s.add_argument("--lr-classifier", type=float, default=1e-2)
    s.add_argument("--lmcl-scale", type=float, default=30.0)
    s.add_argument("--lmcl-margin", type=float, default=0.4)
    s.add_argument("--dtype", choices=["float32", "float64"], default="float32")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("embed", help="compute descriptors for a manifest")
    s.add_argument("--ckpt", required=True)
    s.add_argument("--meta", required=True)
    s.add_argument("--out", required=True)
    s.add_argument("--batch", type=int, default=32)
    s.set_defaults(func=cmd_embed)

    s = sub.add_parser("eval", help="Recall@N of queries against a database")
    s.add_argument("--db", required=True)
    s.add_argument("--queries", required=True)
    s.add_argument("--gt", default="geo:25")
    s.add_argument("--topk", type=_parse_topk, default=[1, 5, 10])
    s.add_argument("--report", required=True)
    s.add_argument("--csv")
    s.set_defaults(func=cmd_eval)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except DsvprError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
