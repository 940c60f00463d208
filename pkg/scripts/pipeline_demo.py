"""End-to-end run on synthetic data: render, partition, train, embed, evaluate.

    python3 scripts/pipeline_demo.py --work /tmp/dsvpr-demo
"""

import argparse
from pathlib import Path

from dsvpr.cli import main as dsvpr


def step(*argv):
    argv = [str(a) for a in argv]
    print("$ dsvpr", " ".join(argv), flush=True)
    if dsvpr(argv) != 0:
        raise SystemExit(f"step failed: {argv[0]}")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--work", default="dsvpr-demo")
    ap.add_argument("--size", type=float, default=300.0, help="grid extent in meters")
    ap.add_argument("--side", type=int, default=32)
    ap.add_argument("--epochs", type=int, default=10)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    work = Path(args.work)

    step("synth", "--kind", "grid", "--size", args.size, "--side", args.side, "--seed", args.seed, "--out", work)
    step("partition", "--meta", work / "db.csv", "--seed", args.seed, "--out", work / "partition.json")
    step("train", "--partition", work / "partition.json", "--out", work / "model.dswt",
         "--layers", 2, "--heads", 4, "--dim", 32, "--descriptor-dim", 64, "--side", args.side,
         "--epochs", args.epochs, "--iters", 20, "--batch", 16, "--lr-model", 1e-3, "--seed", args.seed)
    for name in ("db", "queries"):
        step("embed", "--ckpt", work / "model.dswt", "--meta", work / f"{name}.csv", "--out", work / f"{name}.dsfv")
    step("eval", "--db", work / "db.dsfv", "--queries", work / "queries.dsfv", "--gt", "geo:25",
         "--topk", "1,5,10", "--report", work / "report.json")


if __name__ == "__main__":
    main()
