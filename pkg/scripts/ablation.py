"""Train every encoder ablation on synthetic places and print held-out Recall@N.

    python3 scripts/ablation.py --seeds 0,1,2 --out ablation.json
"""

import argparse
import json
from dataclasses import asdict, replace

from dsvpr.experiments import ABLATIONS, AblationSetup, run_ablation


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", default="0")
    ap.add_argument("--configs", default=",".join(ABLATIONS))
    ap.add_argument("--epochs", type=int, default=AblationSetup.epochs)
    ap.add_argument("--lr-model", type=float, default=AblationSetup.lr_model)
    ap.add_argument("--train-views", type=int, default=AblationSetup.train_views)
    ap.add_argument("--out")
    args = ap.parse_args()

    rows = []
    for seed in (int(s) for s in args.seeds.split(",")):
        setup = replace(AblationSetup(), seed=seed, epochs=args.epochs, lr_model=args.lr_model,
                        train_views=args.train_views)
        for r in run_ablation(setup, names=args.configs.split(",")):
            print(f"seed {seed} {r.name:>10}: R@1 {r.recall[1]:.4f} R@5 {r.recall[5]:.4f} "
                  f"final loss {r.final_loss:.3f} ({r.seconds:.0f}s)", flush=True)
            rows.append({"seed": seed, **asdict(r)})
    if args.out:
        with open(args.out, "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
