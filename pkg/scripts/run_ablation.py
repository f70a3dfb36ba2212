#!/usr/bin/env python3
"""Attention ablation on the synthetic desk dataset: train the desk preset
with dual attention at groups 4+5 and with no attention, over several seeds,
and print the mean best validation top-1 for each arm.

Example:
    python scripts/run_ablation.py --out runs/ablation --epochs 30 --seeds 0 1 2
"""

import argparse
from pathlib import Path

import numpy as np

from fpdanet.data import SynthSpec, split_manifest, synth_generate
from fpdanet.model import desk_config
from fpdanet.trainer import TrainConfig, train


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="runs/ablation")
    ap.add_argument("--per-class", type=int, default=13)
    ap.add_argument("--epochs", type=int, default=30)
    ap.add_argument("--batch-size", type=int, default=32)
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--data-seed", type=int, default=7)
    args = ap.parse_args()

    out = Path(args.out)
    spec = SynthSpec(per_class=args.per_class, image_size=64,
                     seed=args.data_seed)
    _, manifest = synth_generate(spec, out_dir=out / "data")
    manifest = split_manifest(manifest, seed=args.data_seed)

    arms = {"attention_g4_g5": ("g4", "g5"), "no_attention": ()}
    means = {}
    for name, sites in arms.items():
        vals = []
        for seed in args.seeds:
            cfg = TrainConfig(batch_size=args.batch_size, epochs=args.epochs,
                              seed=seed, out_dir=str(out / name / str(seed)))
            _, history = train(cfg, manifest,
                               desk_config(attention_sites=sites))
            best = max(r.val_top1 for r in history.records)
            vals.append(best)
            print(f"arm={name} seed={seed} best_val_top1={best:.4f}")
        means[name] = float(np.mean(vals))
    for name, mean in means.items():
        print(f"arm={name} mean_best_val_top1={mean:.4f}")


if __name__ == "__main__":
    main()
