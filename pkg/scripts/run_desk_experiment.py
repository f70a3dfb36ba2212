#!/usr/bin/env python3
"""End-to-end desk-scale experiment: generate the synthetic dataset, train
the desk preset, then evaluate the best checkpoint on the test split.

Example:
    python scripts/run_desk_experiment.py --out runs/desk --epochs 80
"""

import argparse
from pathlib import Path

from fpdanet.data import SynthSpec, split_manifest, synth_generate
from fpdanet.metrics import report_to_text
from fpdanet.model import desk_config
from fpdanet.trainer import TrainConfig, evaluate, train


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="runs/desk")
    ap.add_argument("--per-class", type=int, default=13)
    ap.add_argument("--epochs", type=int, default=80)
    ap.add_argument("--batch-size", type=int, default=32)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    out = Path(args.out)
    data_dir = out / "data"
    spec = SynthSpec(per_class=args.per_class, image_size=64, seed=args.seed)
    _, manifest = synth_generate(spec, out_dir=data_dir)
    manifest = split_manifest(manifest, seed=args.seed)
    manifest.save(data_dir / "manifest.tsv")
    print(f"dataset images={len(manifest.records)} dir={data_dir}")

    cfg = TrainConfig(batch_size=args.batch_size, epochs=args.epochs,
                      seed=args.seed, out_dir=str(out / "train"))
    best, history = train(cfg, manifest, desk_config())
    top = max(r.val_top1 for r in history.records)
    print(f"train done best_val_top1={top:.4f} checkpoint={best}")

    report = evaluate(best, manifest, "test")
    print(report_to_text(report))


if __name__ == "__main__":
    main()
