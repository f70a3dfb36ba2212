"""Command-line entry point.

Verbs: synth, train, eval, predict, lr-dump, report.  Every verb is a thin
wrapper over the library; progress lines are key=value pairs.  Configs are
JSON files (FPDANET_CONFIG sets a default path) and any dataclass field can
be overridden with --set dotted.key=value.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import is_dataclass
from pathlib import Path

import numpy as np
import torch

from . import data as data_mod
from . import metrics as metrics_mod
from .data import (DatasetManifest, PreprocessStats, SynthSpec, preprocess,
                   scan_dataset, split_manifest, synth_generate)
from .errors import FpdanetError, InputError
from .model import ModelConfig, desk_config, full_config, load_checkpoint
from .schedule import LRScheduleConfig, lr_table
from .trainer import TrainConfig, evaluate, train

PRESETS = {"full": full_config, "desk": desk_config}


def _coerce(value: str, current):
    if isinstance(current, bool):
        return value.lower() in ("1", "true", "yes")
    if isinstance(current, int):
        return int(value)
    if isinstance(current, float):
        return float(value)
    if isinstance(current, (tuple, list)):
        parts = value.split(",")
        elem = current[0] if len(current) else value
        return type(current)(_coerce(p, elem) for p in parts)
    return value


def apply_overrides(obj, overrides: list[str]):
    for item in overrides:
        if "=" not in item:
            raise InputError(f"override {item!r} is not key=value")
        key, value = item.split("=", 1)
        target = obj
        parts = key.split(".")
        for part in parts[:-1]:
            if not hasattr(target, part):
                raise InputError(f"unknown config key {key!r}")
            target = getattr(target, part)
        leaf = parts[-1]
        if not is_dataclass(target) or not hasattr(target, leaf):
            raise InputError(f"unknown config key {key!r}")
        setattr(target, leaf, _coerce(value, getattr(target, leaf)))
    return obj


def _load_json_config(path):
    with open(path) as f:
        return json.load(f)


def _model_config(args) -> ModelConfig:
    if getattr(args, "config", None):
        raw = _load_json_config(args.config)
        if "model" in raw:
            cfg = ModelConfig.from_dict(raw["model"])
        else:
            cfg = PRESETS[raw.get("preset", "desk")]()
    else:
        cfg = PRESETS[args.preset]()
    return cfg


def cmd_synth(args) -> int:
    spec = SynthSpec(per_class=args.per_class, image_size=args.size,
                     noise_level=args.noise, seed=args.seed,
                     num_classes=args.classes)
    out = Path(args.out)
    _, manifest = synth_generate(spec, out_dir=out)
    manifest = split_manifest(manifest, seed=args.seed)
    manifest.save(out / "manifest.tsv")
    print(f"verb=synth images={len(manifest.records)} "
          f"classes={spec.num_classes} out={out}")
    return 0


def _load_manifest(args) -> DatasetManifest:
    if args.manifest:
        return DatasetManifest.load(args.manifest)
    manifest = scan_dataset(args.data)
    return split_manifest(manifest, seed=args.seed)


def cmd_train(args) -> int:
    model_cfg = _model_config(args)
    cfg = TrainConfig(batch_size=args.batch_size, epochs=args.epochs,
                      seed=args.seed, out_dir=args.out)
    for item in args.set:
        if item.startswith("model."):
            apply_overrides(model_cfg, [item.split("model.", 1)[1]])
        elif item.startswith("train."):
            apply_overrides(cfg, [item.split("train.", 1)[1]])
        else:
            raise InputError(
                f"override {item!r} must start with model. or train."
            )
    manifest = _load_manifest(args)
    best, history = train(cfg, manifest, model_cfg)
    last = history.records[-1]
    print(f"verb=train epochs={cfg.epochs} "
          f"final_train_top1={last.train_top1:.4f} "
          f"final_val_top1={last.val_top1:.4f} best_checkpoint={best}")
    return 0


def cmd_eval(args) -> int:
    manifest = _load_manifest(args)
    report = evaluate(args.checkpoint, manifest, args.split)
    if args.out:
        with open(args.out, "w") as f:
            json.dump(report.to_dict(), f, indent=2)
    print(f"verb=eval split={args.split} top1={report.top1:.4f} "
          f"top5={report.top5:.4f} mean_fnr={report.mean_fnr:.4f} "
          f"n={report.n_samples}")
    return 0


def predict(checkpoint, image, top_k: int):
    """Ranked (abbreviation, softmax score) pairs for one image."""
    model, cfg, extras = load_checkpoint(checkpoint)
    stats = PreprocessStats(**extras["preprocess_stats"]) \
        if "preprocess_stats" in extras else PreprocessStats()
    arr = preprocess(image, cfg.input_size, stats)
    model.eval()
    with torch.no_grad():
        logits = model(torch.from_numpy(arr).unsqueeze(0))[0].numpy()
    scores = np.exp(logits - logits.max())
    scores = scores / scores.sum()
    order = metrics_mod.rank_classes(logits)[:top_k]
    return [(data_mod.ABBREVIATIONS[i], float(scores[i])) for i in order]


def cmd_predict(args) -> int:
    for abbrev, score in predict(args.checkpoint, args.image, args.top):
        print(f"class={abbrev} score={score:.6f}")
    return 0


def cmd_lr_dump(args) -> int:
    cfg = LRScheduleConfig()
    apply_overrides(cfg, args.set)
    rows = lr_table(cfg, args.batch_size)
    lines = ["epoch,lr"] + [f"{e},{lr!r}" for e, lr in rows]
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_report(args) -> int:
    with open(args.report) as f:
        report = metrics_mod.EvalReport.from_dict(json.load(f))
    out = metrics_mod.emit_report(report, args.format, args.out)
    if not args.out:
        sys.stdout.write(out)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fpdanet",
        description="Fetal ultrasound standard-plane classifier",
    )
    sub = parser.add_subparsers(dest="verb", required=True)

    p = sub.add_parser("synth", help="generate the synthetic dataset")
    p.add_argument("--classes", type=int, default=data_mod.NUM_CLASSES)
    p.add_argument("--per-class", type=int, default=10)
    p.add_argument("--size", type=int, default=64)
    p.add_argument("--noise", type=float, default=0.35)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    def add_data_args(p):
        p.add_argument("--manifest", default=None)
        p.add_argument("--data", default=None, help="dataset root to scan")
        p.add_argument("--seed", type=int, default=0)

    p = sub.add_parser("train", help="train a model")
    add_data_args(p)
    p.add_argument("--config", default=os.environ.get("FPDANET_CONFIG"))
    p.add_argument("--preset", choices=sorted(PRESETS), default="desk")
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--epochs", type=int, default=200)
    p.add_argument("--out", default="runs/default")
    p.add_argument("--set", action="append", default=[],
                   help="override, e.g. model.fpan.fused_width=64")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    add_data_args(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", choices=("train", "val", "test"), default="test")
    p.add_argument("--out", default=None, help="write report JSON here")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("predict", help="classify one image")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--image", required=True)
    p.add_argument("--top", type=int, default=5)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("lr-dump", help="dump the (epoch, lr) schedule as CSV")
    p.add_argument("--batch-size", type=int, required=True)
    p.add_argument("--out", default=None)
    p.add_argument("--set", action="append", default=[])
    p.set_defaults(func=cmd_lr_dump)

    p = sub.add_parser("report", help="render a saved report JSON")
    p.add_argument("--report", required=True)
    p.add_argument("--format", choices=("text", "csv", "svg"), default="text")
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_report)

    return parser


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return e.code if e.code is not None else 0
    try:
        return args.func(args)
    except FpdanetError as e:
        print(f"error={type(e).__name__} detail={e}", file=sys.stderr)
        return 1
    except OSError as e:
        print(f"error=OSError detail={e}", file=sys.stderr)
        return 1


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
