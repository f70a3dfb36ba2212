"""Training and evaluation loops: cross-entropy objective, AdamW stepping,
per-epoch learning rate from the schedule module, history logging, and
best-validation checkpoint retention.

Determinism contract: with a fixed seed and single-threaded execution, two
runs produce bitwise-identical histories and checkpoints.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
import torchvision.transforms.functional as TF

from . import data as data_mod
from .data import DatasetManifest, PreprocessStats, compute_split_stats, preprocess
from .errors import ConfigError, InputError, TrainingDivergedError
from .metrics import EvalReport, compute_report
from .model import (FPDANet, ModelConfig, build_model, load_checkpoint,
                    save_checkpoint)
from .schedule import LRScheduleConfig, compute_lr_bounds, lr_at_epoch

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    batch_size: int = 32
    epochs: int = 200
    seed: int = 0
    schedule: LRScheduleConfig = field(default_factory=LRScheduleConfig)
    betas: tuple[float, float] = (0.9, 0.999)
    weight_decay: float = 0.01
    grad_clip: float | None = None
    augment: bool = True
    eval_every: int = 1
    out_dir: str = "runs/default"
    num_threads: int = 1

    def __post_init__(self):
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.epochs != self.schedule.total_epochs:
            # Keep the decay milestones anchored to the actual run length.
            self.schedule = LRScheduleConfig(
                **{**self.schedule.__dict__, "total_epochs": self.epochs}
            )


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    train_top1: float
    val_top1: float
    val_top5: float
    lr: float


@dataclass
class TrainHistory:
    records: list[EpochRecord] = field(default_factory=list)

    def save_csv(self, path):
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["epoch", "train_loss", "train_top1",
                        "val_top1", "val_top5", "lr"])
            for r in self.records:
                w.writerow([r.epoch, repr(r.train_loss), repr(r.train_top1),
                            repr(r.val_top1), repr(r.val_top5), repr(r.lr)])


def cross_entropy_loss(logits: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """Mean of -log softmax(logits)[label], stabilized by max subtraction."""
    if labels.numel() and (labels.min() < 0 or labels.max() >= logits.shape[1]):
        raise InputError(
            f"labels must be in [0, {logits.shape[1]})"
        )
    shifted = logits - logits.max(dim=1, keepdim=True).values
    log_z = shifted.exp().sum(dim=1).log()
    picked = shifted.gather(1, labels.view(-1, 1)).squeeze(1)
    return (log_z - picked).mean()


def load_split_tensors(manifest: DatasetManifest, split: str, input_size,
                       stats: PreprocessStats):
    recs = manifest.by_split(split)
    if not recs:
        raise InputError(f"split {split!r} is empty")
    xs = np.stack([preprocess(r.path, input_size, stats) for r in recs])
    ys = np.array([r.label for r in recs], dtype=np.int64)
    return torch.from_numpy(xs), torch.from_numpy(ys)


def augment_batch(x: torch.Tensor, gen: torch.Generator) -> torch.Tensor:
    """Per-sample horizontal flip and small rotation (train split only)."""
    flip = torch.rand(x.shape[0], generator=gen) < 0.5
    angles = (torch.rand(x.shape[0], generator=gen) * 20.0) - 10.0
    out = x.clone()
    for i in range(x.shape[0]):
        img = out[i]
        if flip[i]:
            img = torch.flip(img, dims=[-1])
        img = TF.rotate(img.unsqueeze(0), float(angles[i]),
                        interpolation=TF.InterpolationMode.BILINEAR).squeeze(0)
        out[i] = img
    return out


@torch.no_grad()
def _eval_logits(model: FPDANet, x: torch.Tensor, batch_size: int = 64):
    model.eval()
    outs = []
    for i in range(0, x.shape[0], batch_size):
        outs.append(model(x[i:i + batch_size]))
    return torch.cat(outs)


def evaluate_model(model: FPDANet, x: torch.Tensor, y: torch.Tensor) -> EvalReport:
    logits = _eval_logits(model, x)
    return compute_report(logits.numpy(), y.numpy(),
                          num_classes=model.cfg.fpan.num_classes)


def evaluate(checkpoint_path, manifest: DatasetManifest, split: str,
             input_size=None) -> EvalReport:
    """Eval-mode pass over a split of the manifest using a saved checkpoint."""
    model, cfg, extras = load_checkpoint(checkpoint_path)
    stats = PreprocessStats(**extras["preprocess_stats"]) \
        if "preprocess_stats" in extras else PreprocessStats()
    x, y = load_split_tensors(manifest, split, input_size or cfg.input_size, stats)
    report = evaluate_model(model, x, y)
    if report.absent_classes:
        log.warning("classes absent from %s split: %s", split,
                    [data_mod.ABBREVIATIONS[c] for c in report.absent_classes])
    return report


def train(cfg: TrainConfig, manifest: DatasetManifest, model_cfg: ModelConfig):
    """Run the full loop; returns (best checkpoint path, TrainHistory).

    Writes best.ckpt, last.ckpt and history.csv under cfg.out_dir.
    """
    if cfg.num_threads:
        torch.set_num_threads(cfg.num_threads)
    # Dropout draws from the global RNG; pin it so runs are reproducible.
    torch.manual_seed(cfg.seed)
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    stats = compute_split_stats(manifest, model_cfg.input_size, "train")
    x_train, y_train = load_split_tensors(
        manifest, "train", model_cfg.input_size, stats)
    x_val, y_val = load_split_tensors(manifest, "val", model_cfg.input_size, stats)

    model = build_model(model_cfg, cfg.seed)
    bounds = compute_lr_bounds(cfg.schedule, cfg.batch_size)
    opt = torch.optim.AdamW(model.parameters(), lr=bounds.lr_max,
                            betas=cfg.betas, weight_decay=cfg.weight_decay)
    gen = torch.Generator().manual_seed(cfg.seed)
    extras = {"preprocess_stats": {"mean": list(stats.mean),
                                   "std": list(stats.std)}}
    history = TrainHistory()
    best_top1 = -1.0
    best_path = out_dir / "best.ckpt"
    n = x_train.shape[0]

    for epoch in range(cfg.epochs):
        lr = lr_at_epoch(bounds, cfg.schedule, epoch)
        for group in opt.param_groups:
            group["lr"] = lr
        model.train()
        perm = torch.randperm(n, generator=gen)
        epoch_loss = 0.0
        epoch_hits = 0
        for b, start in enumerate(range(0, n, cfg.batch_size)):
            idx = perm[start:start + cfg.batch_size]
            xb, yb = x_train[idx], y_train[idx]
            if cfg.augment:
                xb = augment_batch(xb, gen)
            logits = model(xb)
            loss = cross_entropy_loss(logits, yb)
            if not torch.isfinite(loss):
                raise TrainingDivergedError(epoch, b, lr)
            opt.zero_grad()
            loss.backward()
            if cfg.grad_clip is not None:
                torch.nn.utils.clip_grad_norm_(model.parameters(), cfg.grad_clip)
            opt.step()
            epoch_loss += float(loss.detach()) * len(idx)
            epoch_hits += int((logits.argmax(dim=1) == yb).sum())

        train_loss = epoch_loss / n
        train_top1 = epoch_hits / n
        if epoch % cfg.eval_every == 0 or epoch == cfg.epochs - 1:
            report = evaluate_model(model, x_val, y_val)
            val_top1, val_top5 = report.top1, report.top5
            if val_top1 > best_top1:
                best_top1 = val_top1
                save_checkpoint(model, best_path, extras)
        else:
            val_top1 = val_top5 = math.nan
        history.records.append(EpochRecord(
            epoch, train_loss, train_top1, val_top1, val_top5, lr))
        log.info("epoch=%d loss=%.4f train_top1=%.4f val_top1=%s lr=%g",
                 epoch, train_loss, train_top1, val_top1, lr)

    save_checkpoint(model, out_dir / "last.ckpt", extras)
    history.save_csv(out_dir / "history.csv")
    return best_path, history
