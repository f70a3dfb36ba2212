"""Batch-size-adaptive learning-rate bounds and stepwise decay.

The bound rule scales the initial rates by batch_size / nbs (nbs = nominal
batch size, 64) and clamps into fixed limits.  An alternative rule that
places the initial rate inside the denominator yields rates near 100 for
every realistic batch size; it is kept behind the literal_rule flag for
comparison and the scaling rule is the default.
"""

from dataclasses import dataclass

from .errors import InputError


@dataclass
class LRScheduleConfig:
    lr_max_init: float = 0.01
    lr_min_init: float = 0.0001
    lr_max_lim: float = 0.001
    lr_min_lim: float = 0.0001
    nbs: int = 64
    total_epochs: int = 200
    decay_factor: float = 0.1
    # Fractions of total_epochs at which the rate is multiplied by decay_factor.
    decay_milestones: tuple[float, ...] = (0.6, 0.85)
    literal_rule: bool = False

    def __post_init__(self):
        if not (0 < self.lr_min_init <= self.lr_max_init):
            raise InputError("need 0 < lr_min_init <= lr_max_init")
        if not (0 < self.lr_min_lim <= self.lr_max_lim):
            raise InputError("need 0 < lr_min_lim <= lr_max_lim")
        if self.nbs < 1:
            raise InputError(f"nbs must be >= 1, got {self.nbs}")


@dataclass
class LRBounds:
    lr_max: float
    lr_min: float


def compute_lr_bounds(cfg: LRScheduleConfig, batch_size: int) -> LRBounds:
    if batch_size < 1:
        raise InputError(f"batch_size must be >= 1, got {batch_size}")
    if cfg.literal_rule:
        mid_max = max(batch_size / (cfg.nbs * cfg.lr_max_init), cfg.lr_min_lim)
        mid_min = max(batch_size / (cfg.nbs * cfg.lr_min_init), cfg.lr_min_lim / 100)
    else:
        mid_max = max((batch_size / cfg.nbs) * cfg.lr_max_init, cfg.lr_min_lim)
        mid_min = max((batch_size / cfg.nbs) * cfg.lr_min_init, cfg.lr_min_lim / 100)
    lr_max = min(mid_max, cfg.lr_max_lim)
    lr_min = min(mid_min, cfg.lr_max_lim / 100)
    return LRBounds(lr_max=lr_max, lr_min=lr_min)


def lr_at_epoch(bounds: LRBounds, cfg: LRScheduleConfig, epoch: int) -> float:
    """Step decay: lr_max times decay_factor per passed milestone, floored at lr_min."""
    if not 0 <= epoch < cfg.total_epochs:
        raise InputError(
            f"epoch {epoch} outside [0, {cfg.total_epochs})"
        )
    passed = sum(
        1 for frac in cfg.decay_milestones
        if epoch >= int(frac * cfg.total_epochs)
    )
    lr = bounds.lr_max * cfg.decay_factor ** passed
    # Schedules are specified as short decimals; drop accumulated float dust
    # so decayed rates compare exactly against hand-evaluated values.
    lr = float(f"{lr:.12g}")
    return max(lr, bounds.lr_min)


def lr_table(cfg: LRScheduleConfig, batch_size: int):
    """(epoch, lr) rows for the whole schedule, as dumped by the CLI."""
    bounds = compute_lr_bounds(cfg, batch_size)
    return [(e, lr_at_epoch(bounds, cfg, e)) for e in range(cfg.total_epochs)]
