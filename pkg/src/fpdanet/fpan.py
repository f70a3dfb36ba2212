"""Bilateral multi-scale fusion and the classification head.

A deep-to-shallow pass (nearest-neighbor upsampling) spreads semantics
downward, then a shallow-to-deep pass (stride-2 convs) returns detail
upward.  3x3 smoothing convs after every resample suppress aliasing.
The head global-average-pools all three fused levels, concatenates, and
maps linearly to class logits.
"""

from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

from .backbone import ConvBN
from .errors import ConfigError, ShapeError


@dataclass
class FpanConfig:
    fused_width: int = 256
    num_classes: int = 21
    head_dropout: float = 0.2

    def __post_init__(self):
        if self.fused_width < 1:
            raise ConfigError(f"fused_width must be >= 1, got {self.fused_width}")
        if self.num_classes < 2:
            raise ConfigError(f"num_classes must be >= 2, got {self.num_classes}")
        if not 0.0 <= self.head_dropout < 1.0:
            raise ConfigError(f"head_dropout must be in [0, 1), got {self.head_dropout}")


def _check_ratio(name_hi, hi, name_lo, lo):
    if hi.shape[-2] != 2 * lo.shape[-2] or hi.shape[-1] != 2 * lo.shape[-1]:
        raise ShapeError(
            f"{name_hi} {tuple(hi.shape[-2:])} is not 2x the spatial size of "
            f"{name_lo} {tuple(lo.shape[-2:])}"
        )


class Fpan(nn.Module):
    def __init__(self, in_widths, cfg: FpanConfig):
        super().__init__()
        self.cfg = cfg
        w = cfg.fused_width
        c3, c4, c5 = in_widths
        self.lateral_3 = ConvBN(c3, w, 1)
        self.lateral_4 = ConvBN(c4, w, 1)
        self.lateral_5 = ConvBN(c5, w, 1)
        self.smooth_td_3 = ConvBN(w, w, 3, padding=1)
        self.smooth_td_4 = ConvBN(w, w, 3, padding=1)
        self.down_3 = ConvBN(w, w, 3, stride=2, padding=1)
        self.down_4 = ConvBN(w, w, 3, stride=2, padding=1)
        self.smooth_bu_4 = ConvBN(w, w, 3, padding=1)
        self.smooth_bu_5 = ConvBN(w, w, 3, padding=1)

    def top_down(self, c3, c4, c5):
        _check_ratio("c3", c3, "c4", c4)
        _check_ratio("c4", c4, "c5", c5)
        p5 = self.lateral_5(c5)
        up5 = F.interpolate(p5, scale_factor=2, mode="nearest")
        p4 = F.relu(self.smooth_td_4(self.lateral_4(c4) + up5))
        up4 = F.interpolate(p4, scale_factor=2, mode="nearest")
        p3 = F.relu(self.smooth_td_3(self.lateral_3(c3) + up4))
        return p3, p4, p5

    def bottom_up(self, p3, p4, p5):
        n3 = p3
        d3 = self.down_3(n3)
        if d3.shape[-2:] != p4.shape[-2:]:
            raise ShapeError(
                f"down(n3) {tuple(d3.shape[-2:])} does not match p4 "
                f"{tuple(p4.shape[-2:])}"
            )
        n4 = F.relu(self.smooth_bu_4(p4 + d3))
        d4 = self.down_4(n4)
        if d4.shape[-2:] != p5.shape[-2:]:
            raise ShapeError(
                f"down(n4) {tuple(d4.shape[-2:])} does not match p5 "
                f"{tuple(p5.shape[-2:])}"
            )
        n5 = F.relu(self.smooth_bu_5(p5 + d4))
        return n3, n4, n5

    def forward(self, pyramid):
        c3, c4, c5 = pyramid
        return self.bottom_up(*self.top_down(c3, c4, c5))


class ClassifierHead(nn.Module):
    """Pool each fused level, concatenate, dropout, linear to logits."""

    def __init__(self, cfg: FpanConfig):
        super().__init__()
        self.dropout = nn.Dropout(cfg.head_dropout)
        self.linear = nn.Linear(3 * cfg.fused_width, cfg.num_classes)

    def forward(self, n3, n4, n5):
        pooled = [x.mean(dim=(-2, -1)) for x in (n3, n4, n5)]
        feat = torch.cat(pooled, dim=-1)
        return self.linear(self.dropout(feat))
