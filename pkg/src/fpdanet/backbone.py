"""Residual backbone: a stem plus four bottleneck groups emitting a 3-level pyramid.

Group 1 is the stem (7x7 stride-2 conv + BN + ReLU + 3x3 stride-2 max pool).
Groups 2-5 are residual groups at strides 4/8/16/32, each one convolution
block followed by (depth - 1) identity blocks.  Outputs of groups 3, 4 and 5
form the feature pyramid (c3, c4, c5) consumed downstream.
"""

from collections import OrderedDict
from dataclasses import dataclass, field

import torch
import torch.nn.functional as F
from torch import nn

from .errors import ConfigError, InputError


@dataclass
class BackboneConfig:
    stem_channels: int = 64
    # Output widths of groups 2-5 (after bottleneck expansion).
    group_widths: tuple[int, int, int, int] = (256, 512, 1024, 2048)
    group_depths: tuple[int, int, int, int] = (3, 4, 6, 3)
    expansion: int = 4
    input_channels: int = 3

    def __post_init__(self):
        if len(self.group_widths) != 4 or len(self.group_depths) != 4:
            raise ConfigError("group_widths and group_depths must have 4 entries")
        for w in self.group_widths:
            if w % self.expansion != 0:
                raise ConfigError(
                    f"group width {w} not divisible by expansion {self.expansion}"
                )
        if any(d < 1 for d in self.group_depths):
            raise ConfigError("every group needs at least one block")


class ConvBN(nn.Module):
    """Convolution + batch norm pair; activation is applied by the caller."""

    def __init__(self, c_in, c_out, kernel_size, stride=1, padding=0):
        super().__init__()
        self.conv = nn.Conv2d(
            c_in, c_out, kernel_size, stride=stride, padding=padding, bias=False
        )
        self.bn = nn.BatchNorm2d(c_out)

    def forward(self, x):
        return self.bn(self.conv(x))


class ConvBlock(nn.Module):
    """Bottleneck block whose shortcut is a strided 1x1 conv (channel/spatial change)."""

    def __init__(self, c_in, c_mid, stride, expansion=4):
        super().__init__()
        if stride not in (1, 2):
            raise ConfigError(f"conv block stride must be 1 or 2, got {stride}")
        c_out = c_mid * expansion
        self.reduce_1x1 = ConvBN(c_in, c_mid, 1)
        self.conv_3x3 = ConvBN(c_mid, c_mid, 3, stride=stride, padding=1)
        self.expand_1x1 = ConvBN(c_mid, c_out, 1)
        self.shortcut_1x1 = ConvBN(c_in, c_out, 1, stride=stride)
        self.out_channels = c_out

    def forward(self, x):
        if x.shape[1] != self.reduce_1x1.conv.in_channels:
            raise ConfigError(
                f"conv block reduce_1x1 expects {self.reduce_1x1.conv.in_channels} "
                f"channels, got {x.shape[1]}"
            )
        h = F.relu(self.reduce_1x1(x))
        h = F.relu(self.conv_3x3(h))
        h = self.expand_1x1(h)
        s = self.shortcut_1x1(x)
        if h.shape != s.shape:
            raise ConfigError(
                f"conv block branch mismatch: main {tuple(h.shape)} vs "
                f"shortcut_1x1 {tuple(s.shape)}"
            )
        return F.relu(h + s)


class IdentityBlock(nn.Module):
    """Bottleneck block whose shortcut is the raw input; shape preserving."""

    def __init__(self, channels, c_mid, expansion=4):
        super().__init__()
        if c_mid * expansion != channels:
            raise ConfigError(
                f"identity block expand_1x1 width {c_mid * expansion} != "
                f"input width {channels}"
            )
        self.reduce_1x1 = ConvBN(channels, c_mid, 1)
        self.conv_3x3 = ConvBN(c_mid, c_mid, 3, stride=1, padding=1)
        self.expand_1x1 = ConvBN(c_mid, channels, 1)

    def forward(self, x):
        if x.shape[1] != self.expand_1x1.conv.out_channels:
            raise ConfigError(
                f"identity block expects {self.expand_1x1.conv.out_channels} "
                f"channels, got {x.shape[1]}"
            )
        h = F.relu(self.reduce_1x1(x))
        h = F.relu(self.conv_3x3(h))
        h = self.expand_1x1(h)
        return F.relu(h + x)


def _make_group(c_in, width, depth, stride, expansion):
    c_mid = width // expansion
    blocks = OrderedDict()
    blocks["block0"] = ConvBlock(c_in, c_mid, stride, expansion)
    for i in range(1, depth):
        blocks[f"block{i}"] = IdentityBlock(width, c_mid, expansion)
    return nn.Sequential(blocks)


class Backbone(nn.Module):
    def __init__(self, cfg: BackboneConfig):
        super().__init__()
        self.cfg = cfg
        self.stem = ConvBN(cfg.input_channels, cfg.stem_channels, 7, stride=2, padding=3)
        widths = cfg.group_widths
        depths = cfg.group_depths
        exp = cfg.expansion
        self.group2 = _make_group(cfg.stem_channels, widths[0], depths[0], 1, exp)
        self.group3 = _make_group(widths[0], widths[1], depths[1], 2, exp)
        self.group4 = _make_group(widths[1], widths[2], depths[2], 2, exp)
        self.group5 = _make_group(widths[2], widths[3], depths[3], 2, exp)

    def stem_forward(self, x):
        x = F.relu(self.stem(x))
        return F.max_pool2d(x, 3, stride=2, padding=1)

    def forward(self, x):
        """Return the raw (c3, c4, c5) pyramid at strides 8/16/32."""
        check_input_size(x)
        x = self.stem_forward(x)
        x = self.group2(x)
        c3 = self.group3(x)
        c4 = self.group4(c3)
        c5 = self.group5(c4)
        return c3, c4, c5


def check_input_size(x):
    h, w = x.shape[-2], x.shape[-1]
    if h % 32 != 0 or w % 32 != 0:
        raise InputError(
            f"input spatial size {h}x{w} must be divisible by 32"
        )
