"""Dual attention: parallel position (spatial) and channel branches.

Both branches carry a learnable scalar initialized to zero, so a freshly
built module is exactly the identity map.  Position attention softmaxes
dot products of 1x1-projected features over the N = H*W locations; channel
attention softmaxes the Gram matrix of the raw feature map over channels.
"""

import torch
import torch.nn.functional as F
from torch import nn

from .errors import ConfigError


class PositionAttention(nn.Module):
    """Spatial self-attention with query/key projections to C//reduction channels."""

    def __init__(self, channels, reduction=8):
        super().__init__()
        if channels < 1:
            raise ConfigError(f"channels must be >= 1, got {channels}")
        if reduction < 1:
            raise ConfigError(f"reduction must be >= 1, got {reduction}")
        qk = max(channels // reduction, 1)
        self.proj_b = nn.Conv2d(channels, qk, 1, bias=False)
        self.proj_c = nn.Conv2d(channels, qk, 1, bias=False)
        self.proj_d = nn.Conv2d(channels, channels, 1, bias=False)
        self.alpha = nn.Parameter(torch.zeros(()))

    def attention_map(self, x):
        """Row-stochastic (batch, N, N) map; entry (j, i) weights source i for target j."""
        b, _, h, w = x.shape
        n = h * w
        q = self.proj_b(x).reshape(b, -1, n)  # sources
        k = self.proj_c(x).reshape(b, -1, n)  # targets
        # energy[b, j, i] = k_j . q_i
        energy = torch.bmm(k.transpose(1, 2), q)
        return F.softmax(energy, dim=2)

    def forward(self, x):
        b, c, h, w = x.shape
        s = self.attention_map(x)
        v = self.proj_d(x).reshape(b, c, h * w)
        out = torch.bmm(v, s.transpose(1, 2)).reshape(b, c, h, w)
        return self.alpha * out + x


class ChannelAttention(nn.Module):
    """Channel self-attention over the Gram matrix of the feature map; no projections."""

    def __init__(self):
        super().__init__()
        self.beta = nn.Parameter(torch.zeros(()))

    def attention_map(self, x):
        """Row-stochastic (batch, C, C) map over source channels."""
        b, c = x.shape[0], x.shape[1]
        flat = x.reshape(b, c, -1)
        # energy[b, j, i] = a_j . a_i (symmetric)
        energy = torch.bmm(flat, flat.transpose(1, 2))
        return F.softmax(energy, dim=2)

    def forward(self, x):
        b, c, h, w = x.shape
        m = self.attention_map(x)
        flat = x.reshape(b, c, -1)
        out = torch.bmm(m, flat).reshape(b, c, h, w)
        return self.beta * out + x


class DualAttention(nn.Module):
    """Sum of both branches with the shared residual counted once.

    At alpha = beta = 0 the output equals the input bit-for-bit.
    """

    def __init__(self, channels, reduction=8):
        super().__init__()
        self.position = PositionAttention(channels, reduction)
        self.channel = ChannelAttention()

    def forward(self, x):
        return self.position(x) + self.channel(x) - x
