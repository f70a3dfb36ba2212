"""FPDANet assembly: backbone + dual attention + fusion + head.

Also owns deterministic initialization and the checkpoint archive format
(a zip holding ``config.json`` and ``params.npz`` keyed by the hierarchical
parameter names of ``named_parameters``/``named_buffers``).
"""

import io
import json
import math
import zipfile
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .attention import DualAttention
from .backbone import Backbone, BackboneConfig, ConvBlock, IdentityBlock, check_input_size
from .errors import CheckpointError, ConfigError, InputError
from .fpan import ClassifierHead, Fpan, FpanConfig

CHECKPOINT_FORMAT_VERSION = 1
ATTENTION_SITES = ("g4", "g5")


@dataclass
class ModelConfig:
    backbone: BackboneConfig = field(default_factory=BackboneConfig)
    fpan: FpanConfig = field(default_factory=FpanConfig)
    attention_sites: tuple[str, ...] = ("g4", "g5")
    attention_reduction: int = 8
    input_size: tuple[int, int] = (224, 224)
    preset: str = "full"

    def __post_init__(self):
        for site in self.attention_sites:
            if site not in ATTENTION_SITES:
                raise ConfigError(f"unknown attention site {site!r}")
        if self.input_size[0] % 32 or self.input_size[1] % 32:
            raise ConfigError(
                f"input_size {self.input_size} must be divisible by 32"
            )

    def to_dict(self):
        d = asdict(self)
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        d["backbone"] = BackboneConfig(
            **{**d["backbone"],
               "group_widths": tuple(d["backbone"]["group_widths"]),
               "group_depths": tuple(d["backbone"]["group_depths"])}
        )
        d["fpan"] = FpanConfig(**d["fpan"])
        d["attention_sites"] = tuple(d["attention_sites"])
        d["input_size"] = tuple(d["input_size"])
        return cls(**d)


def full_config(**overrides) -> ModelConfig:
    return ModelConfig(preset="full", **overrides)


def desk_config(**overrides) -> ModelConfig:
    """Small configuration for CPU-scale runs and the test suite."""
    defaults = dict(
        backbone=BackboneConfig(
            stem_channels=16,
            group_widths=(32, 64, 128, 256),
            group_depths=(1, 1, 1, 1),
        ),
        fpan=FpanConfig(fused_width=64),
        input_size=(64, 64),
        preset="desk",
    )
    defaults.update(overrides)
    return ModelConfig(**defaults)


class FPDANet(nn.Module):
    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.backbone = Backbone(cfg.backbone)
        widths = cfg.backbone.group_widths
        attn = {}
        if "g4" in cfg.attention_sites:
            attn["g4"] = DualAttention(widths[2], cfg.attention_reduction)
        if "g5" in cfg.attention_sites:
            attn["g5"] = DualAttention(widths[3], cfg.attention_reduction)
        self.attention = nn.ModuleDict(attn)
        self.fpan = Fpan(widths[1:], cfg.fpan)
        self.head = ClassifierHead(cfg.fpan)

    def pyramid(self, x):
        """(c3, c4, c5) with attention applied at the configured sites."""
        check_input_size(x)
        x = self.backbone.stem_forward(x)
        x = self.backbone.group2(x)
        c3 = self.backbone.group3(x)
        c4 = self.backbone.group4(c3)
        if "g4" in self.attention:
            c4 = self.attention["g4"](c4)
        c5 = self.backbone.group5(c4)
        if "g5" in self.attention:
            c5 = self.attention["g5"](c5)
        return c3, c4, c5

    def forward(self, x):
        h, w = x.shape[-2], x.shape[-1]
        if (h, w) != tuple(self.cfg.input_size):
            raise InputError(
                f"input size {h}x{w} does not match configured "
                f"{self.cfg.input_size[0]}x{self.cfg.input_size[1]}"
            )
        n3, n4, n5 = self.fpan(self.pyramid(x))
        return self.head(n3, n4, n5)


def _init_conv(conv, gen):
    fan_in = conv.in_channels * conv.kernel_size[0] * conv.kernel_size[1]
    std = math.sqrt(2.0 / fan_in)
    with torch.no_grad():
        conv.weight.normal_(0.0, std, generator=gen)
        if conv.bias is not None:
            conv.bias.zero_()


def _init_tree(module, gen):
    for m in module.modules():
        if isinstance(m, nn.Conv2d):
            _init_conv(m, gen)
        elif isinstance(m, nn.BatchNorm2d):
            with torch.no_grad():
                m.weight.fill_(1.0)
                m.bias.zero_()
                m.running_mean.zero_()
                m.running_var.fill_(1.0)
                m.num_batches_tracked.zero_()
        elif isinstance(m, nn.Linear):
            std = 1.0 / math.sqrt(m.in_features)
            with torch.no_grad():
                m.weight.normal_(0.0, std, generator=gen)
                if m.bias is not None:
                    m.bias.zero_()


def build_model(cfg: ModelConfig, seed: int) -> FPDANet:
    """Deterministic construction; same (cfg, seed) gives bitwise-equal params.

    Shared layers (backbone, fpan, head) draw from one generator before
    attention touches a second one, so models differing only in
    attention_sites share their non-attention initialization exactly.
    """
    model = FPDANet(cfg)
    gen = torch.Generator().manual_seed(seed)
    _init_tree(model.backbone, gen)
    _init_tree(model.fpan, gen)
    _init_tree(model.head, gen)
    attn_gen = torch.Generator().manual_seed(seed + 0x9E3779B9)
    _init_tree(model.attention, attn_gen)
    # Residual branches start as identities: final BN scale of each main
    # branch is zeroed so early training is stable.
    for m in model.backbone.modules():
        if isinstance(m, (ConvBlock, IdentityBlock)):
            with torch.no_grad():
                m.expand_1x1.bn.weight.zero_()
    return model


def _flat_state(model):
    state = {}
    for name, p in model.named_parameters():
        state[name] = p.detach().cpu().numpy()
    for name, b in model.named_buffers():
        state[name] = b.detach().cpu().numpy()
    return state


def save_checkpoint(model: FPDANet, path, extras: dict | None = None):
    """Write a zip archive with a JSON config manifest and an npz of parameters."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    manifest = {
        "format_version": CHECKPOINT_FORMAT_VERSION,
        "config": model.cfg.to_dict(),
        "extras": extras or {},
    }
    buf = io.BytesIO()
    np.savez(buf, **_flat_state(model))
    with zipfile.ZipFile(path, "w", zipfile.ZIP_STORED) as zf:
        zf.writestr("config.json", json.dumps(manifest, indent=2))
        zf.writestr("params.npz", buf.getvalue())


def load_checkpoint(path, cfg: ModelConfig | None = None):
    """Rebuild (model, cfg, extras) from an archive written by save_checkpoint.

    When cfg is given it overrides the embedded one; key or shape mismatches
    against the rebuilt module tree raise CheckpointError listing offenders.
    """
    path = Path(path)
    try:
        with zipfile.ZipFile(path) as zf:
            manifest = json.loads(zf.read("config.json"))
            arrays = dict(np.load(io.BytesIO(zf.read("params.npz"))))
    except (OSError, KeyError, zipfile.BadZipFile, json.JSONDecodeError) as e:
        raise CheckpointError(f"unreadable checkpoint {path}: {e}") from e
    version = manifest.get("format_version")
    if version != CHECKPOINT_FORMAT_VERSION:
        raise CheckpointError(
            f"checkpoint format version {version} != {CHECKPOINT_FORMAT_VERSION}"
        )
    if cfg is None:
        cfg = ModelConfig.from_dict(manifest["config"])
    model = FPDANet(cfg)
    expected = _flat_state(model)
    missing = sorted(set(expected) - set(arrays))
    unexpected = sorted(set(arrays) - set(expected))
    bad_shapes = [
        f"{k}: archive {arrays[k].shape} vs model {expected[k].shape}"
        for k in sorted(set(expected) & set(arrays))
        if tuple(arrays[k].shape) != tuple(expected[k].shape)
    ]
    if missing or unexpected or bad_shapes:
        def clip(items):
            return items[:5] + [f"... {len(items) - 5} more"] \
                if len(items) > 5 else items
        parts = []
        if missing:
            parts.append(f"missing keys: {clip(missing)}")
        if unexpected:
            parts.append(f"unexpected keys: {clip(unexpected)}")
        if bad_shapes:
            parts.append(f"shape mismatch: {clip(bad_shapes)}")
        raise CheckpointError("checkpoint incompatible; " + "; ".join(parts))
    state = {k: torch.from_numpy(v.copy()) for k, v in arrays.items()}
    model.load_state_dict(state)
    return model, cfg, manifest.get("extras", {})
