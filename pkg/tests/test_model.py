import io
import json
import zipfile

import numpy as np
import pytest
import torch

from fpdanet.errors import CheckpointError, ConfigError, InputError
from fpdanet.model import (FPDANet, ModelConfig, build_model, desk_config,
                           full_config, load_checkpoint, save_checkpoint)


def test_build_model_is_deterministic():
    cfg = desk_config()
    m1 = build_model(cfg, seed=11)
    m2 = build_model(cfg, seed=11)
    for (n1, p1), (n2, p2) in zip(m1.state_dict().items(),
                                  m2.state_dict().items()):
        assert n1 == n2
        assert torch.equal(p1, p2), n1


def test_build_model_different_seeds_differ():
    cfg = desk_config()
    m1 = build_model(cfg, seed=1)
    m2 = build_model(cfg, seed=2)
    assert not torch.equal(m1.backbone.stem.conv.weight,
                           m2.backbone.stem.conv.weight)


def test_no_attention_sites_means_no_attention_params():
    m = build_model(desk_config(attention_sites=()), seed=0)
    assert not any(name.startswith("attention.")
                   for name, _ in m.named_parameters())


def test_attention_scalars_zero_at_init():
    m = build_model(desk_config(), seed=0)
    assert float(m.attention["g4"].position.alpha.detach()) == 0.0
    assert float(m.attention["g4"].channel.beta.detach()) == 0.0
    assert float(m.attention["g5"].position.alpha.detach()) == 0.0


def test_attention_transparent_at_init():
    cfg_on = desk_config()
    cfg_off = desk_config(attention_sites=())
    m_on = build_model(cfg_on, seed=5)
    m_off = build_model(cfg_off, seed=5)
    m_on.eval(), m_off.eval()
    for i in range(3):
        torch.manual_seed(i)
        x = torch.randn(2, 3, 64, 64)
        with torch.no_grad():
            assert torch.equal(m_on(x), m_off(x))


def test_forward_shapes():
    m = build_model(desk_config(), seed=0).eval()
    with torch.no_grad():
        out = m(torch.randn(2, 3, 64, 64))
    assert out.shape == (2, 21)


def test_forward_rejects_wrong_input_size():
    m = build_model(desk_config(), seed=0)
    with pytest.raises(InputError, match="64x64"):
        m(torch.randn(1, 3, 96, 96))


def test_full_preset_forward_shape():
    m = build_model(full_config(), seed=0).eval()
    with torch.no_grad():
        out = m(torch.randn(1, 3, 224, 224))
    assert out.shape == (1, 21)


def test_batch_invariance_in_eval_mode():
    m = build_model(desk_config(), seed=3).eval()
    x = torch.randn(4, 3, 64, 64)
    with torch.no_grad():
        batched = m(x)
        single = torch.cat([m(x[i:i + 1]) for i in range(4)])
    assert torch.allclose(batched, single, atol=1e-5)


def test_parameters_finite_after_init():
    m = build_model(desk_config(), seed=0)
    for name, p in m.named_parameters():
        assert torch.isfinite(p).all(), name


def test_config_rejects_bad_input_size():
    with pytest.raises(ConfigError):
        ModelConfig(input_size=(60, 64))


def test_config_rejects_unknown_site():
    with pytest.raises(ConfigError):
        desk_config(attention_sites=("g3",))


def test_config_round_trips_through_dict():
    cfg = desk_config()
    assert ModelConfig.from_dict(cfg.to_dict()) == cfg


def test_checkpoint_round_trip_bitwise(tmp_path):
    m = build_model(desk_config(), seed=9)
    path = tmp_path / "m.ckpt"
    save_checkpoint(m, path, extras={"note": "x"})
    loaded, cfg, extras = load_checkpoint(path)
    assert cfg == m.cfg
    assert extras == {"note": "x"}
    for (n1, p1), (n2, p2) in zip(m.state_dict().items(),
                                  loaded.state_dict().items()):
        assert n1 == n2 and torch.equal(p1, p2), n1


def _rewrite_checkpoint(src, dst, drop_prefix=None):
    with zipfile.ZipFile(src) as zf:
        manifest = zf.read("config.json")
        arrays = dict(np.load(io.BytesIO(zf.read("params.npz"))))
    if drop_prefix:
        arrays = {k: v for k, v in arrays.items()
                  if not k.startswith(drop_prefix)}
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    with zipfile.ZipFile(dst, "w") as zf:
        zf.writestr("config.json", manifest)
        zf.writestr("params.npz", buf.getvalue())


def test_checkpoint_missing_head_keys_rejected(tmp_path):
    m = build_model(desk_config(), seed=0)
    src = tmp_path / "a.ckpt"
    dst = tmp_path / "b.ckpt"
    save_checkpoint(m, src)
    _rewrite_checkpoint(src, dst, drop_prefix="head.")
    with pytest.raises(CheckpointError, match="head.linear"):
        load_checkpoint(dst)


def test_checkpoint_shape_mismatch_across_presets(tmp_path):
    m = build_model(desk_config(), seed=0)
    path = tmp_path / "desk.ckpt"
    save_checkpoint(m, path)
    with pytest.raises(CheckpointError, match="shape mismatch"):
        load_checkpoint(path, cfg=full_config())


def test_checkpoint_version_mismatch(tmp_path):
    m = build_model(desk_config(), seed=0)
    path = tmp_path / "a.ckpt"
    save_checkpoint(m, path)
    with zipfile.ZipFile(path) as zf:
        manifest = json.loads(zf.read("config.json"))
        params = zf.read("params.npz")
    manifest["format_version"] = 99
    bad = tmp_path / "bad.ckpt"
    with zipfile.ZipFile(bad, "w") as zf:
        zf.writestr("config.json", json.dumps(manifest))
        zf.writestr("params.npz", params)
    with pytest.raises(CheckpointError, match="version"):
        load_checkpoint(bad)


def test_checkpoint_key_naming_convention(tmp_path):
    m = build_model(desk_config(), seed=0)
    path = tmp_path / "m.ckpt"
    save_checkpoint(m, path)
    with zipfile.ZipFile(path) as zf:
        keys = set(np.load(io.BytesIO(zf.read("params.npz"))).keys())
    assert "backbone.group2.block0.reduce_1x1.conv.weight" in keys
    assert "attention.g4.position.alpha" in keys
    assert "attention.g5.channel.beta" in keys
    assert "fpan.lateral_3.conv.weight" in keys
    assert "head.linear.weight" in keys
