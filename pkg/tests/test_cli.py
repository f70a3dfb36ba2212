import json

import numpy as np
import pytest
import torch

from fpdanet import cli
from fpdanet import data as D
from fpdanet import metrics as M
from fpdanet.model import build_model, desk_config, save_checkpoint
from fpdanet.schedule import LRScheduleConfig, lr_table


def test_synth_verb_writes_dataset(tmp_path):
    out = tmp_path / "data"
    code = cli.run(["synth", "--classes", "21", "--per-class", "3",
                    "--seed", "7", "--out", str(out)])
    assert code == 0
    assert len(list(out.rglob("*.png"))) == 63
    manifest = D.DatasetManifest.load(out / "manifest.tsv")
    assert len(manifest.records) == 63


def test_lr_dump_matches_library(tmp_path):
    out = tmp_path / "lr.csv"
    code = cli.run(["lr-dump", "--batch-size", "64", "--out", str(out)])
    assert code == 0
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "epoch,lr"
    rows = [(int(a), float(b)) for a, b in
            (line.split(",") for line in lines[1:])]
    assert rows == lr_table(LRScheduleConfig(), 64)
    assert rows[0] == (0, 0.001)


def test_lr_dump_respects_overrides(capsys):
    code = cli.run(["lr-dump", "--batch-size", "64",
                    "--set", "total_epochs=10"])
    assert code == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 11


def test_unknown_verb_exits_2(capsys):
    assert cli.run(["frobnicate"]) == 2


def test_bad_override_key_errors():
    assert cli.run(["lr-dump", "--batch-size", "64",
                    "--set", "no_such_key=1"]) == 1


@pytest.fixture(scope="module")
def zero_head_checkpoint(tmp_path_factory):
    path = tmp_path_factory.mktemp("ckpt") / "m.ckpt"
    model = build_model(desk_config(), seed=0)
    with torch.no_grad():
        model.head.linear.weight.zero_()
        model.head.linear.bias.zero_()
    save_checkpoint(model, path)
    return path


@pytest.fixture(scope="module")
def sample_image(tmp_path_factory):
    from PIL import Image
    p = tmp_path_factory.mktemp("img") / "f.png"
    rng = np.random.default_rng(0)
    Image.fromarray(rng.integers(0, 255, (64, 64), dtype=np.uint8)).save(p)
    return p


def test_predict_uniform_with_zero_head(zero_head_checkpoint, sample_image):
    ranked = cli.predict(zero_head_checkpoint, sample_image, 21)
    scores = [s for _, s in ranked]
    assert np.allclose(scores, 1 / 21, atol=1e-6)
    assert abs(sum(scores) - 1.0) < 1e-6
    # Tie-break: taxonomy order.
    assert [a for a, _ in ranked] == D.ABBREVIATIONS


def test_predict_verb_output(zero_head_checkpoint, sample_image, capsys):
    code = cli.run(["predict", "--checkpoint", str(zero_head_checkpoint),
                    "--image", str(sample_image), "--top", "5"])
    assert code == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 5
    assert all(line.startswith("class=") for line in lines)


def test_predict_deterministic(zero_head_checkpoint, sample_image):
    r1 = cli.predict(zero_head_checkpoint, sample_image, 5)
    r2 = cli.predict(zero_head_checkpoint, sample_image, 5)
    assert r1 == r2


def test_predict_unreadable_image_exit_1(zero_head_checkpoint, tmp_path):
    assert cli.run(["predict", "--checkpoint", str(zero_head_checkpoint),
                    "--image", str(tmp_path / "missing.png")]) == 1


def test_report_verb_round_trip(tmp_path, capsys):
    rng = np.random.default_rng(0)
    report = M.compute_report(rng.normal(size=(40, 21)),
                              rng.integers(0, 21, 40))
    rpath = tmp_path / "report.json"
    rpath.write_text(json.dumps(report.to_dict()))
    code = cli.run(["report", "--report", str(rpath), "--format", "csv"])
    assert code == 0
    out = capsys.readouterr().out
    assert out == M.report_to_csv(report)


def test_apply_overrides_coerces_types():
    cfg = desk_config()
    cli.apply_overrides(cfg, ["fpan.fused_width=32",
                              "attention_sites=g4"])
    assert cfg.fpan.fused_width == 32
    assert cfg.attention_sites == ("g4",)
