import json

import numpy as np
import pytest

from hazediff.checkpoint import save_checkpoint
from hazediff.cli import main
from hazediff.denoiser import init_denoiser
from hazediff.diffusion import make_linear_schedule
from hazediff.imageio import read_image
from hazediff.numerics import SeededRng
from hazediff.stage1 import init_stage1

SMALL = {"size": 16, "n_train": 6, "n_test": 3, "T": 10, "stage1_steps": 3, "diffusion_steps": 2,
         "stage1_batch": 2, "batch_size": 2}


@pytest.fixture
def config(tmp_path):
    p = tmp_path / "run.json"
    p.write_text(json.dumps(SMALL))
    return str(p)


def tree_bytes(root):
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def test_synth_reproducible(tmp_path, config):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["synth", "--config", config, "--out", str(a)]) == 0
    assert main(["synth", "--config", config, "--out", str(b)]) == 0
    ta, tb = tree_bytes(a), tree_bytes(b)
    assert ta == tb
    assert "train.json" in ta and "test/0006_hazy.ppm" in ta


def test_seed_override_changes_data(tmp_path, config):
    main(["synth", "--config", config, "--out", str(tmp_path / "a")])
    main(["synth", "--config", config, "--seed", "5", "--out", str(tmp_path / "b")])
    assert tree_bytes(tmp_path / "a")["train/0000_hazy.ppm"] != tree_bytes(tmp_path / "b")["train/0000_hazy.ppm"]


def test_full_command_chain(tmp_path, config, capsys):
    data, run = tmp_path / "data", tmp_path / "run"
    assert main(["synth", "--config", config, "--out", str(data)]) == 0
    assert main(["train-stage1", "--config", config, "--manifest", str(data / "train.json"),
                 "--out", str(run)]) == 0
    assert main(["train-diffusion", "--config", config, "--manifest", str(data / "train.json"),
                 "--checkpoint", str(run / "stage1.ckpt"), "--out", str(run)]) == 0
    log = (run / "diffusion_log.tsv").read_text().splitlines()
    assert log[0] == "step\tloss_simple\tloss_frequency\ttotal" and len(log) == 3
    ck = ["--checkpoint", str(run / "stage1.ckpt"), "--checkpoint", str(run / "denoiser_ema.ckpt")]
    out = tmp_path / "out"
    assert main(["dehaze", "--config", config, "--manifest", str(data / "test.json"), "--out", str(out),
                 "--snapshot-every", "5", *ck]) == 0
    assert (out / "0006_dehazed.ppm").exists()
    assert (out / "snapshots" / "0006_t0005_x0.ppm").exists()
    capsys.readouterr()
    assert main(["eval", "--config", config, "--manifest", str(data / "test.json"), *ck]) == 0
    table = capsys.readouterr().out.splitlines()
    assert table[0].split("\t")[:4] == ["name", "min_trmap", "dense", "psnr_hazy"]
    assert len(table) == 4
    assert main(["stats", "--manifest", str(data / "test.json")]) == 0
    assert capsys.readouterr().out.startswith("name\tentropy\tstd\tmean_grad")


def test_force_trmap_one_returns_stage1(tmp_path, config):
    data, out = tmp_path / "data", tmp_path / "out"
    main(["synth", "--config", config, "--out", str(data)])
    save_checkpoint(init_stage1(SeededRng(1), np.float32), tmp_path / "s1.ckpt", "stage1")
    save_checkpoint(init_denoiser(SeededRng(2)), tmp_path / "d.ckpt", "denoiser-ema")
    cfg = tmp_path / "all.json"
    cfg.write_text(json.dumps({**SMALL, "fusion_steps": list(range(1, 11))}))
    assert main(["dehaze", "--config", str(cfg), "--manifest", str(data / "test.json"), "--out", str(out),
                 "--checkpoint", str(tmp_path / "s1.ckpt"), "--checkpoint", str(tmp_path / "d.ckpt"),
                 "--force-trmap-one"]) == 0
    for name in ("0006", "0007", "0008"):
        a = read_image(out / f"{name}_dehazed.ppm")
        b = read_image(out / f"{name}_stage1.ppm")
        assert np.max(np.abs(a - b)) <= 1 / 255 + 1e-12


def test_schedule_dump(config, capsys):
    assert main(["schedule-dump", "--config", config]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == "t\tbeta\talpha\talpha_bar" and len(lines) == 11
    ab = [float(line.split("\t")[3]) for line in lines[1:]]
    np.testing.assert_array_equal(ab, make_linear_schedule(10).alpha_bar)


@pytest.mark.parametrize("argv, fragment", [
    (["stats", "--manifest", "{tmp}/missing.json"], "missing.json"),
    (["train-diffusion", "--out", "{tmp}/o", "--manifest", "{tmp}/m.json"], "checkpoint"),
    (["schedule-dump", "--config", "{tmp}/typo.json"], "unknown config key"),
    (["dehaze", "--out", "{tmp}/o", "--checkpoint", "{tmp}/nope.ckpt", "x.ppm"], "nope.ckpt"),
])
def test_errors_exit_nonzero(tmp_path, capsys, argv, fragment):
    (tmp_path / "typo.json").write_text('{"fusion_step": [1]}')
    (tmp_path / "m.json").write_text('{"entries": []}')
    argv = [a.format(tmp=tmp_path) for a in argv]
    assert main(argv) != 0
    err = capsys.readouterr().err
    assert fragment in err and len(err.strip().splitlines()) == 1


def test_kind_mismatch_rejected(tmp_path, capsys, config):
    main(["synth", "--config", config, "--out", str(tmp_path / "d")])
    save_checkpoint(init_stage1(SeededRng(0), np.float32), tmp_path / "s1.ckpt", "stage1")
    rc = main(["dehaze", "--config", config, "--manifest", str(tmp_path / "d" / "test.json"),
               "--out", str(tmp_path / "o"), "--checkpoint", str(tmp_path / "s1.ckpt")])
    assert rc != 0 and "denoiser" in capsys.readouterr().err
