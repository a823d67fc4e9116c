import itertools
import json

import numpy as np
import pytest

from hazediff.checkpoint import (
    KINDS, CheckpointError, CheckpointKindError, CheckpointNameCollisionError,
    CheckpointTruncatedError, CheckpointVersionError, decode_checkpoint, encode_checkpoint,
    load_checkpoint, save_checkpoint,
)
from hazediff.config import ConfigError, RunConfig
from hazediff.denoiser import init_denoiser
from hazediff.imageio import ImageDecodeError, decode_pnm, read_image, write_image
from hazediff.numerics import SeededRng
from hazediff.stage1 import init_stage1


class TestImages:
    @pytest.mark.parametrize("ext", [".ppm", ".png"])
    def test_round_trip_quantization(self, tmp_path, ext):
        img = np.random.default_rng(0).uniform(size=(9, 7, 3))
        write_image(img, tmp_path / f"a{ext}")
        back = read_image(tmp_path / f"a{ext}")
        assert back.shape == img.shape
        assert np.max(np.abs(back - img)) <= 1 / 510 + 1e-12

    def test_minimal_p6(self):
        data = b"P6\n2 2\n255\n" + bytes(range(12))
        img = decode_pnm(data)
        assert img.shape == (2, 2, 3)
        assert img[0, 0, 1] == pytest.approx(1 / 255)

    def test_header_comment(self):
        img = decode_pnm(b"P6\n# made by hand\n1 1\n255\n\x00\x80\xff")
        np.testing.assert_allclose(img[0, 0], [0, 128 / 255, 1])

    def test_grey_pgm(self, tmp_path):
        t = np.random.default_rng(1).uniform(size=(5, 5, 1))
        write_image(t, tmp_path / "t.pgm")
        assert read_image(tmp_path / "t.pgm").shape == (5, 5, 1)

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "x.ppm"
        p.write_bytes(b"Q6\n2 2\n255\n" + bytes(12))
        with pytest.raises(ImageDecodeError, match="x.ppm"):
            read_image(p)

    def test_truncated(self, tmp_path):
        p = tmp_path / "x.ppm"
        p.write_bytes(b"P6\n2 2\n255\n" + bytes(11))
        with pytest.raises(ImageDecodeError, match="truncated"):
            read_image(p)

    def test_deterministic_png(self, tmp_path):
        img = np.random.default_rng(2).uniform(size=(8, 8, 3))
        write_image(img, tmp_path / "a.png")
        write_image(img, tmp_path / "b.png")
        assert (tmp_path / "a.png").read_bytes() == (tmp_path / "b.png").read_bytes()


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path):
        p = init_denoiser(SeededRng(0))
        save_checkpoint(p, tmp_path / "d.ckpt", "denoiser")
        q = load_checkpoint(tmp_path / "d.ckpt", "denoiser")
        assert list(q) == list(p)
        assert all(q[k].tobytes() == p[k].tobytes() for k in p)

    def test_layout(self):
        data = encode_checkpoint({"w": np.array([[1.0, 2.0]], dtype=np.float32)}, "stage1")
        assert data[:4] == b"HDPM"
        assert data[4:8] == (1).to_bytes(4, "little")
        assert data[8:12] == (6).to_bytes(4, "little") and data[12:18] == b"stage1"
        assert data[-8:] == np.array([1.0, 2.0], dtype="<f4").tobytes()

    def test_truncation_names_record(self):
        data = encode_checkpoint(init_stage1(SeededRng(1)), "stage1")
        with pytest.raises(CheckpointTruncatedError, match="conv2_w"):
            decode_checkpoint(data[:3000])

    def test_version(self):
        data = bytearray(encode_checkpoint({"w": np.zeros(2)}, "stage1"))
        data[4] = 9
        with pytest.raises(CheckpointVersionError):
            decode_checkpoint(bytes(data))

    def test_magic(self):
        with pytest.raises(CheckpointError):
            decode_checkpoint(b"XXXX" + bytes(20))

    def test_name_collision(self):
        one = encode_checkpoint({"w": np.zeros(1)}, "stage1")
        header, rec = one[:22], one[22:]
        data = header[:18] + (2).to_bytes(4, "little") + rec + rec
        with pytest.raises(CheckpointNameCollisionError):
            decode_checkpoint(data)

    def test_cross_load_matrix(self, tmp_path):
        p = {"w": np.zeros(3, dtype=np.float32)}
        for stored, wanted in itertools.product(KINDS, KINDS):
            path = tmp_path / f"{stored}.ckpt"
            save_checkpoint(p, path, stored)
            if stored == wanted:
                load_checkpoint(path, wanted)
            else:
                with pytest.raises(CheckpointKindError):
                    load_checkpoint(path, wanted)

    def test_atomic_write_leaves_no_temp(self, tmp_path):
        save_checkpoint({"w": np.ones(2)}, tmp_path / "a.ckpt", "stage1")
        assert [p.name for p in tmp_path.iterdir()] == ["a.ckpt"]


class TestConfig:
    def test_round_trip_idempotent(self):
        cfg = RunConfig(seed=3, fusion_steps=[5, 1, 3], lr=2e-4)
        text = cfg.dumps()
        assert RunConfig.loads(text).dumps() == text

    def test_unknown_key(self):
        with pytest.raises(ConfigError, match="fusion_step"):
            RunConfig.loads(json.dumps({"fusion_step": [1]}))

    def test_type_check(self):
        with pytest.raises(ConfigError):
            RunConfig.loads(json.dumps({"T": "100"}))

    def test_integer_float_accepted(self):
        assert RunConfig.loads('{"lr": 1}').lr == 1.0

    def test_derived_objects(self):
        cfg = RunConfig(T=50, fusion_steps=[1, 2])
        assert cfg.schedule().T == 50
        assert cfg.sampler_config().fusion_steps == frozenset({1, 2})
        assert cfg.train_config().lambda_fre == 0.01
