"""PSNR and bitrate accounting."""
import math

import numpy as np
import pytest

from vcmbench.errors import DataError
from vcmbench.quality import (
    bitrate_of_run,
    bt601_luma,
    psnr,
    read_image,
    read_yuv,
    write_image,
)

from oracles import psnr_reference


class TestPsnr:
    def test_identical_images_are_infinite(self):
        img = np.full((8, 8), 128, dtype=np.uint8)
        assert psnr(img, img) == math.inf

    def test_uniform_offset_sixteen(self):
        a = np.full((16, 16), 100, dtype=np.uint8)
        b = a + 16
        expected = 10 * math.log10(255**2 / 256)  # every pixel differs by 16
        assert psnr(a, b) == pytest.approx(expected, abs=1e-12)
        assert psnr(a, b) == pytest.approx(24.05, abs=0.01)

    def test_matches_independent_mse_oracle(self):
        rng = np.random.default_rng(31)
        for _ in range(50):
            a = rng.integers(0, 256, size=(12, 17), dtype=np.uint8)
            b = rng.integers(0, 256, size=(12, 17), dtype=np.uint8)
            assert abs(psnr(a, b) - psnr_reference(a, b, 255.0)) < 1e-9

    def test_symmetry(self):
        rng = np.random.default_rng(33)
        a = rng.integers(0, 256, size=(9, 9), dtype=np.uint8)
        b = rng.integers(0, 256, size=(9, 9), dtype=np.uint8)
        assert psnr(a, b) == psnr(b, a)

    def test_monotone_in_noise_amplitude(self):
        base = np.full((32, 32), 120, dtype=np.int32)
        previous = math.inf
        for amplitude in (1, 2, 4, 8, 16):
            noisy = (base + amplitude * np.where(np.arange(1024).reshape(32, 32) % 2 == 0, 1, -1))
            value = psnr(base.astype(np.uint8), noisy.astype(np.uint8))
            assert value < previous
            previous = value

    def test_dimension_mismatch(self):
        with pytest.raises(DataError):
            psnr(np.zeros((4, 4), dtype=np.uint8), np.zeros((4, 5), dtype=np.uint8))

    def test_luma_policy_converts_rgb(self):
        rgb_a = np.zeros((4, 4, 3), dtype=np.uint8)
        rgb_b = np.zeros((4, 4, 3), dtype=np.uint8)
        rgb_b[..., 0] = 10  # red-only error shrinks under the luma weighting
        luma_value = psnr(rgb_a, rgb_b, policy="luma")
        rgb_value = psnr(rgb_a, rgb_b, policy="rgb_mean")
        y = bt601_luma(rgb_b)
        assert np.allclose(y, 2.99)
        assert luma_value > rgb_value

    def test_sixteen_bit_peak(self):
        a = np.zeros((4, 4), dtype=np.uint16)
        b = np.full((4, 4), 256, dtype=np.uint16)
        expected = 10 * math.log10(65535**2 / 256**2)
        assert psnr(a, b) == pytest.approx(expected, abs=1e-12)

    def test_float_input_requires_peak(self):
        a = np.zeros((4, 4))
        with pytest.raises(DataError):
            psnr(a, a + 1.0)
        assert psnr(a, a + 1.0, max_value=1.0) == pytest.approx(0.0, abs=1e-12)


class TestBitrate:
    def test_one_bpp_case(self):
        stats = bitrate_of_run([262_144], (2048, 1024))
        assert stats.mean_bpp == 1.0
        assert stats.mean_kbit_per_image == pytest.approx(8 * 262_144 / 1000, abs=1e-9)

    def test_identical_images_mean_equals_single(self):
        one = bitrate_of_run([1000], (100, 100))
        two = bitrate_of_run([1000, 1000], [(100, 100), (100, 100)])
        assert two.mean_bpp == one.mean_bpp
        assert two.mean_kbit_per_image == one.mean_kbit_per_image
        assert two.n_images == 2

    def test_zero_byte_bitstream_rejected(self):
        with pytest.raises(DataError):
            bitrate_of_run([1000, 0], (100, 100))

    def test_empty_run_rejected(self):
        with pytest.raises(DataError):
            bitrate_of_run([], (100, 100))

    def test_scales_linearly_with_size(self):
        rng = np.random.default_rng(41)
        for _ in range(20):
            size = int(rng.integers(1, 10_000))
            k = int(rng.integers(2, 9))
            a = bitrate_of_run([size], (64, 32))
            b = bitrate_of_run([size * k], (64, 32))
            assert b.mean_bpp == pytest.approx(k * a.mean_bpp, rel=1e-12)


class TestImageIo:
    def test_png_round_trip_8bit(self, tmp_path):
        rng = np.random.default_rng(43)
        arr = rng.integers(0, 256, size=(10, 14), dtype=np.uint8)
        path = tmp_path / "x.png"
        write_image(path, arr)
        assert np.array_equal(read_image(path), arr)

    def test_png_round_trip_16bit(self, tmp_path):
        rng = np.random.default_rng(47)
        arr = rng.integers(0, 65536, size=(6, 7), dtype=np.uint16)
        path = tmp_path / "x.png"
        write_image(path, arr)
        assert np.array_equal(read_image(path), arr)

    def test_npy_round_trip(self, tmp_path):
        arr = np.arange(24, dtype=np.uint8).reshape(4, 6)
        path = tmp_path / "x.npy"
        write_image(path, arr)
        assert np.array_equal(read_image(path), arr)

    def test_yuv420(self, tmp_path):
        w, h = 8, 4
        y = np.arange(w * h, dtype=np.uint8).reshape(h, w)
        u = np.full((h // 2, w // 2), 64, dtype=np.uint8)
        v = np.full((h // 2, w // 2), 192, dtype=np.uint8)
        path = tmp_path / "f.yuv"
        path.write_bytes(y.tobytes() + u.tobytes() + v.tobytes())
        ry, ru, rv = read_yuv(path, w, h, bit_depth=8, chroma="420")
        assert np.array_equal(ry, y)
        assert np.array_equal(ru, u)
        assert np.array_equal(rv, v)

    def test_yuv_truncated_file(self, tmp_path):
        path = tmp_path / "f.yuv"
        path.write_bytes(b"\x00" * 10)
        with pytest.raises(DataError):
            read_yuv(path, 8, 4)

    def test_yuv400(self, tmp_path):
        y = np.arange(32, dtype=np.uint8).reshape(4, 8)
        path = tmp_path / "f.yuv"
        path.write_bytes(y.tobytes())
        ry, ru, rv = read_yuv(path, 8, 4, chroma="400")
        assert np.array_equal(ry, y)
        assert ru is None and rv is None
