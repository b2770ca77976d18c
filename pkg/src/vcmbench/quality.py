"""PSNR between pristine and decoded images, and bitrate accounting.

PSNR defaults to the luma-only policy: RGB inputs are converted to Y with
BT.601 weights before the mean squared error is taken, the usual practice in
codec evaluation. MAX is 2^bitdepth - 1. Identical inputs report +inf.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import DataError

BT601_WEIGHTS = (0.299, 0.587, 0.114)


def bt601_luma(rgb: np.ndarray) -> np.ndarray:
    """Y plane of an (H, W, 3) image in float64."""
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise DataError(f"expected an (H, W, 3) array, got shape {rgb.shape}")
    r, g, b = (rgb[..., i].astype(np.float64) for i in range(3))
    kr, kg, kb = BT601_WEIGHTS
    return kr * r + kg * g + kb * b


def _peak_value(arr: np.ndarray, max_value: float | None) -> float:
    if max_value is not None:
        return float(max_value)
    if arr.dtype == np.uint8:
        return 255.0
    if arr.dtype == np.uint16:
        return 65535.0
    raise DataError(
        f"cannot infer peak value for dtype {arr.dtype}; pass max_value explicitly"
    )


def psnr(
    original: np.ndarray,
    decoded: np.ndarray,
    policy: str = "luma",
    max_value: float | None = None,
) -> float:
    """10 * log10(MAX^2 / MSE) in dB; +inf for identical inputs."""
    a = np.asarray(original)
    b = np.asarray(decoded)
    if a.shape != b.shape:
        raise DataError(f"image shapes differ: {a.shape} vs {b.shape}")
    if a.dtype != b.dtype:
        raise DataError(f"image dtypes differ: {a.dtype} vs {b.dtype}")
    peak = _peak_value(a, max_value)

    if policy == "luma":
        if a.ndim == 3:
            a, b = bt601_luma(a), bt601_luma(b)
        elif a.ndim != 2:
            raise DataError(f"unsupported image shape {a.shape}")
    elif policy == "rgb_mean":
        if a.ndim not in (2, 3):
            raise DataError(f"unsupported image shape {a.shape}")
    else:
        raise DataError(f"unknown PSNR policy {policy!r}")

    diff = a.astype(np.float64) - b.astype(np.float64)
    mse = float(np.mean(diff * diff))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


@dataclass(frozen=True)
class BitrateStats:
    """Arithmetic means over the evaluated image set."""

    mean_bpp: float
    mean_kbit_per_image: float
    n_images: int

    def to_json(self) -> dict:
        return {
            "bpp": self.mean_bpp,
            "kbit_per_image": self.mean_kbit_per_image,
            "n_images": self.n_images,
        }


def bitrate_of_run(
    sizes_bytes: Sequence[int],
    dims: Sequence[tuple[int, int]] | tuple[int, int],
) -> BitrateStats:
    """Mean bits per pixel and mean kilobits per image for one compression run.

    ``dims`` is either one (width, height) applied to every bitstream or a
    per-image sequence. bpp_i = 8 * bytes_i / (w_i * h_i); kbit uses 1000 bits.
    """
    sizes = list(sizes_bytes)
    if not sizes:
        raise DataError("bitrate_of_run requires at least one bitstream")
    if isinstance(dims, tuple) and len(dims) == 2 and isinstance(dims[0], int):
        dims_list = [dims] * len(sizes)
    else:
        dims_list = list(dims)  # type: ignore[arg-type]
    if len(dims_list) != len(sizes):
        raise DataError("one (width, height) pair required per bitstream")

    bpp = []
    kbit = []
    for i, (size, (w, h)) in enumerate(zip(sizes, dims_list)):
        if size <= 0:
            raise DataError(f"bitstream {i} has non-positive size {size}")
        if w <= 0 or h <= 0:
            raise DataError(f"bitstream {i} has non-positive dimensions {w}x{h}")
        bits = 8.0 * size
        bpp.append(bits / (w * h))
        kbit.append(bits / 1000.0)
    return BitrateStats(
        mean_bpp=float(np.mean(bpp)),
        mean_kbit_per_image=float(np.mean(kbit)),
        n_images=len(sizes),
    )


# ---------------------------------------------------------------------------
# Image reading: 8/16-bit PNG, .npy arrays, raw planar YUV
# ---------------------------------------------------------------------------


def read_image(path: str | Path) -> np.ndarray:
    """Load a PNG or .npy image as a numpy array (grayscale 2-d or RGB 3-d)."""
    path = Path(path)
    if path.suffix == ".npy":
        return np.load(path)
    from PIL import Image

    with Image.open(path) as img:
        if img.mode == "I;16":
            return np.asarray(img, dtype=np.uint16)
        if img.mode in ("L", "RGB"):
            return np.asarray(img)
        if img.mode in ("RGBA", "P", "I"):
            return np.asarray(img.convert("RGB"))
        raise DataError(f"unsupported PNG mode {img.mode!r} in {path}")


def write_image(path: str | Path, arr: np.ndarray) -> None:
    path = Path(path)
    if path.suffix == ".npy":
        np.save(path, arr)
        return
    from PIL import Image

    Image.fromarray(arr).save(path)


def read_yuv(
    path: str | Path,
    width: int,
    height: int,
    bit_depth: int = 8,
    chroma: str = "420",
) -> tuple[np.ndarray, np.ndarray | None, np.ndarray | None]:
    """Read the first frame of a raw planar YUV file.

    Returns (y, u, v); u and v are None for chroma format "400". Samples are
    uint8 for bit depths up to 8 and uint16 (little endian) above.
    """
    if width <= 0 or height <= 0:
        raise DataError("YUV dimensions must be positive")
    dtype = np.uint8 if bit_depth <= 8 else np.uint16
    divisors = {"400": None, "420": 2, "422": (2, 1), "444": 1}
    if chroma not in divisors:
        raise DataError(f"unsupported chroma format {chroma!r}")

    data = np.fromfile(str(path), dtype=dtype)
    y_size = width * height
    if chroma == "400":
        cw = ch = 0
    elif chroma == "420":
        cw, ch = width // 2, height // 2
    elif chroma == "422":
        cw, ch = width // 2, height
    else:
        cw, ch = width, height
    needed = y_size + 2 * cw * ch
    if data.size < needed:
        raise DataError(
            f"YUV file holds {data.size} samples, expected at least {needed} "
            f"for {width}x{height} {chroma} at {bit_depth} bit"
        )
    y = data[:y_size].reshape((height, width))
    if chroma == "400":
        return y, None, None
    u = data[y_size : y_size + cw * ch].reshape((ch, cw))
    v = data[y_size + cw * ch : needed].reshape((ch, cw))
    return y, u, v
