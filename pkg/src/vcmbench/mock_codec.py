"""A deterministic stand-in codec with analytic distortion and size behavior.

The decoded image follows the linear model ``psnr = base + slope * q``
(defaults: 60 - 0.8q when driven by --qp, 20 + q/2 when driven by --quality).
Perturbation magnitudes are dithered between two adjacent integers so the
realized mean squared error matches the model to within one part in 2N; signs
alternate per pixel and reflect at the value range, preserving magnitudes
exactly. The model is exact for single-plane images; on RGB input the
luma-PSNR deviates slightly because channel errors partially cancel.

The bitstream stores the source image losslessly plus the distortion
parameters; the decoder synthesizes the degraded image. An optional size
model pads each bitstream to
``round(base_bytes * 2 ** (-(q - anchor) / halving_step))`` bytes, so
recorded sizes follow the configured curve exactly.

Usage:
    vcm-mock-codec encode --input in.png --output out.bin --qp 37 [options]
    vcm-mock-codec decode --input out.bin --output dec.png
"""
from __future__ import annotations

import argparse
import struct
import sys
import zlib
from pathlib import Path

import numpy as np

MAGIC = b"VCMK"
VERSION = 1
# magic, version, dtype, channels, pad, width, height, quality, psnr_db, payload length
_HEADER = struct.Struct("<4sBBBBIIddQ")


def _read_array(path: Path) -> np.ndarray:
    if path.suffix == ".npy":
        return np.load(path)
    from PIL import Image

    with Image.open(path) as img:
        if img.mode == "I;16":
            return np.asarray(img, dtype=np.uint16)
        if img.mode not in ("L", "RGB"):
            img = img.convert("RGB")
        return np.asarray(img)


def _write_array(path: Path, arr: np.ndarray) -> None:
    if path.suffix == ".npy":
        np.save(path, arr)
        return
    from PIL import Image

    Image.fromarray(arr).save(path)


def distort(arr: np.ndarray, psnr_db: float) -> np.ndarray:
    """Perturb so the mean squared error hits MAX^2 / 10^(psnr/10)."""
    peak = 255.0 if arr.dtype == np.uint8 else 65535.0
    target_mse = peak * peak / (10.0 ** (psnr_db / 10.0))
    flat = arr.astype(np.int64).ravel()
    n = flat.size

    d0 = int(np.floor(np.sqrt(target_mse)))
    frac = (target_mse - d0 * d0) / (2 * d0 + 1)
    n_hi = int(round(frac * n))

    delta = np.full(n, d0, dtype=np.int64)
    delta[:n_hi] = d0 + 1
    sign = np.where(np.arange(n) % 2 == 0, 1, -1)

    perturbed = flat + sign * delta
    over = (perturbed > peak) | (perturbed < 0)
    perturbed[over] = flat[over] - sign[over] * delta[over]
    return perturbed.reshape(arr.shape).astype(arr.dtype)


def encode(args: argparse.Namespace) -> int:
    arr = _read_array(Path(args.input))
    q = args.qp if args.qp is not None else args.quality
    if args.qp is not None:
        base = args.psnr_base if args.psnr_base is not None else 60.0
        slope = args.psnr_slope if args.psnr_slope is not None else -0.8
    else:
        base = args.psnr_base if args.psnr_base is not None else 20.0
        slope = args.psnr_slope if args.psnr_slope is not None else 0.5
    psnr_db = base + slope * q

    payload = zlib.compress(np.ascontiguousarray(arr).tobytes(), 6)
    dtype_code = 0 if arr.dtype == np.uint8 else 1
    channels = 1 if arr.ndim == 2 else arr.shape[2]
    h, w = arr.shape[:2]
    blob = _HEADER.pack(MAGIC, VERSION, dtype_code, channels, 0, w, h, float(q), psnr_db, len(payload))
    blob += payload

    if args.size_base_bytes is not None:
        target = int(
            round(args.size_base_bytes * 2.0 ** (-(q - args.size_anchor_q) / args.size_halving_step))
        )
        if target < len(blob):
            print(
                f"mock codec: size model wants {target} bytes but the payload needs {len(blob)}",
                file=sys.stderr,
            )
            return 3
        blob += b"\x00" * (target - len(blob))

    Path(args.output).write_bytes(blob)
    return 0


def decode(args: argparse.Namespace) -> int:
    blob = Path(args.input).read_bytes()
    if len(blob) < _HEADER.size or blob[:4] != MAGIC:
        print("mock codec: not a mock bitstream", file=sys.stderr)
        return 3
    _, version, dtype_code, channels, _, w, h, _, psnr_db, payload_len = _HEADER.unpack_from(blob)
    if version != VERSION:
        print(f"mock codec: unsupported bitstream version {version}", file=sys.stderr)
        return 3
    raw = zlib.decompress(blob[_HEADER.size : _HEADER.size + payload_len])
    dtype = np.uint8 if dtype_code == 0 else np.uint16
    shape = (h, w) if channels == 1 else (h, w, channels)
    arr = np.frombuffer(raw, dtype=dtype).reshape(shape)
    _write_array(Path(args.output), distort(arr, psnr_db))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vcm-mock-codec",
        description="deterministic mock image codec with analytic PSNR and size models",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    enc = sub.add_parser("encode", help="write a mock bitstream for an image")
    enc.add_argument("--input", required=True)
    enc.add_argument("--output", required=True)
    group = enc.add_mutually_exclusive_group(required=True)
    group.add_argument("--qp", type=float)
    group.add_argument("--quality", type=float)
    enc.add_argument("--psnr-base", type=float, default=None)
    enc.add_argument("--psnr-slope", type=float, default=None)
    enc.add_argument("--size-base-bytes", type=int, default=None)
    enc.add_argument("--size-halving-step", type=float, default=5.0)
    enc.add_argument("--size-anchor-q", type=float, default=22.0)
    enc.set_defaults(func=encode)

    dec = sub.add_parser("decode", help="reconstruct the degraded image from a mock bitstream")
    dec.add_argument("--input", required=True)
    dec.add_argument("--output", required=True)
    dec.set_defaults(func=decode)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except Exception as exc:  # a mock codec should fail loudly but cleanly
        print(f"mock codec: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
