"""Drives external encoder/decoder executables over image sets.

Codec specifics live entirely in a profile: command templates with
placeholders, a quality axis, and output naming conventions. The orchestrator
renders commands without any shell, isolates per-item failures, caches
completed items by content hash, and runs items on a bounded worker pool.
Executables resolve through VCMBENCH_CODEC_DIR first, then PATH.
"""
from __future__ import annotations

import hashlib
import json
import os
import re
import shlex
import shutil
import subprocess
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

from .errors import CodecError, DataError, ParseError
from .quality import psnr, read_image

PROFILE_SCHEMA_VERSION = 1
RUNS_SCHEMA_VERSION = 1
DEFAULT_QP_SWEEP = (22, 27, 32, 37, 42, 47)

_PLACEHOLDER = re.compile(r"\{([a-zA-Z_]+)\}")
_KNOWN_PLACEHOLDERS = {"input", "output", "qp", "quality", "width", "height"}


@dataclass(frozen=True)
class QualityAxis:
    kind: str  # "qp_integer" | "continuous_quality"
    lo: float
    hi: float

    def __post_init__(self) -> None:
        if self.kind not in ("qp_integer", "continuous_quality"):
            raise ParseError(f"unknown quality axis kind {self.kind!r}")
        if not self.lo < self.hi:
            raise ParseError(f"quality axis range [{self.lo}, {self.hi}] is empty")

    @property
    def placeholder(self) -> str:
        return "qp" if self.kind == "qp_integer" else "quality"


@dataclass(frozen=True)
class CodecProfile:
    """External codec description: how to encode, decode, and name things."""

    name: str
    encode_template: str
    decode_template: str
    quality_axis: QualityAxis
    intra_only: bool = True
    bitstream_extension: str = "bin"
    decoded_extension: str = "png"

    def __post_init__(self) -> None:
        for label, template in (("encode", self.encode_template), ("decode", self.decode_template)):
            names = _PLACEHOLDER.findall(template)
            unknown = sorted(set(names) - _KNOWN_PLACEHOLDERS)
            if unknown:
                raise ParseError(f"{label} template: unknown placeholder(s) {unknown}")
            for required in ("input", "output"):
                if names.count(required) != 1:
                    raise ParseError(
                        f"{label} template must reference {{{required}}} exactly once, "
                        f"found {names.count(required)}"
                    )
        enc_names = set(_PLACEHOLDER.findall(self.encode_template))
        want = self.quality_axis.placeholder
        other = "quality" if want == "qp" else "qp"
        if want not in enc_names:
            raise ParseError(f"encode template must reference {{{want}}} for this quality axis")
        if other in enc_names:
            raise ParseError(
                f"encode template references {{{other}}}, inconsistent with the "
                f"{self.quality_axis.kind} axis"
            )

    def content_hash(self) -> str:
        return hashlib.sha256(self.to_json().encode("utf-8")).hexdigest()

    def to_json(self) -> str:
        return json.dumps(
            {
                "schema_version": PROFILE_SCHEMA_VERSION,
                "name": self.name,
                "encode_template": self.encode_template,
                "decode_template": self.decode_template,
                "quality_axis": {
                    "kind": self.quality_axis.kind,
                    "min": self.quality_axis.lo,
                    "max": self.quality_axis.hi,
                },
                "intra_only": self.intra_only,
                "bitstream_extension": self.bitstream_extension,
                "decoded_extension": self.decoded_extension,
            },
            indent=1,
            sort_keys=True,
        )

    @classmethod
    def from_json(cls, data: bytes | str) -> "CodecProfile":
        if isinstance(data, bytes):
            data = data.decode("utf-8")
        try:
            doc = json.loads(data)
        except json.JSONDecodeError as exc:
            raise ParseError(f"profile: not valid JSON: {exc}") from exc
        version = doc.get("schema_version")
        if version != PROFILE_SCHEMA_VERSION:
            raise ParseError(f"unsupported profile schema_version {version!r}")
        axis = doc["quality_axis"]
        return cls(
            name=str(doc["name"]),
            encode_template=str(doc["encode_template"]),
            decode_template=str(doc["decode_template"]),
            quality_axis=QualityAxis(
                kind=str(axis["kind"]), lo=float(axis["min"]), hi=float(axis["max"])
            ),
            intra_only=bool(doc.get("intra_only", True)),
            bitstream_extension=str(doc.get("bitstream_extension", "bin")),
            decoded_extension=str(doc.get("decoded_extension", "png")),
        )

    @classmethod
    def load(cls, path: str | Path) -> "CodecProfile":
        return cls.from_json(Path(path).read_bytes())


def render_command(template: str, bindings: Mapping[str, object]) -> list[str]:
    """Substitute placeholders into a whitespace-tokenized template.

    Tokenization happens before substitution, so a binding containing spaces
    stays one argv token. No shell is ever involved.
    """
    rendered = []
    for token in shlex.split(template):
        def _sub(match: re.Match) -> str:
            name = match.group(1)
            if name not in _KNOWN_PLACEHOLDERS:
                raise CodecError(f"unknown placeholder {{{name}}} in template {template!r}")
            if name not in bindings:
                raise CodecError(f"unbound placeholder {{{name}}} in template {template!r}")
            return str(bindings[name])

        rendered.append(_PLACEHOLDER.sub(_sub, token))
    return rendered


def _resolve_executable(argv: list[str]) -> list[str]:
    exe = argv[0]
    codec_dir = os.environ.get("VCMBENCH_CODEC_DIR")
    if codec_dir:
        candidate = Path(codec_dir) / exe
        if candidate.exists():
            return [str(candidate)] + argv[1:]
    found = shutil.which(exe)
    if found:
        return [found] + argv[1:]
    return argv


def _sha256_file(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def probe_image_size(path: Path) -> tuple[int, int]:
    """(width, height) of a PNG or .npy image."""
    if path.suffix == ".npy":
        import numpy as np

        shape = np.load(path, mmap_mode="r").shape
        return int(shape[1]), int(shape[0])
    from PIL import Image

    with Image.open(path) as img:
        return img.size


def format_quality(q: float) -> str:
    return str(int(q)) if float(q).is_integer() else str(q)


@dataclass(frozen=True)
class ItemRecord:
    """Outcome of encoding and decoding one image at one quality level."""

    image_id: str
    input_path: str
    quality_param: float
    width: int
    height: int
    bitstream_path: str
    decoded_path: str
    bitstream_bytes: int
    wall_time_s: float
    status: str  # "ok" | "cached" | "failed"
    input_sha256: str
    bitstream_sha256: str = ""
    error: str = ""
    nondeterministic: bool = False

    def to_json(self) -> dict:
        return {
            "image_id": self.image_id,
            "input_path": self.input_path,
            "quality_param": self.quality_param,
            "width": self.width,
            "height": self.height,
            "bitstream_path": self.bitstream_path,
            "decoded_path": self.decoded_path,
            "bitstream_bytes": self.bitstream_bytes,
            "wall_time_s": self.wall_time_s,
            "status": self.status,
            "input_sha256": self.input_sha256,
            "bitstream_sha256": self.bitstream_sha256,
            "error": self.error,
            "nondeterministic": self.nondeterministic,
        }

    @classmethod
    def from_json(cls, obj: Mapping) -> "ItemRecord":
        return cls(**{k: obj[k] for k in cls.__dataclass_fields__ if k in obj})


@dataclass(frozen=True)
class CompressionRun:
    """All per-image records for one profile at one quality level."""

    profile_name: str
    quality_param: float
    items: tuple[ItemRecord, ...]

    @property
    def ok(self) -> bool:
        return all(item.status != "failed" for item in self.items)

    def sizes(self) -> list[int]:
        return [item.bitstream_bytes for item in self.items]

    def dims(self) -> list[tuple[int, int]]:
        return [(item.width, item.height) for item in self.items]


def _meta_path(out_dir: Path, stem: str, qstr: str) -> Path:
    return out_dir / f"{stem}_qp{qstr}.json"


def _load_meta(path: Path) -> dict | None:
    try:
        return json.loads(path.read_text())
    except (OSError, json.JSONDecodeError):
        return None


def _run_one(
    image: Path,
    q: float,
    profile: CodecProfile,
    out_dir: Path,
    profile_hash: str,
) -> ItemRecord:
    stem = image.stem
    qstr = format_quality(q)
    bitstream = out_dir / f"{stem}_qp{qstr}.{profile.bitstream_extension}"
    decoded = out_dir / f"{stem}_qp{qstr}.{profile.decoded_extension}"
    meta_file = _meta_path(out_dir, stem, qstr)

    input_sha = _sha256_file(image)
    width, height = probe_image_size(image)

    old_meta = _load_meta(meta_file)
    keys_match = old_meta is not None and (
        old_meta.get("input_sha256") == input_sha
        and old_meta.get("profile_sha256") == profile_hash
        and old_meta.get("quality_param") == q
    )
    if keys_match and bitstream.exists() and decoded.exists():
        if bitstream.stat().st_size == old_meta["bitstream_bytes"]:
            return ItemRecord(
                image_id=stem,
                input_path=str(image),
                quality_param=q,
                width=width,
                height=height,
                bitstream_path=str(bitstream),
                decoded_path=str(decoded),
                bitstream_bytes=int(old_meta["bitstream_bytes"]),
                wall_time_s=float(old_meta.get("wall_time_s", 0.0)),
                status="cached",
                input_sha256=input_sha,
                bitstream_sha256=str(old_meta.get("bitstream_sha256", "")),
            )

    bindings = {
        "input": str(image),
        "output": str(bitstream),
        profile.quality_axis.placeholder: qstr,
        "width": width,
        "height": height,
    }
    start = time.perf_counter()
    try:
        _invoke(profile.encode_template, bindings)
        bindings["input"], bindings["output"] = str(bitstream), str(decoded)
        _invoke(profile.decode_template, bindings)
    except CodecError as exc:
        return ItemRecord(
            image_id=stem,
            input_path=str(image),
            quality_param=q,
            width=width,
            height=height,
            bitstream_path=str(bitstream),
            decoded_path=str(decoded),
            bitstream_bytes=0,
            wall_time_s=time.perf_counter() - start,
            status="failed",
            input_sha256=input_sha,
            error=str(exc),
        )
    wall = time.perf_counter() - start

    bitstream_sha = _sha256_file(bitstream)
    nondet = bool(keys_match and old_meta.get("bitstream_sha256") not in ("", bitstream_sha))
    record = ItemRecord(
        image_id=stem,
        input_path=str(image),
        quality_param=q,
        width=width,
        height=height,
        bitstream_path=str(bitstream),
        decoded_path=str(decoded),
        bitstream_bytes=bitstream.stat().st_size,
        wall_time_s=wall,
        status="ok",
        input_sha256=input_sha,
        bitstream_sha256=bitstream_sha,
        nondeterministic=nondet,
    )
    meta = dict(record.to_json())
    meta["schema_version"] = RUNS_SCHEMA_VERSION
    meta["profile_sha256"] = profile_hash
    meta_file.write_text(json.dumps(meta, indent=1, sort_keys=True))
    return record


def _invoke(template: str, bindings: Mapping[str, object]) -> None:
    argv = _resolve_executable(render_command(template, bindings))
    try:
        proc = subprocess.run(argv, capture_output=True, text=True)
    except OSError as exc:
        raise CodecError(f"cannot launch {argv[0]!r}: {exc}") from exc
    if proc.returncode != 0:
        tail = (proc.stderr or proc.stdout or "").strip()[-2000:]
        raise CodecError(f"{argv[0]} exited with {proc.returncode}: {tail}")


def run_sweep(
    images: Sequence[str | Path],
    profile: CodecProfile,
    out_dir: str | Path,
    qps: Sequence[float] = DEFAULT_QP_SWEEP,
    parallelism: int = 1,
    strict: bool = False,
) -> list[CompressionRun]:
    """Encode and decode every (image, quality) pair, skipping cached items.

    Items are independent; any degree of parallelism yields the same records.
    A failed item never aborts its siblings unless ``strict`` is set, in which
    case the whole sweep raises after all items finished.
    """
    paths = [Path(p) for p in images]
    if not paths:
        raise DataError("run_sweep needs at least one input image")
    stems = [p.stem for p in paths]
    if len(set(stems)) != len(stems):
        raise DataError("input image stems must be unique within a sweep")
    if len(set(float(q) for q in qps)) != len(list(qps)):
        raise DataError("quality values must be unique within a sweep")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    profile_hash = profile.content_hash()

    work = [(img, float(q)) for q in qps for img in paths]
    if parallelism <= 1:
        records = [_run_one(img, q, profile, out, profile_hash) for img, q in work]
    else:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            records = list(
                pool.map(lambda iq: _run_one(iq[0], iq[1], profile, out, profile_hash), work)
            )

    records.sort(key=lambda r: (r.quality_param, r.image_id))
    runs = [
        CompressionRun(
            profile_name=profile.name,
            quality_param=float(q),
            items=tuple(r for r in records if r.quality_param == float(q)),
        )
        for q in qps
    ]
    failures = [r for r in records if r.status == "failed"]
    if failures and strict:
        lines = "; ".join(f"{r.image_id}@q{format_quality(r.quality_param)}: {r.error}" for r in failures[:5])
        raise CodecError(f"{len(failures)} item(s) failed: {lines}")
    return runs


def write_runs(out_dir: str | Path, runs: Sequence[CompressionRun], profile: CodecProfile) -> Path:
    doc = {
        "schema_version": RUNS_SCHEMA_VERSION,
        "profile": json.loads(profile.to_json()),
        "runs": [
            {
                "profile_name": run.profile_name,
                "quality_param": run.quality_param,
                "items": [item.to_json() for item in run.items],
            }
            for run in runs
        ],
    }
    path = Path(out_dir) / "runs.json"
    path.write_text(json.dumps(doc, indent=1, sort_keys=True))
    return path


def load_runs(path: str | Path) -> list[CompressionRun]:
    path = Path(path)
    if path.is_dir():
        path = path / "runs.json"
    doc = json.loads(path.read_text())
    version = doc.get("schema_version")
    if version != RUNS_SCHEMA_VERSION:
        raise ParseError(f"unsupported runs schema_version {version!r}")
    return [
        CompressionRun(
            profile_name=str(run["profile_name"]),
            quality_param=float(run["quality_param"]),
            items=tuple(ItemRecord.from_json(item) for item in run["items"]),
        )
        for run in doc["runs"]
    ]


# ---------------------------------------------------------------------------
# Target-PSNR search
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SearchResult:
    quality: float
    psnr_db: float
    probes: tuple[tuple[float, float], ...]
    converged: bool


class SearchError(DataError):
    """Bisection could not bracket or verify the target; carries probe history."""

    def __init__(self, message: str, probes: Sequence[tuple[float, float]]):
        history = ", ".join(f"q={q:g}: {p:.3f} dB" for q, p in probes)
        super().__init__(f"{message} (probes so far: {history})")
        self.probes = tuple(probes)


def search_quality_for_target_psnr(
    image: str | Path,
    profile: CodecProfile,
    target_db: float,
    tol: float = 0.2,
    max_iter: int = 20,
    work_dir: str | Path | None = None,
    probe: Callable[[float], float] | None = None,
    monotonic_slack: float = 0.05,
) -> SearchResult:
    """Bisect the quality axis until the decoded PSNR is within ``tol`` of target.

    The PSNR is assumed monotone along the axis; every probe is checked against
    its bracket and a violation beyond ``monotonic_slack`` dB raises with the
    probe history. On an exhausted iteration budget the closest probe is
    returned with ``converged=False``.
    """
    if probe is None:
        probe = _make_codec_probe(Path(image), profile, work_dir)
    axis = profile.quality_axis
    integer_axis = axis.kind == "qp_integer"

    probes: list[tuple[float, float]] = []

    def take(q: float) -> float:
        value = probe(q)
        probes.append((q, value))
        return value

    def finished(q: float, p: float) -> SearchResult:
        return SearchResult(quality=q, psnr_db=p, probes=tuple(probes), converged=True)

    lo, hi = axis.lo, axis.hi
    p_lo = take(lo)
    if abs(p_lo - target_db) <= tol:
        return finished(lo, p_lo)
    if len(probes) < max_iter:
        p_hi = take(hi)
        if abs(p_hi - target_db) <= tol:
            return finished(hi, p_hi)
        if not min(p_lo, p_hi) <= target_db <= max(p_lo, p_hi):
            raise SearchError(
                f"target {target_db} dB outside the achievable range "
                f"[{min(p_lo, p_hi):.3f}, {max(p_lo, p_hi):.3f}]",
                probes,
            )
        while len(probes) < max_iter:
            mid = (lo + hi) / 2.0
            if integer_axis:
                mid = float(round(mid))
            if mid == lo or mid == hi:
                break
            p_mid = take(mid)
            if abs(p_mid - target_db) <= tol:
                return finished(mid, p_mid)
            lo_side, hi_side = min(p_lo, p_hi), max(p_lo, p_hi)
            if p_mid < lo_side - monotonic_slack or p_mid > hi_side + monotonic_slack:
                raise SearchError(
                    f"PSNR at q={mid:g} ({p_mid:.3f} dB) falls outside its bracket "
                    f"[{lo_side:.3f}, {hi_side:.3f}]; the axis is not monotone",
                    probes,
                )
            if (p_mid < target_db) == (p_lo < target_db):
                lo, p_lo = mid, p_mid
            else:
                hi, p_hi = mid, p_mid

    best_q, best_p = min(probes, key=lambda t: abs(t[1] - target_db))
    return SearchResult(quality=best_q, psnr_db=best_p, probes=tuple(probes), converged=False)


def _make_codec_probe(image: Path, profile: CodecProfile, work_dir) -> Callable[[float], float]:
    original = read_image(image)
    base = Path(work_dir) if work_dir is not None else Path(tempfile.mkdtemp(prefix="vcm-search-"))
    base.mkdir(parents=True, exist_ok=True)

    def probe(q: float) -> float:
        qstr = format_quality(q)
        bitstream = base / f"{image.stem}_q{qstr}.{profile.bitstream_extension}"
        decoded = base / f"{image.stem}_q{qstr}.{profile.decoded_extension}"
        bindings = {
            "input": str(image),
            "output": str(bitstream),
            profile.quality_axis.placeholder: qstr,
            "width": original.shape[1],
            "height": original.shape[0],
        }
        _invoke(profile.encode_template, bindings)
        bindings["input"], bindings["output"] = str(bitstream), str(decoded)
        _invoke(profile.decode_template, bindings)
        return psnr(original, read_image(decoded), policy="luma")

    return probe
