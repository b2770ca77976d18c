"""
Sweeping a codec over an image set
==================================

Drives the bundled mock codec (a stand-in for VTM or JPEG2000 binaries)
over a QP grid, collects bitstream sizes into bitrate statistics, and
searches the quality axis for a target PSNR the way the JPEG2000 grid
of operating points is built.
"""

import sys
import tempfile
from pathlib import Path

import numpy as np

from vcmbench import CodecProfile, QualityAxis, bitrate_of_run, run_sweep, search_quality_for_target_psnr
from vcmbench.quality import write_image

work = Path(tempfile.mkdtemp(prefix="vcm-demo-"))
print(f"working under {work}")

# Two small synthetic camera frames.
frames = []
for i in range(2):
    ramp = (np.arange(96, dtype=np.uint16) * 2 + 40 * i) % 200 + 20
    frame = np.tile(ramp, (64, 1)).astype(np.uint8)
    path = work / f"frame{i}.png"
    write_image(path, frame)
    frames.append(path)

# Profiles hold the command templates; this one invokes the mock codec with
# a size model that halves the bitstream every 5 QP.
runner = f"{sys.executable} -m vcmbench.mock_codec"
profile = CodecProfile(
    name="mock",
    encode_template=f"{runner} encode --input {{input}} --output {{output}} --qp {{qp}} --size-base-bytes 16384",
    decode_template=f"{runner} decode --input {{input}} --output {{output}}",
    quality_axis=QualityAxis(kind="qp_integer", lo=0, hi=63),
)

runs = run_sweep(frames, profile, work / "runs", qps=(22, 27, 32, 37, 42, 47), parallelism=4)
for run in runs:
    stats = bitrate_of_run(run.sizes(), run.dims())
    print(f"  QP {run.quality_param:>4.0f}: {stats.mean_bpp:7.3f} bpp, "
          f"{stats.mean_kbit_per_image:8.2f} kbit/image")

# Rerunning hits the content-hash cache instead of invoking the codec again.
again = run_sweep(frames, profile, work / "runs", qps=(22, 27, 32, 37, 42, 47))
cached = sum(1 for r in again for item in r.items if item.status == "cached")
print(f"rerun: {cached} of {sum(len(r.items) for r in again)} items served from cache")

# Target-PSNR search bisects a continuous quality axis.
quality_profile = CodecProfile(
    name="mock-quality",
    encode_template=f"{runner} encode --input {{input}} --output {{output}} --quality {{quality}}",
    decode_template=f"{runner} decode --input {{input}} --output {{output}}",
    quality_axis=QualityAxis(kind="continuous_quality", lo=0, hi=100),
)
for target in (33, 37, 45):
    result = search_quality_for_target_psnr(frames[0], quality_profile, float(target),
                                            work_dir=work / "search")
    print(f"  target {target} dB -> quality {result.quality:6.2f} "
          f"achieving {result.psnr_db:5.2f} dB in {len(result.probes)} probes")
