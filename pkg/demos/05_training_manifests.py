"""
Compression-augmented training manifests
========================================

The two robust-training regimes are emitted as machine-readable
descriptors: a mixed manifest interleaving pristine images with their
compressed variants at every quality level, and a two-phase schedule that
fine-tunes a pristine-trained model on compressed data. Nothing here runs
training; a trainer consumes these files.
"""

import json

from vcmbench import ImageRecord, build_augmented_manifest, build_finetune_schedule, validate_manifest
from vcmbench.codec import CompressionRun, ItemRecord

# Stand-in compression runs as the sweep orchestrator would record them.
pristine = [ImageRecord(image_id=f"city_{i:04d}", width=2048, height=1024) for i in range(8)]
runs = [
    CompressionRun(
        profile_name="vtm",
        quality_param=float(qp),
        items=tuple(
            ItemRecord(
                image_id=rec.image_id, input_path=f"in/{rec.image_id}.png",
                quality_param=float(qp), width=2048, height=1024,
                bitstream_path=f"out/{rec.image_id}_qp{qp}.bin",
                decoded_path=f"out/{rec.image_id}_qp{qp}.png",
                bitstream_bytes=250_000 >> (qp // 10), wall_time_s=0.0,
                status="ok", input_sha256="",
            )
            for rec in pristine
        ),
    )
    for qp in (22, 27, 32, 37, 42, 47)
]

# Mixed augmentation: every quality level contributes as many images as the
# pristine set, one phase, detector-specific iteration defaults.
manifest = build_augmented_manifest("demo-train", pristine, runs, detector="faster_rcnn")
print(f"manifest: {len(manifest.images)} image records "
      f"({len(pristine)} pristine x {1 + len(runs)} variants)")
print(f"phase: {manifest.phases[0].label}, {manifest.phases[0].iterations} iterations")
print(f"validation: {'clean' if validate_manifest(manifest).ok else 'violations!'}")

# Two-phase fine-tuning schedules with the per-detector defaults.
for detector in ("faster_rcnn", "mask_rcnn"):
    schedule = build_finetune_schedule(detector)
    phases = " then ".join(f"{p.iterations} {p.label}" for p in schedule.phases)
    print(f"{detector}: {phases} iterations, "
          f"hyperparameters {json.dumps(dict(schedule.hyperparameters))}")
