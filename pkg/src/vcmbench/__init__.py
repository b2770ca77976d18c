"""Rate-accuracy benchmarking toolkit for detection networks on compressed images.

Core pieces: annotation/result parsers, box and mask geometry, class-weighted
average precision, PSNR and bitrate accounting, Bjontegaard deltas over
(bitrate, weighted AP) curves, an external-codec sweep orchestrator with a
bundled mock codec, training-manifest builders, and a CLI tying them together.
"""

__version__ = "0.1.0"

from .augmentation import TrainingPhase, TrainingSchedule, build_augmented_manifest, build_finetune_schedule
from .bd import BdResult, RdCurve, RdPoint, bd_deltas, bd_metric, bd_rate, select_qp_subset
from .codec import (
    CodecProfile,
    CompressionRun,
    QualityAxis,
    render_command,
    run_sweep,
    search_quality_for_target_psnr,
)
from .datamodel import (
    ClassTable,
    DatasetManifest,
    Detection,
    DetectionSet,
    GroundTruthSet,
    GtInstance,
    ImageRecord,
    convert_cityscapes_polygons,
    parse_detections,
    parse_ground_truth,
    serialize_detections,
    serialize_ground_truth,
    validate_manifest,
)
from .detection_metrics import (
    ApBreakdown,
    MatchResult,
    ap_per_class,
    average_precision,
    class_weights,
    evaluate,
    match_detections,
    weighted_ap,
)
from .errors import BdError, CodecError, DataError, ParseError, VcmBenchError
from .geometry import RleMask, bbox_iou, mask_iou, rasterize_polygon, rle_decode, rle_encode
from .quality import BitrateStats, bitrate_of_run, psnr, read_image, read_yuv
from .rd_pipeline import (
    ComparisonReport,
    EvaluationCell,
    assemble_rd_curve,
    compare_methods,
    emit_report,
)

__all__ = [name for name in dir() if not name.startswith("_")]
