"""Assembles evaluation cells into RD curves, runs BD comparisons, emits reports.

A cell is one scored (training method, quality parameter) combination:
weighted AP plus bitrate statistics. Cells are materialized as files so that
scoring can happen elsewhere and be joined later. Reports are deterministic
byte for byte: fixed method ordering, two decimals for BD values, four for
weighted AP.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from .bd import BdResult, RdCurve, RdPoint, bd_metric, bd_rate, select_qp_subset
from .errors import DataError, ParseError
from .quality import BitrateStats, bitrate_of_run

REPORT_SCHEMA_VERSION = 1
CONFIG_SCHEMA_VERSION = 1

QP_SUBSETS = ("standard", "low_bitrate")


@dataclass(frozen=True)
class EvaluationCell:
    """One scored point of one method's sweep."""

    method: str
    qp: float
    weighted_ap: float
    bitrate: BitrateStats
    breakdown: object | None = None  # ApBreakdown when loaded from a metrics file
    detections_path: str = ""
    metrics_path: str = ""

    def __post_init__(self) -> None:
        if not 0.0 <= self.weighted_ap <= 1.0:
            raise DataError(
                f"cell {self.method}@q{self.qp:g}: weighted AP {self.weighted_ap} outside [0, 1]"
            )

    def to_point(self) -> RdPoint:
        return RdPoint(quality_param=self.qp, bitrate=self.bitrate, metric=self.weighted_ap)


def assemble_rd_curve(
    method: str,
    cells: Sequence[EvaluationCell],
    baseline_uncompressed: float | None = None,
) -> RdCurve:
    """Sort one method's cells into a curve; duplicate QPs or < 4 cells raise."""
    if len(cells) < 4:
        raise DataError(f"method {method!r}: need at least 4 cells, got {len(cells)}")
    qps = [c.qp for c in cells]
    if len(set(qps)) != len(qps):
        dupes = sorted({q for q in qps if qps.count(q) > 1})
        raise DataError(f"method {method!r}: duplicate QP(s) {dupes}")
    points = sorted((c.to_point() for c in cells), key=lambda p: p.rate)
    return RdCurve(method=method, points=tuple(points), baseline_uncompressed=baseline_uncompressed)


@dataclass(frozen=True)
class ComparisonReport:
    """BD deltas of every test method against one anchor, for one detector variant."""

    variant: str  # e.g. the detector the cells were scored with
    anchor: str
    curves: Mapping[str, RdCurve]  # anchor and test methods, insertion-ordered
    bd: Mapping[str, Mapping[str, BdResult]]  # method -> subset -> result
    baselines: Mapping[str, float] = field(default_factory=dict)
    monotonicity_flags: Mapping[str, tuple] = field(default_factory=dict)

    def test_methods(self) -> list[str]:
        return [m for m in self.curves if m != self.anchor]

    def to_json(self) -> str:
        return json.dumps(
            {
                "schema_version": REPORT_SCHEMA_VERSION,
                "variant": self.variant,
                "anchor": self.anchor,
                "curves": {m: c.to_json() for m, c in self.curves.items()},
                "bd": {
                    m: {s: r.to_json() for s, r in per_subset.items()}
                    for m, per_subset in self.bd.items()
                },
                "baselines": dict(self.baselines),
                "monotonicity_flags": {m: list(v) for m, v in self.monotonicity_flags.items()},
            },
            indent=1,
            sort_keys=True,
        )


def compare_methods(
    variant: str,
    anchor: str,
    cells_by_method: Mapping[str, Sequence[EvaluationCell]],
    baselines: Mapping[str, float] | None = None,
    subsets: Sequence[str] = QP_SUBSETS,
) -> ComparisonReport:
    """Build curves for every method and BD tables against the anchor.

    All methods must share the anchor's QP grid; a test method whose grid the
    anchor does not cover raises.
    """
    if anchor not in cells_by_method:
        raise DataError(f"anchor method {anchor!r} has no cells")
    for subset in subsets:
        if subset not in QP_SUBSETS:
            raise DataError(f"unknown QP subset {subset!r}")
    baselines = dict(baselines or {})

    curves: dict[str, RdCurve] = {}
    for method, cells in cells_by_method.items():
        curves[method] = assemble_rd_curve(method, cells, baselines.get(method))

    anchor_qps = set(curves[anchor].quality_params())
    for method, curve in curves.items():
        extra = set(curve.quality_params()) - anchor_qps
        if extra:
            raise DataError(
                f"anchor {anchor!r} is missing QP(s) {sorted(extra)} present in {method!r}"
            )

    bd: dict[str, dict[str, BdResult]] = {}
    for method, curve in curves.items():
        if method == anchor:
            continue
        per_subset = {}
        for subset in subsets:
            a = select_qp_subset(curves[anchor], subset)
            t = select_qp_subset(curve, subset)
            m = bd_metric(a, t)
            r = bd_rate(a, t)
            per_subset[subset] = BdResult(
                bd_metric_pp=m.bd_metric_pp,
                bd_rate_percent=r.bd_rate_percent,
                qp_subset=t.quality_params(),
                log_rate_overlap=m.log_rate_overlap,
            )
        bd[method] = per_subset

    flags = {m: c.monotonicity_violations() for m, c in curves.items() if c.monotonicity_violations()}
    return ComparisonReport(
        variant=variant,
        anchor=anchor,
        curves=curves,
        bd=bd,
        baselines=baselines,
        monotonicity_flags=flags,
    )


# ---------------------------------------------------------------------------
# Report emission
# ---------------------------------------------------------------------------

_SUBSET_TITLES = {
    "standard": "QP subset standard",
    "low_bitrate": "QP subset low-bitrate (four highest QPs)",
}


def _check_reports(reports: Sequence[ComparisonReport]) -> None:
    if not reports:
        raise DataError("emit_report needs at least one comparison report")
    anchors = {r.anchor for r in reports}
    if len(anchors) != 1:
        raise DataError(f"all reports must share one anchor, got {sorted(anchors)}")
    variants = [r.variant for r in reports]
    if len(set(variants)) != len(variants):
        raise DataError("report variant labels must be unique")


def _method_rows(reports: Sequence[ComparisonReport]) -> list[str]:
    rows: list[str] = []
    for report in reports:
        for method in report.test_methods():
            if method not in rows:
                rows.append(method)
    return rows


def _subsets_in(reports: Sequence[ComparisonReport]) -> list[str]:
    subsets: list[str] = []
    for report in reports:
        for per_subset in report.bd.values():
            for subset in per_subset:
                if subset not in subsets:
                    subsets.append(subset)
    return subsets


def _qp_label(reports: Sequence[ComparisonReport], subset: str) -> str:
    for report in reports:
        for per_subset in report.bd.values():
            if subset in per_subset:
                qps = per_subset[subset].qp_subset
                return ", ".join(f"{q:g}" for q in sorted(qps))
    return ""


def _bd_value(report: ComparisonReport, method: str, subset: str, which: str) -> str:
    result = report.bd.get(method, {}).get(subset)
    if result is None:
        return ""
    value = result.bd_metric_pp if which == "metric" else result.bd_rate_percent
    return f"{value:.2f}"


def render_markdown(reports: Sequence[ComparisonReport]) -> str:
    _check_reports(reports)
    rows = _method_rows(reports)
    lines = ["# Bjontegaard delta report", ""]
    lines.append(f"Anchor: {reports[0].anchor}")
    lines.append("")
    for subset in _subsets_in(reports):
        qps = _qp_label(reports, subset)
        for which, title, unit in (
            ("metric", "BD weighted AP", "percentage points"),
            ("rate", "BD rate", "percent"),
        ):
            lines.append(f"## {title} ({unit}), {_SUBSET_TITLES[subset]} ({qps})")
            lines.append("")
            if which == "rate":
                lines.append("Negative values represent bitrate savings compared to the anchor.")
                lines.append("")
            header = "| Training method | " + " | ".join(r.variant for r in reports) + " |"
            lines.append(header)
            lines.append("|" + "---|" * (len(reports) + 1))
            for method in rows:
                cells = [_bd_value(r, method, subset, which) for r in reports]
                lines.append("| " + method + " | " + " | ".join(cells) + " |")
            lines.append("")
    lines.append("## Uncompressed baselines (weighted AP)")
    lines.append("")
    for report in reports:
        for method, value in report.baselines.items():
            lines.append(f"- {report.variant} / {method}: {value:.4f}")
    lines.append("")
    for report in reports:
        if report.monotonicity_flags:
            lines.append(f"Monotonicity flags for {report.variant}: " + json.dumps(
                {m: list(v) for m, v in report.monotonicity_flags.items()}, sort_keys=True))
            lines.append("")
    return "\n".join(lines)


def render_csv(reports: Sequence[ComparisonReport]) -> str:
    _check_reports(reports)
    lines = ["table,qp_subset,training_method,variant,value"]
    for subset in _subsets_in(reports):
        for which, table in (("metric", "bd_weighted_ap_pp"), ("rate", "bd_rate_percent")):
            for method in _method_rows(reports):
                for report in reports:
                    value = _bd_value(report, method, subset, which)
                    if value:
                        lines.append(f"{table},{subset},{method},{report.variant},{value}")
    for report in reports:
        for method, value in report.baselines.items():
            lines.append(f"baseline_weighted_ap,,{method},{report.variant},{value:.4f}")
    return "\n".join(lines) + "\n"


def render_plotdata(report: ComparisonReport) -> str:
    """Wide CSV: per-method (bitrate, weighted AP) columns plus a baseline row."""
    methods = list(report.curves)
    header = ["row"]
    for method in methods:
        header += [f"{method}:bpp", f"{method}:weighted_ap"]
    lines = [",".join(header)]
    n_points = max(len(report.curves[m].points) for m in methods)
    for i in range(n_points):
        row = [f"point_{i}"]
        for method in methods:
            points = report.curves[method].points
            if i < len(points):
                row += [f"{points[i].rate:.6f}", f"{points[i].metric:.4f}"]
            else:
                row += ["", ""]
        lines.append(",".join(row))
    baseline_row = ["baseline_uncompressed"]
    for method in methods:
        value = report.baselines.get(method, report.curves[method].baseline_uncompressed)
        baseline_row += ["", f"{value:.4f}" if value is not None else ""]
    lines.append(",".join(baseline_row))
    return "\n".join(lines) + "\n"


def emit_report(
    reports: Sequence[ComparisonReport] | ComparisonReport,
    out_dir: str | Path,
    formats: Sequence[str] = ("markdown", "csv", "plotdata"),
) -> list[Path]:
    """Write report files with deterministic bytes; returns the written paths."""
    if isinstance(reports, ComparisonReport):
        reports = [reports]
    _check_reports(reports)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    canonical = out / "report.json"
    canonical.write_text(
        json.dumps(
            {
                "schema_version": REPORT_SCHEMA_VERSION,
                "reports": [json.loads(r.to_json()) for r in reports],
            },
            indent=1,
            sort_keys=True,
        )
    )
    written.append(canonical)

    for fmt in formats:
        if fmt == "markdown":
            path = out / "report.md"
            path.write_text(render_markdown(reports))
            written.append(path)
        elif fmt == "csv":
            path = out / "report.csv"
            path.write_text(render_csv(reports))
            written.append(path)
        elif fmt == "plotdata":
            for report in reports:
                safe = "".join(c if c.isalnum() or c in "-_" else "_" for c in report.variant)
                path = out / f"plotdata_{safe}.csv"
                path.write_text(render_plotdata(report))
                written.append(path)
        else:
            raise DataError(f"unknown report format {fmt!r}")
    return written


# ---------------------------------------------------------------------------
# Pipeline configuration: one JSON file names every cell's inputs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class PipelineConfig:
    anchor: str
    qp_grid: tuple[float, ...]
    variant: str
    cells_by_method: dict[str, list[EvaluationCell]]
    baselines: dict[str, float]
    gt_path: str = ""
    kind: str = "box"


def _cell_bitrate(spec: Mapping, base: Path) -> BitrateStats:
    if "bpp" in spec:
        return BitrateStats(
            mean_bpp=float(spec["bpp"]),
            mean_kbit_per_image=float(spec.get("kbit_per_image", 0.0)),
            n_images=int(spec.get("n_images", 0)),
        )
    if "run_dir" in spec:
        from .codec import load_runs

        runs = load_runs(base / spec["run_dir"])
        qp = float(spec["qp"])
        for run in runs:
            if run.quality_param == qp:
                return bitrate_of_run(run.sizes(), run.dims())
        raise ParseError(f"run directory {spec['run_dir']!r} holds no run at qp {qp:g}")
    if "sizes" in spec:
        return bitrate_of_run(
            [int(s) for s in spec["sizes"]], (int(spec["width"]), int(spec["height"]))
        )
    raise ParseError(f"cell bitrate spec {spec!r} needs bpp, run_dir, or sizes")


def load_pipeline_config(path: str | Path) -> PipelineConfig:
    """Read the single JSON file driving score, bd, and report runs."""
    path = Path(path)
    doc = json.loads(path.read_text())
    version = doc.get("schema_version")
    if version != CONFIG_SCHEMA_VERSION:
        raise ParseError(f"unsupported config schema_version {version!r}")
    base = path.parent

    cells_by_method: dict[str, list[EvaluationCell]] = {}
    baselines: dict[str, float] = {}
    for method in doc["methods"]:
        name = str(method["name"])
        if "baseline_uncompressed" in method:
            baselines[name] = float(method["baseline_uncompressed"])
        cells = []
        for cell in method["cells"]:
            metrics_path = base / cell["metrics"]
            scored = _metrics_from_file(metrics_path)
            cells.append(
                EvaluationCell(
                    method=name,
                    qp=float(cell["qp"]),
                    weighted_ap=scored.weighted_ap,
                    bitrate=_cell_bitrate(cell["bitrate"], base),
                    breakdown=scored.breakdown,
                    detections_path=str(cell.get("detections", "")),
                    metrics_path=str(metrics_path),
                )
            )
        cells_by_method[name] = cells

    return PipelineConfig(
        anchor=str(doc["anchor"]),
        qp_grid=tuple(float(q) for q in doc.get("qp_grid", ())),
        variant=str(doc.get("variant", "detector")),
        cells_by_method=cells_by_method,
        baselines=baselines,
        gt_path=str(doc.get("gt", "")),
        kind=str(doc.get("kind", "box")),
    )


def _metrics_from_file(path: Path):
    from .detection_metrics import parse_metric_report

    return parse_metric_report(path.read_text())
