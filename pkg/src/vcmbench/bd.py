"""Bjontegaard deltas between two rate-accuracy curves.

The distortion axis here is weighted AP in [0, 1] instead of PSNR. Given four
(bitrate, metric) points per curve, each curve is interpolated by the exact
cubic polynomial through its points (a Vandermonde solve, the classic
formulation), rates on a log10 axis. Both interpolants are integrated in
closed form over the overlapping interval:

* bd_metric: mean metric difference at equal rate, reported in percentage
  points (metric scaled by 100 only at this reporting boundary);
* bd_rate: mean log-rate difference at equal metric, reported as
  (10 ** mean_diff - 1) * 100 percent, negative meaning the test curve needs
  less rate than the anchor.

Curves with more than four points can be compared with method="pchip", which
swaps in a piecewise monotone cubic interpolant.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BdError
from .quality import BitrateStats

STANDARD_QP_SET = (22, 27, 32, 37)
FULL_QP_SWEEP = (22, 27, 32, 37, 42, 47)
LOW_BITRATE_POINTS = 4  # the low-rate variant keeps the four highest QPs


@dataclass(frozen=True)
class RdPoint:
    """One sweep cell: quality parameter, measured rate, and accuracy metric."""

    quality_param: float
    bitrate: BitrateStats
    metric: float  # weighted AP in [0, 1]

    def __post_init__(self) -> None:
        if self.bitrate.mean_bpp <= 0:
            raise BdError(f"point at q={self.quality_param}: bitrate must be positive")
        if not 0.0 <= self.metric <= 1.0:
            raise BdError(f"point at q={self.quality_param}: metric {self.metric} outside [0, 1]")

    @property
    def rate(self) -> float:
        return self.bitrate.mean_bpp

    def to_json(self) -> dict:
        return {
            "quality_param": self.quality_param,
            "bitrate": self.bitrate.to_json(),
            "metric": self.metric,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "RdPoint":
        br = obj["bitrate"]
        return cls(
            quality_param=obj["quality_param"],
            bitrate=BitrateStats(
                mean_bpp=float(br["bpp"]),
                mean_kbit_per_image=float(br["kbit_per_image"]),
                n_images=int(br.get("n_images", 0)),
            ),
            metric=float(obj["metric"]),
        )


@dataclass(frozen=True)
class RdCurve:
    """RD points of one method, ordered by ascending bitrate."""

    method: str
    points: tuple[RdPoint, ...]
    baseline_uncompressed: float | None = None

    def __post_init__(self) -> None:
        if len(self.points) < 4:
            raise BdError(f"curve {self.method!r}: needs at least 4 points, got {len(self.points)}")
        rates = [p.rate for p in self.points]
        if any(b <= a for a, b in zip(rates, rates[1:])):
            raise BdError(f"curve {self.method!r}: bitrates must be strictly increasing")

    def rates(self) -> np.ndarray:
        return np.array([p.rate for p in self.points], dtype=np.float64)

    def metrics(self) -> np.ndarray:
        return np.array([p.metric for p in self.points], dtype=np.float64)

    def quality_params(self) -> tuple[float, ...]:
        return tuple(p.quality_param for p in self.points)

    def monotonicity_violations(self) -> tuple[tuple[float, float], ...]:
        """Adjacent quality-parameter pairs where the metric drops as rate grows.

        Violations are flagged for reporting but never silently repaired.
        """
        out = []
        for a, b in zip(self.points, self.points[1:]):
            if b.metric < a.metric:
                out.append((a.quality_param, b.quality_param))
        return tuple(out)

    def to_json(self) -> dict:
        return {
            "method": self.method,
            "points": [p.to_json() for p in self.points],
            "baseline_uncompressed": self.baseline_uncompressed,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "RdCurve":
        return cls(
            method=str(obj["method"]),
            points=tuple(RdPoint.from_json(p) for p in obj["points"]),
            baseline_uncompressed=obj.get("baseline_uncompressed"),
        )


@dataclass(frozen=True)
class BdResult:
    """Delta between a test and an anchor curve over one QP subset."""

    bd_metric_pp: float  # percentage points of the metric, > 0 favors the test curve
    bd_rate_percent: float  # percent rate change at equal metric, < 0 favors the test
    qp_subset: tuple[float, ...]
    log_rate_overlap: tuple[float, float]

    def to_json(self) -> dict:
        return {
            "bd_metric_pp": self.bd_metric_pp,
            "bd_rate_percent": self.bd_rate_percent,
            "qp_subset": list(self.qp_subset),
            "log_rate_overlap": list(self.log_rate_overlap),
        }


def select_qp_subset(curve: RdCurve, subset: str = "standard") -> RdCurve:
    """Restrict a curve to the four-point QP set used for delta reporting.

    ``standard`` selects QPs 22, 27, 32, and 37; ``low_bitrate`` selects the
    four highest QPs present. Missing QPs raise with the absentees listed.
    """
    available = {p.quality_param: p for p in curve.points}
    if subset == "standard":
        wanted = [float(q) for q in STANDARD_QP_SET]
        missing = [q for q in wanted if q not in available]
        if missing:
            raise BdError(
                f"curve {curve.method!r}: missing QPs {sorted(int(q) for q in missing)} "
                f"for the standard subset"
            )
        chosen = [available[q] for q in wanted]
    elif subset == "low_bitrate":
        if len(available) < LOW_BITRATE_POINTS:
            raise BdError(
                f"curve {curve.method!r}: low-bitrate subset needs {LOW_BITRATE_POINTS} "
                f"points, curve has {len(available)}"
            )
        highest = sorted(available)[-LOW_BITRATE_POINTS:]
        chosen = [available[q] for q in highest]
    else:
        raise BdError(f"unknown QP subset {subset!r}")
    chosen.sort(key=lambda p: p.rate)
    return RdCurve(
        method=curve.method,
        points=tuple(chosen),
        baseline_uncompressed=curve.baseline_uncompressed,
    )


def _fit_cubic(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Coefficients (highest power first) of the cubic through four points."""
    if len(np.unique(x)) != len(x):
        raise BdError(f"duplicate abscissa values {sorted(x.tolist())}; cannot interpolate")
    try:
        return np.linalg.solve(np.vander(x), y)
    except np.linalg.LinAlgError as exc:
        raise BdError(f"interpolation failed for abscissas {x.tolist()}: {exc}") from exc


def _poly_mean(coeffs: np.ndarray, lo: float, hi: float) -> float:
    """Mean value of the polynomial over [lo, hi] via the closed-form antiderivative."""
    anti = np.polyint(coeffs)
    return (np.polyval(anti, hi) - np.polyval(anti, lo)) / (hi - lo)


def _overlap(a: np.ndarray, b: np.ndarray, what: str) -> tuple[float, float]:
    lo = max(a.min(), b.min())
    hi = min(a.max(), b.max())
    if not lo < hi:
        raise BdError(f"curves do not overlap in {what} (interval [{lo}, {hi}])")
    return float(lo), float(hi)


def _mean_curve_value(x: np.ndarray, y: np.ndarray, lo: float, hi: float, method: str) -> float:
    if method == "cubic":
        if len(x) != 4:
            raise BdError(f"cubic interpolation needs exactly 4 points, got {len(x)}")
        center = float(x.mean())  # centering conditions the Vandermonde system
        return _poly_mean(_fit_cubic(x - center, y), lo - center, hi - center)
    if method == "pchip":
        from scipy.interpolate import PchipInterpolator

        order = np.argsort(x)
        interp = PchipInterpolator(x[order], y[order])
        anti = interp.antiderivative()
        return float(anti(hi) - anti(lo)) / (hi - lo)
    raise BdError(f"unknown interpolation method {method!r}")


def bd_metric(anchor: RdCurve, test: RdCurve, method: str = "cubic") -> BdResult:
    """Mean metric gain of ``test`` over ``anchor`` at equal rate, in percentage points."""
    ax, ay = np.log10(anchor.rates()), anchor.metrics()
    tx, ty = np.log10(test.rates()), test.metrics()
    lo, hi = _overlap(ax, tx, "log-rate")
    diff = _mean_curve_value(tx, ty, lo, hi, method) - _mean_curve_value(ax, ay, lo, hi, method)
    return BdResult(
        bd_metric_pp=100.0 * diff,
        bd_rate_percent=float("nan"),
        qp_subset=test.quality_params(),
        log_rate_overlap=(lo, hi),
    )


def bd_rate(anchor: RdCurve, test: RdCurve, method: str = "cubic") -> BdResult:
    """Mean rate change of ``test`` at equal metric, percent; negative saves rate."""
    _require_monotone_metric(anchor)
    _require_monotone_metric(test)
    ax, ay = np.log10(anchor.rates()), anchor.metrics()
    tx, ty = np.log10(test.rates()), test.metrics()
    lo, hi = _overlap(ay, ty, "metric")
    # axes swapped: fit log-rate as a function of the metric
    diff = _mean_curve_value(ty, tx, lo, hi, method) - _mean_curve_value(ay, ax, lo, hi, method)
    rate_lo, rate_hi = _overlap(ax, tx, "log-rate")
    return BdResult(
        bd_metric_pp=float("nan"),
        bd_rate_percent=(10.0 ** diff - 1.0) * 100.0,
        qp_subset=test.quality_params(),
        log_rate_overlap=(rate_lo, rate_hi),
    )


def bd_deltas(anchor: RdCurve, test: RdCurve, method: str = "cubic") -> BdResult:
    """Both deltas in one result."""
    m = bd_metric(anchor, test, method=method)
    r = bd_rate(anchor, test, method=method)
    return BdResult(
        bd_metric_pp=m.bd_metric_pp,
        bd_rate_percent=r.bd_rate_percent,
        qp_subset=m.qp_subset,
        log_rate_overlap=m.log_rate_overlap,
    )


def _require_monotone_metric(curve: RdCurve) -> None:
    metrics = curve.metrics()
    bad = [
        (curve.points[i].quality_param, curve.points[i + 1].quality_param)
        for i in range(len(metrics) - 1)
        if metrics[i + 1] <= metrics[i]
    ]
    if bad:
        raise BdError(
            f"curve {curve.method!r}: metric is not strictly increasing with rate "
            f"between quality params {bad}; the rate axis cannot be inverted"
        )
