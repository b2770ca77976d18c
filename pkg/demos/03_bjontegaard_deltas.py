"""
Bjontegaard deltas over (bitrate, weighted AP) curves
=====================================================

Builds two synthetic rate-accuracy curves and quantifies their gap both
ways: mean accuracy gain at equal rate (percentage points) and mean rate
change at equal accuracy (percent, negative = savings).
"""

import numpy as np

from vcmbench import BitrateStats, RdCurve, RdPoint, bd_metric, bd_rate, select_qp_subset


def curve(method, rates, metrics, qps):
    points = sorted(
        (
            RdPoint(quality_param=q,
                    bitrate=BitrateStats(mean_bpp=r, mean_kbit_per_image=r * 2097.152, n_images=500),
                    metric=m)
            for q, r, m in zip(qps, rates, metrics)
        ),
        key=lambda p: p.rate,
    )
    return RdCurve(method=method, points=tuple(points))


# A six-point sweep over the usual QP grid; rate roughly halves per 5 QP.
qps = (47, 42, 37, 32, 27, 22)
rates = 0.05 * 2.0 ** np.arange(6)
anchor_metrics = np.array([0.18, 0.24, 0.29, 0.33, 0.36, 0.38])
anchor = curve("classic", rates, anchor_metrics, qps)

# A method that is consistently 2.5 points better at every rate.
tuned = curve("fine_tuned", rates, anchor_metrics + 0.025, qps)

# Deltas are computed on the four-point subsets used for reporting.
for subset in ("standard", "low_bitrate"):
    a = select_qp_subset(anchor, subset)
    t = select_qp_subset(tuned, subset)
    pp = bd_metric(a, t).bd_metric_pp
    pct = bd_rate(a, t).bd_rate_percent
    print(f"{subset:<12} QPs {sorted(t.quality_params())}: "
          f"{pp:+.2f} pp weighted AP, {pct:+.2f} % rate")

# A constant metric offset moves bd_metric by exactly 100x the offset...
print(f"\noffset check: {bd_metric(a, t).bd_metric_pp:.10f} pp for a 0.025 offset")

# ...and scaling every rate by k moves bd_rate to (k - 1) * 100 %.
cheaper = curve("cheaper", rates * 0.6, anchor_metrics, qps)
value = bd_rate(select_qp_subset(anchor, "standard"), select_qp_subset(cheaper, "standard"))
print(f"rate-scale check: {value.bd_rate_percent:.10f} % for k = 0.6")
