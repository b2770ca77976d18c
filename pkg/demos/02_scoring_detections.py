"""
Scoring detections with class-frequency-weighted AP
====================================================

Parses the bundled ground-truth and detection fixtures, runs the matcher
over the IoU threshold sweep, and reduces per-class APs to the weighted AP
used as the accuracy axis of every rate-accuracy curve.
"""

from importlib import resources

from vcmbench import class_weights, evaluate, parse_detections, parse_ground_truth

fixtures = resources.files("vcmbench") / "fixtures"
gt = parse_ground_truth(fixtures.joinpath("gt.json").read_bytes())
dets = parse_detections(fixtures.joinpath("detections.json").read_bytes(), gt.class_table)

print(f"{len(gt.images)} images, {len(gt.instances)} ground-truth instances, "
      f"{len(dets.detections)} detections")

# Per-class AP averaged over thresholds 0.50:0.05:0.95, then weighted by
# how often each class appears in the ground truth.
report = evaluate(dets, gt, kind="box")
for cid, ap in sorted(report.breakdown.per_class.items()):
    name = gt.class_table.name_of(cid)
    n = report.breakdown.n_instances[cid]
    print(f"  {name:<10} AP {ap:.4f}  ({n} instances, weight {report.weights[cid]:.3f})")
print(f"weighted AP: {report.weighted_ap:.4f}")

# The weighting mode is a choice: object frequency (default) or image presence.
by_presence = class_weights(gt, mode="image_presence")
print(f"alternative image-presence weights: "
      + ", ".join(f"{gt.class_table.name_of(c)}={w:.3f}" for c, w in by_presence.items()))
