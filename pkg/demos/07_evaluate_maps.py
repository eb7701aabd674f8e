"""Scoring predicted maps: confusion matrix, per-class IoU, reports.

Builds a deliberately imperfect prediction from a ground-truth map, then
walks through the metric definitions and the CSV/JSON report output.
"""

import numpy as np

from panobev.datagen import generate_bev_gt, synth_scene
from panobev.metrics import ConfusionMatrix, accumulate, summarize
from panobev.vocab import load_vocabulary

scene = synth_scene(seed=3)
gt = generate_bev_gt(scene.labels, scene.depth, scene.pose, scene.config.grid)
vocab = load_vocabulary(scene.config.vocabulary)

# Corrupt 10% of the observed cells to fake an imperfect prediction,
# swapping in other labels that actually occur in this scene.
rng = np.random.default_rng(0)
pred = gt.labels.copy()
obs_u, obs_v = np.nonzero(gt.observed)
flip = rng.random(obs_u.size) < 0.10
present = np.unique(gt.labels[gt.observed])
pred[obs_u[flip], obs_v[flip]] = rng.choice(present, size=int(flip.sum()))

cm = ConfusionMatrix(vocab.num_classes)
accumulate(cm, pred, gt.labels)
report = summarize(cm)
print(f"acc        {report.acc:.4f}")
print(f"mRecall    {report.mean_recall:.4f}")
print(f"mPrecision {report.mean_precision:.4f}")
print(f"mIoU       {report.mean_iou:.4f}")

print("\nper-class (classes present in this scene):")
for k, name in enumerate(vocab.names):
    if report.support[k] > 0:
        print(f"  {name:10s} recall {report.recall[k]:.3f}  "
              f"precision {report.precision[k]:.3f}  iou {report.iou[k]:.3f}")

print("\nCSV report head:")
print("\n".join(report.to_csv(list(vocab.names)).splitlines()[:4]))
