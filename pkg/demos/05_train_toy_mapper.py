"""Overfit the toy panorama-to-BEV mapper on synthetic scenes.

Two small scenes, a few dozen epochs, then per-class IoU against the
rasterized ground truth. Takes roughly half a minute on one core.
"""

import numpy as np

from panobev.bev import BevGridSpec
from panobev.datagen import SceneConfig, generate_bev_gt, synth_scene
from panobev.mapper import TrainConfig, init_mapper_model, predict_map, train
from panobev.metrics import ConfusionMatrix, accumulate, summarize
from panobev.vocab import load_vocabulary

spec = BevGridSpec(size=50, range_m=10.0)
scenes = []
for seed in (0, 1):
    s = synth_scene(seed, SceneConfig(height=64, width=128, grid=spec))
    gt = generate_bev_gt(s.labels, s.depth, s.pose, spec)
    scenes.append((s.rgb, s.depth, s.pose, gt))
print(f"{len(scenes)} synthetic scenes, 64x128 panoramas, 50x50 BEV grid")

model = init_mapper_model(64, 128, spec, num_classes=21, seed=0)
config = TrainConfig(epochs=150, seed=0)
_, losses = train(scenes, model, config)
print(f"loss: {losses[0]:.4f} -> {losses[-1]:.4f} over {config.epochs} epochs")

vocab = load_vocabulary("matterport20-bev")
cm = ConfusionMatrix(vocab.num_classes)
for image, depth, pose, gt in scenes:
    pred = predict_map(model, image, depth, pose)
    accumulate(cm, pred.labels, gt.labels)
report = summarize(cm)
print(f"overfit mIoU: {report.mean_iou:.4f}")
for k, name in enumerate(vocab.names):
    if not np.isnan(report.iou[k]):
        print(f"  {name:10s} iou {report.iou[k]:.3f}  (support {report.support[k]})")
