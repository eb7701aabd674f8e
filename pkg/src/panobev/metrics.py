"""Segmentation metrics over label rasters: Acc, mRecall, mPrecision, mIoU.

A ConfusionMatrix accumulates pixel counts (rows = ground truth, columns
= prediction); pixels whose ground-truth label equals the ignore id are
skipped. Per-class ratios come straight from the counts; the means
average over classes with any support (TP + FP + FN > 0), so classes
absent from both rasters do not drag the means through 0/0.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

__all__ = ["ConfusionMatrix", "MetricReport", "accumulate", "summarize"]


@dataclass
class ConfusionMatrix:
    num_classes: int
    ignore_label: int | None = None
    counts: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.num_classes < 1:
            raise ValueError("need at least one class")
        if self.counts is None:
            self.counts = np.zeros((self.num_classes, self.num_classes), dtype=np.int64)
        else:
            self.counts = np.asarray(self.counts, dtype=np.int64)
            if self.counts.shape != (self.num_classes, self.num_classes):
                raise ValueError("counts must be K x K")

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def merge(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if other.num_classes != self.num_classes:
            raise ValueError("class counts differ")
        return ConfusionMatrix(
            self.num_classes, self.ignore_label, self.counts + other.counts
        )


def accumulate(cm: ConfusionMatrix, pred: np.ndarray, gt: np.ndarray) -> ConfusionMatrix:
    """Add one prediction/ground-truth raster pair into ``cm`` (in place).

    Raises ValueError on shape mismatch or any scored label >= K.
    """
    pred = np.asarray(pred)
    gt = np.asarray(gt)
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: pred {pred.shape} vs gt {gt.shape}")
    p = pred.reshape(-1).astype(np.int64)
    g = gt.reshape(-1).astype(np.int64)
    if cm.ignore_label is not None:
        keep = g != cm.ignore_label
        p, g = p[keep], g[keep]
    k = cm.num_classes
    if p.size and (p.min() < 0 or p.max() >= k):
        raise ValueError("prediction label out of range")
    if g.size and (g.min() < 0 or g.max() >= k):
        raise ValueError("ground-truth label out of range")
    cm.counts += np.bincount(g * k + p, minlength=k * k).reshape(k, k)
    return cm


@dataclass
class MetricReport:
    """Summary metrics plus per-class breakdowns.

    Per-class entries are NaN for classes with no support; those classes
    are excluded from the means.
    """

    acc: float
    mean_recall: float
    mean_precision: float
    mean_iou: float
    iou: np.ndarray
    recall: np.ndarray
    precision: np.ndarray
    support: np.ndarray  # TP + FN per class (ground-truth pixel counts)

    def to_json(self, class_names: list[str] | None = None) -> str:
        names = class_names or [str(k) for k in range(len(self.iou))]
        per_class = {
            names[k]: {
                "recall": _none_if_nan(self.recall[k]),
                "precision": _none_if_nan(self.precision[k]),
                "iou": _none_if_nan(self.iou[k]),
                "support": int(self.support[k]),
            }
            for k in range(len(self.iou))
        }
        payload = {
            "acc": self.acc,
            "mrecall": self.mean_recall,
            "mprecision": self.mean_precision,
            "miou": self.mean_iou,
            "per_class": per_class,
        }
        return json.dumps(payload, indent=2)

    def to_csv(self, class_names: list[str] | None = None) -> str:
        names = class_names or [str(k) for k in range(len(self.iou))]
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["class", "acc", "mrecall", "mprecision", "miou"])
        writer.writerow(
            [
                "ALL",
                f"{self.acc:.6f}",
                f"{self.mean_recall:.6f}",
                f"{self.mean_precision:.6f}",
                f"{self.mean_iou:.6f}",
            ]
        )
        writer.writerow([])
        writer.writerow(["class", "recall", "precision", "iou", "support"])
        for k, name in enumerate(names):
            writer.writerow(
                [
                    name,
                    _fmt(self.recall[k]),
                    _fmt(self.precision[k]),
                    _fmt(self.iou[k]),
                    int(self.support[k]),
                ]
            )
        return buf.getvalue()


def _none_if_nan(x: float):
    return None if np.isnan(x) else float(x)


def _fmt(x: float) -> str:
    return "" if np.isnan(x) else f"{x:.6f}"


def summarize(cm: ConfusionMatrix) -> MetricReport:
    """Metrics from an accumulated confusion matrix.

    Raises ValueError when nothing has been scored.
    """
    total = cm.total
    if total == 0:
        raise ValueError("confusion matrix is empty")
    counts = cm.counts.astype(np.float64)
    tp = np.diag(counts)
    fn = counts.sum(axis=1) - tp
    fp = counts.sum(axis=0) - tp
    supported = (tp + fp + fn) > 0

    with np.errstate(divide="ignore", invalid="ignore"):
        iou = tp / (tp + fp + fn)
        recall = tp / (tp + fn)
        precision = tp / (tp + fp)
    # Classes with support but an undefined ratio (0/0) score 0.
    recall = np.where(supported & np.isnan(recall), 0.0, recall)
    precision = np.where(supported & np.isnan(precision), 0.0, precision)
    iou[~supported] = np.nan
    recall[~supported] = np.nan
    precision[~supported] = np.nan

    return MetricReport(
        acc=float(tp.sum() / total),
        mean_recall=float(np.nanmean(recall[supported])) if supported.any() else 0.0,
        mean_precision=float(np.nanmean(precision[supported])) if supported.any() else 0.0,
        mean_iou=float(np.nanmean(iou[supported])) if supported.any() else 0.0,
        iou=iou,
        recall=recall,
        precision=precision,
        support=(tp + fn).astype(np.int64),
    )
