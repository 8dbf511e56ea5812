"""Segmentation metrics and selection-behavior statistics."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ConfusionMatrix:
    counts: np.ndarray  # (C, C): rows ground truth, columns prediction
    class_names: tuple[str, ...] | None = None

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def confusion(pred: np.ndarray, gt: np.ndarray, n_classes: int,
              class_names: tuple[str, ...] | None = None) -> ConfusionMatrix:
    pred = np.asarray(pred, dtype=np.int64)
    gt = np.asarray(gt, dtype=np.int64)
    if pred.shape != gt.shape:
        raise ValueError(f"pred has {pred.size} entries, gt has {gt.size}")
    if pred.size and (pred.min() < 0 or pred.max() >= n_classes
                      or gt.min() < 0 or gt.max() >= n_classes):
        raise ValueError(f"class id outside [0, {n_classes})")
    counts = np.bincount(gt * n_classes + pred,
                         minlength=n_classes * n_classes).reshape(n_classes, n_classes)
    return ConfusionMatrix(counts, class_names)


def add_confusion(a: ConfusionMatrix, b: ConfusionMatrix) -> ConfusionMatrix:
    return ConfusionMatrix(a.counts + b.counts, a.class_names or b.class_names)


def miou(cm: ConfusionMatrix) -> tuple[np.ndarray, float]:
    """Per-class IoU (nan where the class never occurs) and their unweighted mean.

    IoU_c = TP / (TP + FP + FN). Classes with an empty union are excluded from
    the mean; the mean is a fraction in [0, 1].
    """
    counts = cm.counts.astype(np.float64)
    tp = np.diag(counts)
    fp = counts.sum(axis=0) - tp
    fn = counts.sum(axis=1) - tp
    union = tp + fp + fn
    present = union > 0
    if not present.any():
        raise ValueError("confusion matrix is empty")
    iou = np.full(counts.shape[0], np.nan)
    iou[present] = tp[present] / union[present]
    return iou, float(iou[present].mean())


def selection_stats(label_state, clouds: dict) -> dict:
    """Annotation histogram per ground-truth class and per-instance click counts.

    Instance buckets follow the reporting convention: objects with zero, exactly
    one, and more than one annotation.
    """
    class_hist: dict[int, int] = {}
    clicks_per_instance: dict[tuple[str, int], int] = {}
    total_instances = 0
    for sid, cloud in clouds.items():
        if cloud.gt_semantic is None:
            raise ValueError(f"scene {sid} has no ground-truth labels")
        if cloud.gt_instance is not None:
            total_instances += len(np.unique(cloud.gt_instance))
    for ann in label_state.annotations:
        cloud = clouds[ann.scene_id]
        gt_class = int(cloud.gt_semantic[ann.point_index])
        class_hist[gt_class] = class_hist.get(gt_class, 0) + 1
        if cloud.gt_instance is not None:
            key = (ann.scene_id, int(cloud.gt_instance[ann.point_index]))
            clicks_per_instance[key] = clicks_per_instance.get(key, 0) + 1
    ones = sum(1 for v in clicks_per_instance.values() if v == 1)
    more = sum(1 for v in clicks_per_instance.values() if v > 1)
    zero = total_instances - ones - more
    return {
        "per_class": {int(k): int(v) for k, v in sorted(class_hist.items())},
        "instance_buckets": {"0": int(zero), "1": int(ones), ">1": int(more)},
        "total_annotations": label_state.n_annotations,
        "total_instances": int(total_instances),
    }


def iou_report_csv(cm: ConfusionMatrix) -> str:
    """Per-class IoU report as CSV text (percentages, mIoU row last)."""
    iou, mean = miou(cm)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["class", "iou_percent"])
    for c, value in enumerate(iou):
        name = cm.class_names[c] if cm.class_names else str(c)
        writer.writerow([name, "" if np.isnan(value) else f"{100.0 * value:.4f}"])
    writer.writerow(["mIoU", f"{100.0 * mean:.4f}"])
    return buf.getvalue()
