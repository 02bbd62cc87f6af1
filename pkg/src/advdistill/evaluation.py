"""Detection quality: 11-point interpolated AP (VOC2007 protocol) and exports."""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import numpy as np

from .boxes import BoxList, iou_matrix

__all__ = ["evaluate_map", "write_detections_csv"]


def _class_ap(dets: list[tuple[int, float, np.ndarray]],
              gt_by_image: dict[int, np.ndarray], iou_thresh: float) -> float:
    """AP for one class. ``dets`` rows are (image index, score, box)."""
    n_gt = sum(len(b) for b in gt_by_image.values())
    if not dets:
        return 0.0
    order = sorted(range(len(dets)), key=lambda i: (-dets[i][1], dets[i][0], i))
    used = {img: np.zeros(len(boxes), dtype=bool) for img, boxes in gt_by_image.items()}
    tp = np.zeros(len(dets))
    fp = np.zeros(len(dets))
    for rank, i in enumerate(order):
        img, _, box = dets[i]
        boxes = gt_by_image.get(img)
        matched = -1
        if boxes is not None and len(boxes):
            ious = iou_matrix(box[None, :], boxes)[0]
            best = int(np.argmax(ious))
            if ious[best] >= iou_thresh and not used[img][best]:
                matched = best
        if matched >= 0:
            used[img][matched] = True
            tp[rank] = 1
        else:
            fp[rank] = 1
    tp_cum = np.cumsum(tp)
    fp_cum = np.cumsum(fp)
    recall = tp_cum / n_gt
    precision = tp_cum / np.maximum(tp_cum + fp_cum, 1e-12)
    ap = 0.0
    for r in np.linspace(0.0, 1.0, 11):
        mask = recall >= r - 1e-12
        ap += precision[mask].max() if np.any(mask) else 0.0
    return ap / 11.0


def evaluate_map(predictions: Sequence[BoxList], ground_truth: Sequence[BoxList],
                 num_classes: int, iou_thresh: float = 0.5) -> tuple[dict[int, float], float]:
    """Per-class 11-point interpolated AP and their mean.

    Detections are ranked by score and greedily matched to unused ground
    truth at IoU >= ``iou_thresh``. Classes with no ground-truth instances
    are excluded from the mean; an empty class universe yields mAP 0.
    """
    if len(predictions) != len(ground_truth):
        raise ValueError("predictions and ground_truth must align per image")
    per_class: dict[int, float] = {}
    included = []
    for cls in range(num_classes):
        gt_by_image = {}
        for img, gt in enumerate(ground_truth):
            sel = gt.labels == cls
            if np.any(sel):
                gt_by_image[img] = gt.boxes[sel]
        if not gt_by_image:
            continue
        dets = []
        for img, pred in enumerate(predictions):
            if pred.scores is None:
                raise ValueError("predictions must carry scores")
            for i in np.flatnonzero(pred.labels == cls):
                dets.append((img, float(pred.scores[i]), pred.boxes[i]))
        ap = _class_ap(dets, gt_by_image, iou_thresh)
        per_class[cls] = ap
        included.append(ap)
    mean_ap = float(np.mean(included)) if included else 0.0
    return per_class, mean_ap


def write_detections_csv(path, predictions: Sequence[BoxList],
                         image_ids: Sequence[str]) -> None:
    """CSV export: image_id,class,score,xmin,ymin,xmax,ymax (6 decimals)."""
    if len(predictions) != len(image_ids):
        raise ValueError("predictions and image_ids must align")
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("image_id,class,score,xmin,ymin,xmax,ymax\n")
        for image_id, pred in zip(image_ids, predictions):
            scores = pred.scores if pred.scores is not None else np.ones(len(pred))
            for box, label, score in zip(pred.boxes, pred.labels, scores):
                fh.write(f"{image_id},{int(label)},{score:.6f},"
                         f"{box[0]:.6f},{box[1]:.6f},{box[2]:.6f},{box[3]:.6f}\n")
