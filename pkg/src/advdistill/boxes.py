"""Box geometry: IoU, offset encoding/decoding, and per-class NMS.

Boxes are normalized to [0, 1] image coordinates. Corner form is
(xmin, ymin, xmax, ymax); center form is (cx, cy, w, h).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

__all__ = [
    "BoxList",
    "iou",
    "iou_matrix",
    "corner_to_center",
    "center_to_corner",
    "encode_boxes",
    "decode_boxes",
    "nms",
    "DEFAULT_VARIANCES",
]

DEFAULT_VARIANCES = (0.1, 0.1, 0.2, 0.2)
_MIN_SIZE = 1e-6


@dataclass
class BoxList:
    """Corner-form boxes with class labels and optional scores."""

    boxes: np.ndarray                      # (n, 4) float32, corner form
    labels: np.ndarray                     # (n,) int64
    scores: Optional[np.ndarray] = field(default=None)  # (n,) float32

    def __post_init__(self):
        self.boxes = np.asarray(self.boxes, dtype=np.float32).reshape(-1, 4)
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if self.scores is not None:
            self.scores = np.asarray(self.scores, dtype=np.float32).reshape(-1)
            if len(self.scores) != len(self.boxes):
                raise ValueError("scores length does not match boxes")
        if len(self.labels) != len(self.boxes):
            raise ValueError("labels length does not match boxes")
        if len(self.boxes) and (np.any(self.boxes[:, 2] <= self.boxes[:, 0])
                                or np.any(self.boxes[:, 3] <= self.boxes[:, 1])):
            raise ValueError("boxes must satisfy xmin < xmax and ymin < ymax")

    def __len__(self) -> int:
        return len(self.boxes)

    @classmethod
    def empty(cls) -> "BoxList":
        return cls(np.zeros((0, 4), dtype=np.float32), np.zeros(0, dtype=np.int64),
                   np.zeros(0, dtype=np.float32))

    def select(self, idx) -> "BoxList":
        return BoxList(self.boxes[idx], self.labels[idx],
                       None if self.scores is None else self.scores[idx])


def iou(a, b) -> float:
    """Intersection-over-union of two corner-form boxes."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    ix = max(0.0, min(a[2], b[2]) - max(a[0], b[0]))
    iy = max(0.0, min(a[3], b[3]) - max(a[1], b[1]))
    inter = ix * iy
    union = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter
    return float(inter / union) if union > 0 else 0.0


def iou_matrix(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise IoU of corner-form box arrays a (n,4) and b (m,4) -> (n,m)."""
    a = np.asarray(a, dtype=np.float32).reshape(-1, 4)
    b = np.asarray(b, dtype=np.float32).reshape(-1, 4)
    lt = np.maximum(a[:, None, :2], b[None, :, :2])
    rb = np.minimum(a[:, None, 2:], b[None, :, 2:])
    wh = np.clip(rb - lt, 0, None)
    inter = wh[:, :, 0] * wh[:, :, 1]
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(union > 0, inter / union, 0.0)
    return out.astype(np.float32)


def corner_to_center(boxes: np.ndarray) -> np.ndarray:
    boxes = np.asarray(boxes, dtype=np.float32).reshape(-1, 4)
    wh = boxes[:, 2:] - boxes[:, :2]
    c = (boxes[:, :2] + boxes[:, 2:]) / 2
    return np.concatenate([c, wh], axis=1)


def center_to_corner(boxes: np.ndarray) -> np.ndarray:
    boxes = np.asarray(boxes, dtype=np.float32).reshape(-1, 4)
    half = boxes[:, 2:] / 2
    return np.concatenate([boxes[:, :2] - half, boxes[:, :2] + half], axis=1)


def encode_boxes(gt: np.ndarray, anchors: np.ndarray,
                 variances=DEFAULT_VARIANCES) -> np.ndarray:
    """Offsets of corner-form ``gt`` relative to center-form ``anchors``.

    Per row: ((gcx-acx)/aw/v0, (gcy-acy)/ah/v1, ln(gw/aw)/v2, ln(gh/ah)/v3).
    """
    g = corner_to_center(gt)
    a = np.asarray(anchors, dtype=np.float32).reshape(-1, 4)
    v = np.asarray(variances, dtype=np.float32)
    out = np.empty_like(g)
    out[:, :2] = (g[:, :2] - a[:, :2]) / a[:, 2:] / v[:2]
    out[:, 2:] = np.log(g[:, 2:] / a[:, 2:]) / v[2:]
    return out


def decode_boxes(pred: np.ndarray, anchors: np.ndarray,
                 variances=DEFAULT_VARIANCES) -> np.ndarray:
    """Exact inverse of :func:`encode_boxes`; returns corner-form boxes.

    Decoded widths/heights are floored at 1e-6 so degenerate predictions
    still yield valid boxes.
    """
    p = np.asarray(pred, dtype=np.float32).reshape(-1, 4)
    a = np.asarray(anchors, dtype=np.float32).reshape(-1, 4)
    v = np.asarray(variances, dtype=np.float32)
    center = np.empty_like(p)
    center[:, :2] = p[:, :2] * v[:2] * a[:, 2:] + a[:, :2]
    center[:, 2:] = np.maximum(a[:, 2:] * np.exp(p[:, 2:] * v[2:]), _MIN_SIZE)
    return center_to_corner(center)


def nms(dets: BoxList, iou_thresh: float = 0.45, top_k: int = 200) -> BoxList:
    """Greedy per-class suppression by descending score.

    Ties are broken by box index; a kept box suppresses later boxes of the
    same class with IoU strictly above ``iou_thresh``. At most ``top_k``
    boxes survive per class.
    """
    if dets.scores is None:
        raise ValueError("nms requires scores")
    keep_all: list[int] = []
    for cls in np.unique(dets.labels):
        idx = np.flatnonzero(dets.labels == cls)
        order = idx[np.argsort(-dets.scores[idx], kind="stable")]
        kept: list[int] = []
        for i in order:
            if len(kept) >= top_k:
                break
            box_i = dets.boxes[i]
            if all(iou(box_i, dets.boxes[j]) <= iou_thresh for j in kept):
                kept.append(int(i))
        keep_all.extend(kept)
    keep_all.sort()
    return dets.select(np.asarray(keep_all, dtype=np.int64))
