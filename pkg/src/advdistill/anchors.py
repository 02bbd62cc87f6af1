"""Multi-scale anchor grids and anchor-to-ground-truth matching."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .boxes import BoxList, DEFAULT_VARIANCES, center_to_corner, encode_boxes, iou_matrix

__all__ = ["AnchorConfig", "AnchorSet", "MatchResult", "generate_anchors", "match_anchors"]


@dataclass
class AnchorConfig:
    """Anchor layout: one grid per scale, sizes as fractions of image side."""

    image_size: int = 64
    grids: Sequence[int] = (8, 4, 2)                 # square grid side per scale
    sizes: Sequence[Sequence[float]] = ((0.2, 0.3), (0.35, 0.45), (0.55, 0.7))
    ratios: Sequence[float] = (1.0, 2.0, 0.5)

    def anchors_per_cell(self, scale: int) -> int:
        return len(self.sizes[scale]) * len(self.ratios)

    def validate(self) -> None:
        if len(self.grids) != len(self.sizes):
            raise ValueError("anchor config: grids and sizes must have the same length")
        for g in self.grids:
            if g < 1 or self.image_size % g != 0:
                raise ValueError(f"anchor config: grid {g} does not divide image size "
                                 f"{self.image_size}")
        for per_scale in self.sizes:
            if not per_scale or any(s <= 0 for s in per_scale):
                raise ValueError("anchor config: sizes must be positive and non-empty")
        if not self.ratios or any(r <= 0 for r in self.ratios):
            raise ValueError("anchor config: ratios must be positive and non-empty")


@dataclass
class AnchorSet:
    """Flattened anchors in center form, ordered scale -> row -> col -> (size, ratio)."""

    boxes: np.ndarray                     # (A, 4) float32 center form
    per_scale: list[int]                  # anchor count per scale
    config: AnchorConfig = field(repr=False, default=None)

    def __len__(self) -> int:
        return len(self.boxes)

    def corners(self) -> np.ndarray:
        return center_to_corner(self.boxes)


@dataclass
class MatchResult:
    """Per-anchor assignment: matched gt index (-1 = background), class and offsets."""

    gt_index: np.ndarray                  # (A,) int64
    class_target: np.ndarray              # (A,) int64; 0 is background
    loc_target: np.ndarray                # (A, 4) float32; zeros for background

    @property
    def positive_mask(self) -> np.ndarray:
        return self.gt_index >= 0

    @property
    def num_positive(self) -> int:
        return int(np.count_nonzero(self.gt_index >= 0))


def generate_anchors(config: AnchorConfig) -> AnchorSet:
    """Deterministic anchor list with centers at cell midpoints."""
    config.validate()
    all_scales = []
    per_scale = []
    for k, grid in enumerate(config.grids):
        cell = 1.0 / grid
        centers = (np.arange(grid) + 0.5) * cell
        shapes = []
        for s in config.sizes[k]:
            for r in config.ratios:
                root = np.sqrt(r)
                shapes.append((s * root, s / root))
        shapes = np.asarray(shapes, dtype=np.float32)        # (P, 2) = (w, h)
        cy, cx = np.meshgrid(centers, centers, indexing="ij")
        grid_centers = np.stack([cx.ravel(), cy.ravel()], axis=1)  # row-major cells
        n_cells, n_shapes = len(grid_centers), len(shapes)
        boxes = np.empty((n_cells, n_shapes, 4), dtype=np.float32)
        boxes[:, :, :2] = grid_centers[:, None, :]
        boxes[:, :, 2:] = shapes[None, :, :]
        all_scales.append(boxes.reshape(-1, 4))
        per_scale.append(n_cells * n_shapes)
    return AnchorSet(np.concatenate(all_scales, axis=0), per_scale, config)


def match_anchors(anchors: AnchorSet, gt: BoxList, pos_iou: float = 0.5,
                  variances=DEFAULT_VARIANCES) -> MatchResult:
    """Assign anchors to ground-truth boxes.

    Two passes: (1) bipartite, each gt claims its best remaining anchor
    unconditionally, so every gt gets at least one positive; (2) any
    still-unassigned anchor with IoU >= ``pos_iou`` to some gt becomes
    positive for its best gt. Ties prefer the lowest gt index.
    """
    if not 0.0 < pos_iou < 1.0:
        raise ValueError(f"pos_iou must be in (0, 1), got {pos_iou}")
    n_anchors = len(anchors)
    gt_index = np.full(n_anchors, -1, dtype=np.int64)
    class_target = np.zeros(n_anchors, dtype=np.int64)
    loc_target = np.zeros((n_anchors, 4), dtype=np.float32)
    if len(gt) == 0:
        return MatchResult(gt_index, class_target, loc_target)

    anchor_corners = anchors.corners()
    overlap = iou_matrix(gt.boxes, anchor_corners)           # (G, A)

    # Pass 1: bipartite best-match. Row-major argmax over the (G, A) matrix
    # breaks ties toward the lowest gt index, then the lowest anchor index.
    work = overlap.copy()
    n_rounds = min(len(gt), n_anchors)
    for _ in range(n_rounds):
        g, a = np.unravel_index(np.argmax(work), work.shape)
        gt_index[a] = g
        work[g, :] = -1.0
        work[:, a] = -1.0

    # Pass 2: threshold matching for the remaining anchors.
    unassigned = gt_index < 0
    best_gt = overlap.argmax(axis=0)                          # lowest gt wins ties
    best_iou = overlap[best_gt, np.arange(n_anchors)]
    take = unassigned & (best_iou >= pos_iou)
    gt_index[take] = best_gt[take]

    pos = gt_index >= 0
    matched = gt_index[pos]
    class_target[pos] = gt.labels[matched] + 1                # 0 reserved for background
    loc_target[pos] = encode_boxes(gt.boxes[matched], anchors.boxes[pos], variances)
    return MatchResult(gt_index, class_target, loc_target)
