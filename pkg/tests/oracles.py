"""Independent brute-force references for the detector math.

Pure-python loops throughout; these deliberately avoid the vectorized code
paths they are used to verify.
"""

from __future__ import annotations

import math


def oracle_iou(a, b) -> float:
    ix = max(0.0, min(a[2], b[2]) - max(a[0], b[0]))
    iy = max(0.0, min(a[3], b[3]) - max(a[1], b[1]))
    inter = ix * iy
    union = ((a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter)
    return inter / union if union > 0 else 0.0


def oracle_encode(gt, anchor_center, variances) -> list[float]:
    gcx = (gt[0] + gt[2]) / 2
    gcy = (gt[1] + gt[3]) / 2
    gw = gt[2] - gt[0]
    gh = gt[3] - gt[1]
    acx, acy, aw, ah = anchor_center
    return [
        (gcx - acx) / aw / variances[0],
        (gcy - acy) / ah / variances[1],
        math.log(gw / aw) / variances[2],
        math.log(gh / ah) / variances[3],
    ]


def oracle_match(anchor_corners, anchor_centers, gt_boxes, gt_labels,
                 pos_iou, variances):
    """Two-pass matching: bipartite force-match, then threshold assignment.

    Returns (gt_index, class_target, loc_target) as plain python lists.
    """
    n_anchors = len(anchor_corners)
    n_gt = len(gt_boxes)
    table = [[oracle_iou(g, a) for a in anchor_corners] for g in gt_boxes]

    assigned = [-1] * n_anchors
    gt_done = [False] * n_gt
    anchor_taken = [False] * n_anchors
    for _ in range(min(n_gt, n_anchors)):
        best_v, best_g, best_a = -1.0, -1, -1
        for g in range(n_gt):
            if gt_done[g]:
                continue
            for a in range(n_anchors):
                if anchor_taken[a]:
                    continue
                if table[g][a] > best_v:
                    best_v, best_g, best_a = table[g][a], g, a
        assigned[best_a] = best_g
        gt_done[best_g] = True
        anchor_taken[best_a] = True

    for a in range(n_anchors):
        if assigned[a] >= 0:
            continue
        best_v, best_g = -1.0, -1
        for g in range(n_gt):
            if table[g][a] > best_v:
                best_v, best_g = table[g][a], g
        if best_v >= pos_iou:
            assigned[a] = best_g

    class_target = [0] * n_anchors
    loc_target = [[0.0, 0.0, 0.0, 0.0] for _ in range(n_anchors)]
    for a in range(n_anchors):
        g = assigned[a]
        if g >= 0:
            class_target[a] = int(gt_labels[g]) + 1
            loc_target[a] = oracle_encode(gt_boxes[g], anchor_centers[a], variances)
    return assigned, class_target, loc_target


def _cross_entropy(row, target) -> float:
    m = max(row)
    lse = m + math.log(sum(math.exp(v - m) for v in row))
    return lse - row[target]


def oracle_conf_loss(logits, class_target, neg_pos_ratio) -> float:
    """Explicit-sort hard-negative-mined cross-entropy."""
    n = len(logits)
    ce = [_cross_entropy(list(logits[i]), int(class_target[i])) for i in range(n)]
    positives = [i for i in range(n) if class_target[i] > 0]
    if not positives:
        return 0.0
    negatives = [i for i in range(n) if class_target[i] == 0]
    negatives.sort(key=lambda i: (-ce[i], i))
    selected = positives + negatives[:min(neg_pos_ratio * len(positives), len(negatives))]
    return sum(ce[i] for i in selected) / len(positives)


def oracle_loc_loss(preds, class_target, loc_target) -> float:
    total = 0.0
    n_pos = 0
    for i in range(len(preds)):
        if class_target[i] <= 0:
            continue
        n_pos += 1
        for j in range(4):
            x = float(preds[i][j]) - float(loc_target[i][j])
            a = abs(x)
            total += 0.5 * x * x if a < 1.0 else a - 0.5
    return total / n_pos if n_pos else 0.0


def oracle_nms(boxes, scores, labels, iou_thresh, top_k):
    """O(n^2) greedy per-class suppression; returns kept indices, sorted."""
    kept_all = []
    for cls in sorted(set(int(v) for v in labels)):
        candidates = [i for i in range(len(boxes)) if int(labels[i]) == cls]
        candidates.sort(key=lambda i: (-float(scores[i]), i))
        kept = []
        for i in candidates:
            if len(kept) >= top_k:
                break
            if all(oracle_iou(boxes[i], boxes[j]) <= iou_thresh for j in kept):
                kept.append(i)
        kept_all.extend(kept)
    return sorted(kept_all)
