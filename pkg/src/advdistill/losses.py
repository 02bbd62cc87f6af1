"""Detection losses: hard-negative-mined cross-entropy and smooth-L1 offsets.

Both are fused tape ops: the forward selects anchors in numpy, the recorded
backward routes gradients only through the selected rows.
"""

from __future__ import annotations

import numpy as np

from .anchors import MatchResult
from .tensor import Tensor, record

__all__ = ["conf_loss", "loc_loss"]


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


def conf_loss(logits: Tensor, match: MatchResult, neg_pos_ratio: int = 3) -> Tensor:
    """Classification loss over positives plus the hardest negatives.

    ``logits`` is (A, C+1) with class 0 reserved for background. Negatives
    are capped at ``neg_pos_ratio`` times the positive count, picked by
    highest background loss (ties keep the lowest anchor index). The sum is
    normalized by the positive count; with no positives the loss is 0.
    """
    n_anchors, _ = logits.shape
    if len(match.class_target) != n_anchors:
        raise ValueError(f"match covers {len(match.class_target)} anchors, logits {n_anchors}")
    pos = match.positive_mask
    n_pos = match.num_positive
    if n_pos == 0:
        return Tensor(0.0, dtype=logits.dtype)

    logp = _log_softmax(logits.data)
    ce = -logp[np.arange(n_anchors), match.class_target]

    neg_idx = np.flatnonzero(~pos)
    n_neg = min(neg_pos_ratio * n_pos, len(neg_idx))
    # Stable sort on descending loss keeps tie order by anchor index.
    hardest = neg_idx[np.argsort(-ce[neg_idx], kind="stable")[:n_neg]]

    selected = np.zeros(n_anchors, dtype=bool)
    selected[pos] = True
    selected[hardest] = True
    loss_val = ce[selected].sum() / n_pos
    out = Tensor._wrap(np.asarray(loss_val, dtype=logits.dtype), logits.requires_grad)

    def vjp(g):
        soft = np.exp(logp)
        grad = soft
        grad[np.arange(n_anchors), match.class_target] -= 1.0
        grad[~selected] = 0.0
        return (g / n_pos) * grad

    record("conf_loss", out, (logits,), (vjp,))
    return out


def loc_loss(preds: Tensor, match: MatchResult) -> Tensor:
    """Smooth-L1 over the positive anchors' offsets, normalized by their count."""
    n_anchors, _ = preds.shape
    if len(match.class_target) != n_anchors:
        raise ValueError(f"match covers {len(match.class_target)} anchors, preds {n_anchors}")
    pos = match.positive_mask
    n_pos = match.num_positive
    if n_pos == 0:
        return Tensor(0.0, dtype=preds.dtype)

    r = preds.data[pos] - match.loc_target[pos]
    a = np.abs(r)
    per_elem = np.where(a < 1.0, 0.5 * r * r, a - 0.5)
    loss_val = per_elem.sum() / n_pos
    out = Tensor._wrap(np.asarray(loss_val, dtype=preds.dtype), preds.requires_grad)

    def vjp(g):
        grad = np.zeros_like(preds.data)
        grad[pos] = np.where(a < 1.0, r, np.sign(r))
        return (g / n_pos) * grad

    record("loc_loss", out, (preds,), (vjp,))
    return out
