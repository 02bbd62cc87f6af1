import math

import numpy as np
import pytest

from advdistill.anchors import MatchResult
from advdistill.losses import conf_loss, loc_loss
from advdistill.tensor import Tape, Tensor, backward
from oracles import oracle_conf_loss, oracle_loc_loss


def make_match(class_target, loc_target=None):
    class_target = np.asarray(class_target, dtype=np.int64)
    n = len(class_target)
    gt_index = np.where(class_target > 0, 0, -1).astype(np.int64)
    if loc_target is None:
        loc_target = np.zeros((n, 4), dtype=np.float32)
    return MatchResult(gt_index, class_target, np.asarray(loc_target, dtype=np.float32))


class TestConfLoss:
    def test_uniform_logits_hand_value(self):
        # 10 anchors, 4 classes, 1 positive: loss = (1 + 3) * ln(4) / 1
        logits = Tensor(np.zeros((10, 4), dtype=np.float32))
        match = make_match([2] + [0] * 9)
        out = conf_loss(logits, match, neg_pos_ratio=3)
        assert out.item() == pytest.approx(4 * math.log(4), rel=1e-5)

    def test_confident_correct_logits_drive_loss_to_zero(self):
        previous = None
        for margin in (2.0, 5.0, 10.0):
            logits = np.zeros((6, 4), dtype=np.float32)
            target = [1, 0, 0, 0, 0, 0]
            for i, cls in enumerate(target):
                logits[i, cls] = margin
            loss = conf_loss(Tensor(logits), make_match(target), 3).item()
            if previous is not None:
                assert loss < previous
            previous = loss
        assert previous < 1e-3

    def test_zero_positives_gives_zero(self):
        logits = Tensor(np.random.default_rng(0).normal(size=(8, 4)).astype(np.float32))
        assert conf_loss(logits, make_match([0] * 8), 3).item() == 0.0

    def test_negative_cap(self):
        # 1 positive, ratio 1 -> exactly 1 negative selected
        logits = np.zeros((5, 3), dtype=np.float32)
        loss = conf_loss(Tensor(logits), make_match([1, 0, 0, 0, 0]), 1).item()
        assert loss == pytest.approx(2 * math.log(3), rel=1e-5)

    @pytest.mark.parametrize("seed", range(10))
    def test_matches_bruteforce_oracle(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(3, 11))
        logits = rng.normal(size=(n, 4)).astype(np.float32)
        n_pos = int(rng.integers(0, min(3, n) + 1))
        targets = np.zeros(n, dtype=np.int64)
        pos_idx = rng.choice(n, size=n_pos, replace=False)
        targets[pos_idx] = rng.integers(1, 4, size=n_pos)
        got = conf_loss(Tensor(logits), make_match(targets), 3).item()
        expected = oracle_conf_loss(logits.tolist(), targets.tolist(), 3)
        assert got == pytest.approx(expected, abs=1e-5)

    def test_non_negative(self):
        rng = np.random.default_rng(3)
        logits = Tensor(rng.normal(size=(10, 4)).astype(np.float32) * 3)
        targets = rng.integers(0, 4, size=10)
        assert conf_loss(Tensor(logits.data), make_match(targets), 3).item() >= 0.0

    def test_gradient_flows_only_through_selected(self):
        rng = np.random.default_rng(1)
        logits = Tensor(rng.normal(size=(6, 4)).astype(np.float32), requires_grad=True)
        match = make_match([1, 0, 0, 0, 0, 0])
        with Tape() as tape:
            loss = conf_loss(logits, match, neg_pos_ratio=1)
        backward(loss, tape)
        rows_with_grad = np.flatnonzero(np.abs(logits.grad).sum(axis=1) > 0)
        assert len(rows_with_grad) == 2  # the positive plus one hard negative
        assert 0 in rows_with_grad


class TestLocLoss:
    def test_perfect_predictions_zero(self):
        target = np.array([[0.1, -0.2, 0.3, 0.0]], dtype=np.float32)
        preds = Tensor(np.vstack([target, np.zeros((3, 4), dtype=np.float32)]))
        match = make_match([1, 0, 0, 0], np.vstack([target, np.zeros((3, 4))]))
        assert loc_loss(preds, match).item() == 0.0

    def test_quadratic_region(self):
        preds = Tensor(np.array([[0.5, 0, 0, 0]], dtype=np.float32))
        assert loc_loss(preds, make_match([1])).item() == pytest.approx(0.125)

    def test_linear_region(self):
        preds = Tensor(np.array([[2.0, 0, 0, 0]], dtype=np.float32))
        assert loc_loss(preds, make_match([1])).item() == pytest.approx(1.5)

    def test_zero_positives_gives_zero(self):
        preds = Tensor(np.ones((4, 4), dtype=np.float32))
        assert loc_loss(preds, make_match([0, 0, 0, 0])).item() == 0.0

    @pytest.mark.parametrize("seed", range(10))
    def test_matches_bruteforce_oracle(self, seed):
        rng = np.random.default_rng(seed + 50)
        n = int(rng.integers(2, 11))
        preds = rng.normal(size=(n, 4)).astype(np.float32) * 2
        targets = np.zeros(n, dtype=np.int64)
        n_pos = int(rng.integers(1, n + 1))
        targets[rng.choice(n, size=n_pos, replace=False)] = 1
        loc_targets = rng.normal(size=(n, 4)).astype(np.float32)
        match = make_match(targets, loc_targets)
        got = loc_loss(Tensor(preds), match).item()
        expected = oracle_loc_loss(preds.tolist(), targets.tolist(), loc_targets.tolist())
        assert got == pytest.approx(expected, abs=1e-5)

    def test_gradient_hand_value(self):
        preds = Tensor(np.array([[0.5, 0, 0, 0], [9.0, 9.0, 9.0, 9.0]],
                                dtype=np.float32), requires_grad=True)
        match = make_match([1, 0])
        with Tape() as tape:
            loss = loc_loss(preds, match)
        backward(loss, tape)
        np.testing.assert_allclose(preds.grad[0], [0.5, 0, 0, 0], atol=1e-6)
        np.testing.assert_array_equal(preds.grad[1], np.zeros(4))
