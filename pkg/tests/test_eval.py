import numpy as np
import pytest

from advdistill.boxes import BoxList
from advdistill.evaluation import evaluate_map, write_detections_csv


def boxlist(rows, labels, scores=None):
    return BoxList(np.asarray(rows, dtype=np.float32),
                   np.asarray(labels), None if scores is None else np.asarray(scores))


class TestEvaluateMap:
    def test_perfect_predictions(self):
        gt = [boxlist([[0.1, 0.1, 0.4, 0.4], [0.5, 0.5, 0.8, 0.8]], [0, 1])]
        preds = [boxlist([[0.1, 0.1, 0.4, 0.4], [0.5, 0.5, 0.8, 0.8]], [0, 1],
                         [1.0, 1.0])]
        per_class, mean_ap = evaluate_map(preds, gt, num_classes=3)
        assert mean_ap == pytest.approx(1.0)
        assert per_class == {0: pytest.approx(1.0), 1: pytest.approx(1.0)}

    def test_zero_predictions(self):
        gt = [boxlist([[0.1, 0.1, 0.4, 0.4]], [0])]
        preds = [BoxList.empty()]
        _, mean_ap = evaluate_map(preds, gt, num_classes=3)
        assert mean_ap == 0.0

    def test_hand_computed_three_image_case(self):
        # class 0: three gt boxes over three images; detections ranked by score:
        #   0.9 TP, 0.8 FP (bad location), 0.7 TP, 0.6 TP
        # precision at recalls (1/3, 2/3, 1): 1, 2/3... cumulative:
        #   rank1: p=1,   r=1/3
        #   rank2: p=1/2, r=1/3
        #   rank3: p=2/3, r=2/3
        #   rank4: p=3/4, r=1
        # 11-point: r<=1/3 -> max p at r>=0..0.3 = 1.0 (4 points: 0,.1,.2,.3)
        #   r in (.4,.5,.6) -> best p with recall>=r is 3/4 (recall 1 row)
        #   wait: at recall 2/3 p=2/3; later p=3/4 at r=1 -> interpolated max = 3/4
        #   r in (.7,...,1.0) -> 3/4
        # AP = (4*1.0 + 7*0.75) / 11
        gt = [boxlist([[0.1, 0.1, 0.3, 0.3]], [0]),
              boxlist([[0.4, 0.4, 0.6, 0.6]], [0]),
              boxlist([[0.6, 0.6, 0.9, 0.9]], [0])]
        preds = [boxlist([[0.1, 0.1, 0.3, 0.3]], [0], [0.9]),
                 boxlist([[0.4, 0.4, 0.6, 0.6], [0.7, 0.1, 0.9, 0.2]], [0, 0],
                         [0.7, 0.8]),
                 boxlist([[0.6, 0.6, 0.9, 0.9]], [0], [0.6])]
        per_class, mean_ap = evaluate_map(preds, gt, num_classes=1)
        expected = (4 * 1.0 + 7 * 0.75) / 11
        assert per_class[0] == pytest.approx(expected)
        assert mean_ap == pytest.approx(expected)

    def test_class_without_gt_excluded(self):
        gt = [boxlist([[0.1, 0.1, 0.4, 0.4]], [0])]
        preds = [boxlist([[0.1, 0.1, 0.4, 0.4], [0.5, 0.5, 0.7, 0.7]], [0, 2],
                         [1.0, 0.9])]
        per_class, mean_ap = evaluate_map(preds, gt, num_classes=3)
        assert 2 not in per_class
        assert mean_ap == pytest.approx(1.0)

    def test_duplicate_detections_count_as_fp(self):
        gt = [boxlist([[0.1, 0.1, 0.4, 0.4]], [0])]
        preds = [boxlist([[0.1, 0.1, 0.4, 0.4], [0.1, 0.1, 0.4, 0.4]], [0, 0],
                         [0.9, 0.8])]
        per_class, _ = evaluate_map(preds, gt, num_classes=1)
        assert per_class[0] == pytest.approx(1.0)  # recall 1 reached at precision 1

    def test_high_scoring_false_positive_reduces_map(self):
        gt = [boxlist([[0.1, 0.1, 0.4, 0.4]], [0])]
        clean = [boxlist([[0.1, 0.1, 0.4, 0.4]], [0], [0.8])]
        _, base = evaluate_map(clean, gt, num_classes=1)
        polluted = [boxlist([[0.1, 0.1, 0.4, 0.4], [0.6, 0.6, 0.9, 0.9]], [0, 0],
                            [0.8, 0.95])]
        _, worse = evaluate_map(polluted, gt, num_classes=1)
        assert worse < base
        assert 0.0 <= worse <= 1.0

    def test_misaligned_inputs_raise(self):
        with pytest.raises(ValueError):
            evaluate_map([BoxList.empty()], [], num_classes=1)


class TestDetectionsCsv:
    def test_format(self, tmp_path):
        preds = [boxlist([[0.1, 0.2, 0.3, 0.4]], [2], [0.52]), BoxList.empty()]
        path = tmp_path / "dets.csv"
        write_detections_csv(path, preds, ["000001", "000002"])
        lines = path.read_text().splitlines()
        assert lines[0] == "image_id,class,score,xmin,ymin,xmax,ymax"
        assert lines[1] == "000001,2,0.520000,0.100000,0.200000,0.300000,0.400000"
        assert len(lines) == 2
