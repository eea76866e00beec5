from fractions import Fraction

import allure
import numpy as np
import pytest

from common.errors import OutOfRangeError, ShapeMismatchError
from common.validators.oracles import brute_force_metrics
from core.metrics import ConfusionMatrix, accumulate, summarize


@allure.epic("VPFNet")
@allure.feature("评价指标")
@pytest.mark.unit
class TestConfusionMatrixCase:

    def test_hand_computed_case(self):
        counts = np.array([[2, 1], [0, 1]])
        summary = ConfusionMatrix(2, counts).summarize()
        assert summary.per_class_iou == [float(Fraction(2, 3)), 0.5]
        assert summary.mean_iou == float(Fraction(7, 12))
        assert summary.per_class_acc == [float(Fraction(2, 3)), 1.0]
        assert summary.mean_acc == float(Fraction(5, 6))

    def test_accumulate_counts_gt_rows_pred_columns(self):
        gt = np.array([[0, 0], [0, 1]])
        pred = np.array([[0, 0], [1, 1]])
        cm = accumulate(ConfusionMatrix(2), pred, gt)
        assert cm.counts.tolist() == [[2, 1], [0, 1]]
        assert cm.total == 4

    def test_perfect_prediction(self):
        gt = np.random.default_rng(0).integers(0, 5, (16, 16))
        summary = summarize(ConfusionMatrix(5).accumulate(gt, gt))
        assert summary.mean_iou == 1.0
        assert summary.mean_acc == 1.0

    def test_absent_class_is_undefined_and_skipped(self):
        gt = np.array([0, 0, 1, 1])
        summary = ConfusionMatrix(3).accumulate(gt, gt).summarize()
        assert summary.per_class_iou[2] is None
        assert summary.per_class_acc[2] is None
        assert summary.absent_classes() == ["class2"]
        assert summary.mean_iou == 1.0

    def test_exclude_background(self):
        gt = np.array([0, 0, 1, 1])
        pred = np.array([1, 0, 1, 1])
        full = ConfusionMatrix(2).accumulate(pred, gt).summarize()
        foreground = ConfusionMatrix(2).accumulate(pred, gt).summarize(exclude_background=True)
        assert foreground.mean_iou == full.per_class_iou[1]
        assert foreground.excluded == [0]

    def test_merge_is_additive(self):
        rng = np.random.default_rng(1)
        a, b = rng.integers(0, 3, (2, 8, 8)), rng.integers(0, 3, (2, 8, 8))
        first = ConfusionMatrix(3).accumulate(a[0], b[0])
        second = ConfusionMatrix(3).accumulate(a[1], b[1])
        assert first + second == ConfusionMatrix(3).accumulate(a, b)

    def test_class_names(self):
        summary = ConfusionMatrix(2, np.eye(2, dtype=np.int64)).summarize(class_names=["road", "car"])
        assert summary.to_table_row() == {"road_Acc": 1.0, "road_IoU": 1.0, "car_Acc": 1.0, "car_IoU": 1.0,
                                          "mAcc": 1.0, "mIoU": 1.0}

    def test_errors(self):
        with pytest.raises(OutOfRangeError, match="label out of range"):
            ConfusionMatrix(2).accumulate(np.array([0, 2]), np.array([0, 1]))
        with pytest.raises(ShapeMismatchError):
            ConfusionMatrix(2).accumulate(np.zeros(3, dtype=int), np.zeros(4, dtype=int))
        with pytest.raises(ShapeMismatchError):
            ConfusionMatrix(2).merge(ConfusionMatrix(3))

    @allure.story("与逐像素计数一致")
    def test_matches_brute_force_on_random_cases(self):
        rng = np.random.default_rng(2)
        for case in range(200):
            num_classes = int(rng.integers(1, 6))
            shape = tuple(int(s) for s in rng.integers(1, 9, 2))
            preds = [rng.integers(0, num_classes, shape) for _ in range(2)]
            gts = [rng.integers(0, num_classes, shape) for _ in range(2)]
            exclude = bool(case % 2)
            cm = ConfusionMatrix(num_classes)
            for pred, gt in zip(preds, gts):
                cm.accumulate(pred, gt)
            expected = brute_force_metrics(preds, gts, num_classes, exclude_background=exclude)
            assert cm.summarize(exclude_background=exclude) == expected, f"case {case}"

    def test_single_class_degenerate(self):
        gt = np.zeros((4, 4), dtype=int)
        summary = ConfusionMatrix(1).accumulate(gt, gt).summarize()
        assert summary == brute_force_metrics(gt, gt, 1)
        assert summary.mean_iou == 1.0
