import math
from decimal import Decimal, getcontext

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from morp_augmentor.app.label_maps import ClassId, LabelMap
from morp_augmentor.app.metrics_losses import (AllEmptyError, ConfusionCounts, ProbMap,
                                               ShapeMismatchError, cb_cross_entropy, cb_weights,
                                               composite_loss, confusion_counts,
                                               confusion_penalty, focal_tversky, iou,
                                               scene_area_stats, total_loss)
from morp_augmentor.app.schemas import LossWeights

label_grids = arrays(np.uint8, (6, 7), elements=st.integers(0, 4))


@pytest.fixture
def truth():
    return LabelMap(np.array([[0, 0, 1, 1],
                              [0, 2, 2, 1],
                              [3, 0, 0, 4]], dtype=np.uint8))


@pytest.fixture
def pred():
    return LabelMap(np.array([[0, 1, 1, 1],
                              [0, 2, 1, 1],
                              [0, 0, 0, 4]], dtype=np.uint8))


def test_confusion_counts(pred, truth):
    counts = confusion_counts(pred, truth)

    assert counts.matrix.sum() == 12
    assert counts.matrix[ClassId.SEA, ClassId.OIL] == 1
    assert counts.matrix[ClassId.LOOKALIKE, ClassId.OIL] == 1
    assert counts.matrix[ClassId.SHIP, ClassId.SEA] == 1
    assert counts.tp.tolist() == [4, 3, 1, 0, 1]
    assert counts.fp.tolist() == [1, 2, 0, 0, 0]
    assert counts.fn.tolist() == [1, 0, 1, 1, 0]


def test_confusion_counts_add(pred, truth):
    counts = confusion_counts(pred, truth)

    assert np.array_equal((counts + counts).matrix, 2 * counts.matrix)


def test_confusion_counts_shape_mismatch(pred):
    with pytest.raises(ShapeMismatchError):
        confusion_counts(pred, LabelMap(np.zeros((2, 2), dtype=np.uint8)))


def test_iou_values(pred, truth):
    scores = iou(confusion_counts(pred, truth))

    assert scores.per_class == pytest.approx([4 / 6, 3 / 5, 1 / 2, 0.0, 1.0])
    assert scores.miou == pytest.approx((4 / 6 + 3 / 5 + 1 / 2 + 0.0 + 1.0) / 5)


def test_iou_absent_class_scores_one():
    label_map = LabelMap(np.zeros((3, 3), dtype=np.uint8))

    scores = iou(confusion_counts(label_map, label_map))

    assert scores.per_class.tolist() == [1.0] * 5
    assert scores.miou == 1.0


@given(label_grids, label_grids)
@settings(max_examples=60)
def test_iou_matches_pixel_sets(pred_data, truth_data):
    scores = iou(confusion_counts(LabelMap(pred_data), LabelMap(truth_data)))

    for class_id in ClassId:
        pred_set = set(map(tuple, np.argwhere(pred_data == class_id).tolist()))
        truth_set = set(map(tuple, np.argwhere(truth_data == class_id).tolist()))
        union = pred_set | truth_set
        expected = len(pred_set & truth_set) / len(union) if union else 1.0
        assert scores.per_class[class_id] == pytest.approx(expected)


def _cb_oracle(count: int, mu: str) -> Decimal:
    getcontext().prec = 60
    base = Decimal(mu)
    return (1 - base) / (1 - base ** count)


def test_cb_weights_match_high_precision():
    counts = [100, 10, 0, 1, 50]

    weights = cb_weights(counts, normalize=False, mu=0.99)

    for class_id, count in enumerate(counts):
        if count:
            assert weights[class_id] == pytest.approx(float(_cb_oracle(count, "0.99")), rel=1e-12)
    assert weights[2] == pytest.approx(weights.max())
    assert weights[3] == pytest.approx(1.0)


def test_cb_weights_default_base_from_largest_count():
    counts = [100, 10, 0, 1, 50]

    assert cb_weights(counts, normalize=False) == pytest.approx(
        cb_weights(counts, normalize=False, mu=0.99), rel=1e-9)


def test_cb_weights_normalized_mean():
    counts = np.array([5000, 300, 40, 0, 2])

    weights = cb_weights(counts)

    assert weights[counts > 0].mean() == pytest.approx(1.0)
    assert weights[1] > weights[0]


def test_cb_weights_single_pixel_classes():
    assert cb_weights([1, 1, 0, 0, 0]).tolist() == [1.0] * 5


@pytest.mark.parametrize("counts, mu, error", (
        ([0, 0, 0, 0, 0], None, AllEmptyError),
        ([1, -1, 0, 0, 0], None, ValueError),
        ([1, 2, 0, 0, 0], 1.0, ValueError),
))
def test_cb_weights_errors(counts, mu, error):
    with pytest.raises(error):
        cb_weights(counts, mu=mu)


def test_prob_map_validation():
    with pytest.raises(ValueError, match="shape"):
        ProbMap(np.full((4, 2, 2), 0.25))
    with pytest.raises(ValueError, match="non-negative"):
        ProbMap(np.stack([np.full((2, 2), -0.5), np.full((2, 2), 1.5)]
                         + [np.zeros((2, 2))] * 3))
    with pytest.raises(ValueError, match="sum to 1"):
        ProbMap(np.full((5, 2, 2), 0.3))


def test_prob_map_keeps_caller_array_writable():
    values = np.full((5, 2, 2), 0.2)

    prob = ProbMap(values)
    values[0, 0, 0] = 0.5

    assert values.flags.writeable
    assert prob.values[0, 0, 0] == 0.2
    assert not prob.values.flags.writeable


def test_prob_map_argmax_ties_to_smaller_class(truth):
    assert ProbMap.uniform(2, 3).argmax() == LabelMap(np.zeros((2, 3), dtype=np.uint8))
    assert ProbMap.from_labels(truth).argmax() == truth


def test_cross_entropy_of_perfect_and_uniform_prediction(truth):
    weights = np.ones(5)

    assert cb_cross_entropy(ProbMap.from_labels(truth), truth, weights) == 0.0
    assert cb_cross_entropy(ProbMap.uniform(3, 4), truth, weights) == pytest.approx(math.log(5))


def test_cross_entropy_log_floor(truth, pred):
    loss = cb_cross_entropy(ProbMap.from_labels(pred), truth, np.ones(5), eps=1e-7)

    assert loss == pytest.approx(3 / 12 * -math.log(1e-7))


def test_cross_entropy_uses_class_weights(truth):
    weights = np.array([0.0, 2.0, 0.0, 0.0, 0.0])

    loss = cb_cross_entropy(ProbMap.uniform(3, 4), truth, weights)

    assert loss == pytest.approx(3 * 2.0 * math.log(5) / 12)


def test_focal_tversky_reduces_to_dice(pred, truth):
    loss = focal_tversky(ProbMap.from_labels(pred), truth, alpha=0.5, beta=0.5, gamma=1.0, eps=0.0)

    counts = confusion_counts(pred, truth)
    dice_losses = []
    for class_id in (1, 2, 3, 4):
        tp, fp, fn = counts.tp[class_id], counts.fp[class_id], counts.fn[class_id]
        dice_losses.append(1 - 2 * tp / (2 * tp + fp + fn))
    assert loss == pytest.approx(sum(dice_losses) / len(dice_losses))


def test_focal_tversky_perfect_prediction(truth):
    assert focal_tversky(ProbMap.from_labels(truth), truth) == pytest.approx(0.0, abs=1e-5)


def test_focal_tversky_without_foreground():
    sea = LabelMap(np.zeros((3, 3), dtype=np.uint8))

    assert focal_tversky(ProbMap.from_labels(sea), sea) == 0.0


def test_focal_tversky_rejects_bad_parameters(truth):
    with pytest.raises(ValueError):
        focal_tversky(ProbMap.from_labels(truth), truth, gamma=0.0)


def test_confusion_penalty():
    truth = LabelMap(np.full((2, 2), ClassId.LOOKALIKE, dtype=np.uint8))
    values = np.zeros((5, 2, 2))
    values[ClassId.OIL] = 0.5
    values[ClassId.LOOKALIKE] = 0.5
    prob = ProbMap(values)

    assert confusion_penalty(prob, truth, ClassId.LOOKALIKE, ClassId.OIL) == pytest.approx(0.25)
    assert confusion_penalty(prob, truth, ClassId.SEA, ClassId.LOOKALIKE) == 0.0
    with pytest.raises(ValueError):
        confusion_penalty(prob, truth, ClassId.OIL, ClassId.OIL)


def test_composite_loss_is_weighted_sum(truth):
    weights = LossWeights()
    prob = ProbMap.uniform(3, 4)

    breakdown = composite_loss(prob, truth, weights)

    assert set(breakdown.penalties) == {"2->1", "0->2"}
    expected = (weights.ce * breakdown.cb_ce + weights.ftl * breakdown.focal_tversky
                + 0.40 * breakdown.penalties["2->1"] + 0.30 * breakdown.penalties["0->2"])
    assert breakdown.total == pytest.approx(expected)
    assert breakdown.penalties["2->1"] == pytest.approx(0.04)


def test_composite_loss_with_explicit_class_weights(truth):
    prob = ProbMap.uniform(3, 4)

    breakdown = composite_loss(prob, truth, LossWeights(), class_weights=np.ones(5))

    assert breakdown.cb_ce == pytest.approx(math.log(5))


@pytest.mark.parametrize("weight, mode, expected", ((0.5, "raw", 2.0), (50, "percent", 2.0),
                                                   (0.0, "raw", 1.0)))
def test_total_loss(weight, mode, expected):
    assert total_loss(1.0, 2.0, weight, mode) == pytest.approx(expected)


@pytest.mark.parametrize("weight, mode", ((-1.0, "raw"), (1.0, "scaled")))
def test_total_loss_errors(weight, mode):
    with pytest.raises(ValueError):
        total_loss(1.0, 2.0, weight, mode)


def test_scene_area_stats(pred, truth):
    stats = scene_area_stats(pred, truth, 100.0)

    assert stats.predicted_km2 == pytest.approx([5e-4, 5e-4, 1e-4, 0.0, 1e-4])
    assert stats.false_positive_km2 == pytest.approx([1e-4, 2e-4, 0.0, 0.0, 0.0])
    assert stats.scores.per_class[ClassId.LAND] == 1.0


def test_scene_area_stats_rejects_bad_pixel_area(pred, truth):
    with pytest.raises(ValueError):
        scene_area_stats(pred, truth, 0.0)


def test_confusion_counts_dataclass_helpers():
    counts = ConfusionCounts(np.eye(5, dtype=np.int64))

    assert counts.fp.tolist() == [0] * 5
    assert counts.fn.tolist() == [0] * 5
