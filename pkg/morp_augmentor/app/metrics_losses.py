"""
Segmentation metrics and training objectives on label maps and probability maps.
LICENSE
=======
Copyright (C) 2024  MorpAugmentor contributors

This program is free software: you can redistribute it and/or modify
it under the terms of the GNU General Public License as published by
the Free Software Foundation, either version 3 of the License, or
(at your option) any later version.

This program is distributed in the hope that it will be useful,
but WITHOUT ANY WARRANTY; without even the implied warranty of
MERCHANTABILITY or FITNESS FOR A PARTICULAR PURPOSE.  See the
GNU General Public License for more details.

You should have received a copy of the GNU General Public License
along with this program.  If not, see <https://www.gnu.org/licenses/>.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .label_maps import NUM_CLASSES, ClassId, LabelMap
from .schemas import LossWeights

logger = logging.getLogger(__name__)

FOREGROUND = (ClassId.OIL, ClassId.LOOKALIKE, ClassId.SHIP, ClassId.LAND)
SUM_TOLERANCE = 1e-6
M2_PER_KM2 = 1e6


class ShapeMismatchError(Exception):
    """Raised when compared maps differ in size."""


class AllEmptyError(Exception):
    """Raised when class balancing gets no pixel at all."""


def _check_shapes(first: tuple[int, ...], second: tuple[int, ...]) -> None:
    if tuple(first) != tuple(second):
        error_message = f"Shapes differ: {tuple(first)} vs {tuple(second)}."
        logger.error(error_message)
        raise ShapeMismatchError(error_message)


@dataclass(frozen=True)
class ProbMap:
    """
    Per-pixel class probabilities.

    Attributes:
        values (np.ndarray): (C=5, H, W) probabilities, each pixel summing to 1.
    """
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=np.float64)
        if values.ndim != 3 or values.shape[0] != NUM_CLASSES:
            error_message = f"Probability map must have shape (5, H, W), got {values.shape}."
            logger.error(error_message)
            raise ValueError(error_message)
        if not np.isfinite(values).all() or (values < 0).any():
            error_message = "Probabilities must be finite and non-negative."
            logger.error(error_message)
            raise ValueError(error_message)
        if np.abs(values.sum(axis=0) - 1.0).max() > SUM_TOLERANCE:
            error_message = "Probabilities of every pixel must sum to 1."
            logger.error(error_message)
            raise ValueError(error_message)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def shape(self) -> tuple[int, int]:
        """(height, width) of the map."""
        return self.values.shape[1], self.values.shape[2]

    @classmethod
    def from_labels(cls, label_map: LabelMap) -> "ProbMap":
        """One-hot probabilities of a label map."""
        one_hot = np.eye(NUM_CLASSES, dtype=np.float64)[label_map.data]
        return cls(np.moveaxis(one_hot, -1, 0))

    @classmethod
    def uniform(cls, height: int, width: int) -> "ProbMap":
        """Equal probability of every class."""
        return cls(np.full((NUM_CLASSES, height, width), 1.0 / NUM_CLASSES))

    def argmax(self) -> LabelMap:
        """Hard prediction, ties to the smaller class id."""
        return LabelMap(np.argmax(self.values, axis=0).astype(np.uint8))


@dataclass(frozen=True)
class ConfusionCounts:
    """
    Contingency table of (truth, pred) pixel pairs.

    Attributes:
        matrix (np.ndarray): 5×5 counts, rows truth and columns prediction.
    """
    matrix: np.ndarray

    @property
    def tp(self) -> np.ndarray:
        """True positives per class."""
        return np.diag(self.matrix).copy()

    @property
    def fp(self) -> np.ndarray:
        """False positives per class."""
        return self.matrix.sum(axis=0) - np.diag(self.matrix)

    @property
    def fn(self) -> np.ndarray:
        """False negatives per class."""
        return self.matrix.sum(axis=1) - np.diag(self.matrix)

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.matrix + other.matrix)


@dataclass(frozen=True)
class IoUScores:
    """Per-class IoU and their unweighted mean."""
    per_class: np.ndarray
    miou: float


@dataclass(frozen=True)
class LossBreakdown:
    """
    Composite loss and its unweighted terms.

    Attributes:
        cb_ce (float): Class-balanced cross entropy.
        focal_tversky (float): Focal-Tversky loss.
        penalties (dict[str, float]): Confusion penalties keyed 'a->b'.
        total (float): Weighted sum of the terms.
    """
    cb_ce: float
    focal_tversky: float
    penalties: dict[str, float] = field(default_factory=dict)
    total: float = 0.0


@dataclass(frozen=True)
class SceneAreaStats:
    """Predicted and false positive areas per class in km², with the scene IoU."""
    predicted_km2: np.ndarray
    false_positive_km2: np.ndarray
    scores: IoUScores


def confusion_counts(pred: LabelMap, truth: LabelMap) -> ConfusionCounts:
    """
    Counts (truth, pred) class pairs.

    Args:
        pred (LabelMap): Predicted labels.
        truth (LabelMap): Ground truth labels.

    Returns:
        ConfusionCounts: 5×5 contingency table.
    """
    _check_shapes(pred.shape, truth.shape)
    pairs = truth.data.astype(np.int64).ravel() * NUM_CLASSES + pred.data.astype(np.int64).ravel()
    matrix = np.bincount(pairs, minlength=NUM_CLASSES ** 2).reshape(NUM_CLASSES, NUM_CLASSES)
    return ConfusionCounts(matrix)


def iou(counts: ConfusionCounts) -> IoUScores:
    """
    Intersection over union of every class.

    A class absent from both prediction and truth scores 1.

    Args:
        counts (ConfusionCounts): Contingency table.

    Returns:
        IoUScores: Per-class IoU and mIoU over all five classes.
    """
    tp = counts.tp.astype(np.float64)
    union = tp + counts.fp + counts.fn
    per_class = np.ones(NUM_CLASSES, dtype=np.float64)
    present = union > 0
    per_class[present] = tp[present] / union[present]
    return IoUScores(per_class, float(per_class.mean()))


def cb_weights(counts: Sequence[int], normalize: bool = True,
               mu: float | None = None) -> np.ndarray:
    """
    Class-balanced weights (1 - mu) / (1 - mu^n_c).

    Args:
        counts (Sequence[int]): Pixel count of every class.
        normalize (bool): Scale weights to mean 1 over present classes.
        mu (float | None): Base in (0, 1); None uses (max n - 1) / max n.

    Returns:
        np.ndarray: Weight per class. Absent classes get the largest present weight.
    """
    counts = np.asarray(counts, dtype=np.float64)
    if (counts < 0).any():
        error_message = "Class counts must be non-negative."
        logger.error(error_message)
        raise ValueError(error_message)
    present = counts > 0
    if not present.any():
        error_message = "Class-balanced weights need at least one non-empty class."
        logger.error(error_message)
        raise AllEmptyError(error_message)
    if mu is None:
        one_minus_mu = 1.0 / counts.max()
    else:
        if not 0 < mu < 1:
            error_message = f"Class-balanced base must lie in (0, 1), got {mu}."
            logger.error(error_message)
            raise ValueError(error_message)
        one_minus_mu = 1.0 - mu

    weights = np.empty_like(counts)
    if one_minus_mu >= 1.0:
        weights[present] = 1.0
    else:
        log_mu = math.log1p(-one_minus_mu)
        weights[present] = one_minus_mu / -np.expm1(counts[present] * log_mu)
    weights[~present] = weights[present].max()
    if normalize:
        weights = weights / weights[present].mean()
    return weights


def cb_cross_entropy(prob: ProbMap, truth: LabelMap, weights: Sequence[float],
                     eps: float = 1e-7) -> float:
    """
    Mean of -w_y log p_y over pixels with a floored log argument.

    Args:
        prob (ProbMap): Predicted probabilities.
        truth (LabelMap): Ground truth labels.
        weights (Sequence[float]): Weight of every class.
        eps (float): Log floor.

    Returns:
        float: Loss value.
    """
    _check_shapes(prob.shape, truth.shape)
    weights = np.asarray(weights, dtype=np.float64)
    labels = truth.data.astype(np.int64)
    p_true = np.take_along_axis(prob.values, labels[None, :, :], axis=0)[0]
    terms = -weights[labels] * np.log(np.maximum(p_true, eps))
    return math.fsum(terms.ravel().tolist()) / terms.size


def focal_tversky(prob: ProbMap, truth: LabelMap, alpha: float = 0.65, beta: float = 0.35,
                  gamma: float = 1.33, eps: float = 1e-6) -> float:
    """
    Focal-Tversky loss over the foreground classes with non-empty soft support.

    Args:
        prob (ProbMap): Predicted probabilities.
        truth (LabelMap): Ground truth labels.
        alpha (float): False positive weight.
        beta (float): False negative weight.
        gamma (float): Focal exponent.
        eps (float): Denominator regularizer.

    Returns:
        float: Mean of (1 - T_c)^gamma, 0 when no foreground class is involved.
    """
    _check_shapes(prob.shape, truth.shape)
    if alpha < 0 or beta < 0 or gamma <= 0:
        error_message = f"Invalid Tversky parameters alpha={alpha}, beta={beta}, gamma={gamma}."
        logger.error(error_message)
        raise ValueError(error_message)
    losses = []
    for class_id in FOREGROUND:
        p_c = prob.values[class_id].ravel()
        y_c = (truth.data == class_id).ravel().astype(np.float64)
        tp = math.fsum((p_c * y_c).tolist())
        fp = math.fsum((p_c * (1.0 - y_c)).tolist())
        fn = math.fsum(((1.0 - p_c) * y_c).tolist())
        if tp + fp + fn <= 0:
            continue
        denominator = tp + alpha * fp + beta * fn + eps
        index = tp / denominator if denominator > 0 else 0.0
        losses.append((1.0 - index) ** gamma)
    if not losses:
        return 0.0
    return math.fsum(losses) / len(losses)


def confusion_penalty(prob: ProbMap, truth: LabelMap, a: ClassId, b: ClassId,
                      gamma_p: float = 2.0) -> float:
    """
    Mean confidence^gamma_p for class b over pixels whose truth is class a.

    Args:
        prob (ProbMap): Predicted probabilities.
        truth (LabelMap): Ground truth labels.
        a (ClassId): True class.
        b (ClassId): Confused class.
        gamma_p (float): Exponent.

    Returns:
        float: Penalty, 0 when class a is absent.
    """
    _check_shapes(prob.shape, truth.shape)
    if a == b:
        error_message = f"Confusion penalty needs two distinct classes, got {a}."
        logger.error(error_message)
        raise ValueError(error_message)
    selected = prob.values[b][truth.data == a]
    if selected.size == 0:
        return 0.0
    return math.fsum((selected ** gamma_p).tolist()) / selected.size


def composite_loss(prob: ProbMap, truth: LabelMap, weights: LossWeights,
                   class_weights: Sequence[float] | None = None) -> LossBreakdown:
    """
    Weighted sum of class-balanced CE, Focal-Tversky and confusion penalties.

    Args:
        prob (ProbMap): Predicted probabilities.
        truth (LabelMap): Ground truth labels.
        weights (LossWeights): Term weights and shape parameters.
        class_weights (Sequence[float] | None): CE class weights; None derives
            class-balanced weights from the truth histogram.

    Returns:
        LossBreakdown: Unweighted terms and the weighted total.
    """
    if class_weights is None:
        histogram = truth.class_histogram()
        class_weights = cb_weights([histogram[class_id] for class_id in ClassId],
                                   mu=weights.cb_mu)
    cross_entropy = cb_cross_entropy(prob, truth, class_weights, weights.ce_eps)
    tversky = focal_tversky(prob, truth, weights.tversky_alpha, weights.tversky_beta,
                            weights.tversky_gamma, weights.tversky_eps)
    penalties = {}
    weighted = [weights.ce * cross_entropy, weights.ftl * tversky]
    for pair in weights.penalties:
        value = confusion_penalty(prob, truth, pair.truth, pair.pred, weights.penalty_gamma)
        penalties[f"{int(pair.truth)}->{int(pair.pred)}"] = value
        weighted.append(pair.weight * value)
    return LossBreakdown(cross_entropy, tversky, penalties, math.fsum(weighted))


def total_loss(real: float, synth: float, synth_weight: float, mode: str = "raw") -> float:
    """
    Adds the weighted synthetic loss to the real loss.

    Args:
        real (float): Loss on real samples.
        synth (float): Loss on synthetic samples.
        synth_weight (float): lambda_synth.
        mode (str): 'raw' uses lambda_synth, 'percent' uses lambda_synth / 100.

    Returns:
        float: Total loss.
    """
    if synth_weight < 0:
        error_message = f"Synthetic loss weight must be non-negative, got {synth_weight}."
        logger.error(error_message)
        raise ValueError(error_message)
    match mode:
        case "raw":
            scale = synth_weight
        case "percent":
            scale = synth_weight / 100.0
        case _:
            error_message = f"Unknown synthetic weight mode: {mode}"
            logger.error(error_message)
            raise ValueError(error_message)
    return real + scale * synth


def scene_area_stats(pred: LabelMap, truth: LabelMap, pixel_area_m2: float) -> SceneAreaStats:
    """
    Predicted and false positive areas per class with the scene IoU.

    Args:
        pred (LabelMap): Predicted labels.
        truth (LabelMap): Ground truth labels.
        pixel_area_m2 (float): Ground area of one pixel in m².

    Returns:
        SceneAreaStats: Areas in km² and IoU scores.
    """
    if pixel_area_m2 <= 0:
        error_message = f"Pixel area must be positive, got {pixel_area_m2}."
        logger.error(error_message)
        raise ValueError(error_message)
    counts = confusion_counts(pred, truth)
    predicted = counts.matrix.sum(axis=0).astype(np.float64)
    false_positive = counts.fp.astype(np.float64)
    return SceneAreaStats(predicted * pixel_area_m2 / M2_PER_KM2,
                          false_positive * pixel_area_m2 / M2_PER_KM2,
                          iou(counts))
