"""
This module turns (intensity scene, label mask) pairs into training patches:
    - percentile_normalize, median_filter_3x3: per-scene intensity preparation.
    - extract_patches, multiscale_patches: positive, background and multi-scale windows.
    - hard_negative_filter: windows where a model hallucinated spill over sea.
    - load_manifest, SplitAssignment: scene-level train/test splits.
    - augment_patch, save_patch: training-time augmentation and patch files.
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
import csv
import logging
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Literal, Type

import cv2
import numpy as np
from pydantic import ValidationError
from scipy import ndimage

from .label_maps import ClassId, LabelMap, MaskProcessor
from .metrics_losses import ShapeMismatchError
from .schemas import AugmentConfig, ManifestRow, PatchIndexRow

logger = logging.getLogger(__name__)

PatchKind = Literal["positive", "background", "multiscale", "hard-negative"]
SPILL_CLASSES = (ClassId.OIL, ClassId.LOOKALIKE)
MANIFEST_COLUMNS = ("Img", "SpillDate", "Lat", "Lon", "AcqDate", "DeltaDays", "Patches", "Split")
UINT16_MAX = 65535
THRESHOLD_TOLERANCE = 1e-9


class PatchPipelineError(Exception):
    """Base error of the patch pipeline."""


class DegenerateSceneError(PatchPipelineError):
    """Raised when a scene has no intensity contrast to normalize."""


class TooSmallError(PatchPipelineError):
    """Raised when a grid is smaller than the filter footprint."""


class SceneTooSmallError(PatchPipelineError):
    """Raised when a scene is smaller than the requested window."""


class ManifestParseError(PatchPipelineError):
    """Raised when a scene manifest can't be parsed."""


class SplitLeakageError(PatchPipelineError):
    """Raised when a scene belongs to more than one split."""


@dataclass(frozen=True)
class Scene:
    """
    Intensity image with its labels.

    Attributes:
        scene_id (str): Scene identifier, the manifest image number.
        intensity (np.ndarray): (H, W) finite backscatter values.
        labels (LabelMap): Labels of the same size.
        pixel_spacing (float): Ground sampling distance in meters.
    """
    scene_id: str
    intensity: np.ndarray
    labels: LabelMap
    pixel_spacing: float = 10.0

    def __post_init__(self) -> None:
        intensity = np.asarray(self.intensity, dtype=np.float64)
        if intensity.shape != self.labels.shape:
            error_message = (f"Scene '{self.scene_id}' intensity {intensity.shape} and labels "
                             f"{self.labels.shape} differ in size.")
            logger.error(error_message)
            raise ValueError(error_message)
        if not np.isfinite(intensity).all():
            error_message = f"Scene '{self.scene_id}' has non-finite intensity values."
            logger.error(error_message)
            raise ValueError(error_message)
        object.__setattr__(self, "intensity", intensity)


@dataclass(frozen=True)
class Patch:
    """
    Training window cut from a scene.

    Attributes:
        scene_id (str): Source scene.
        intensity (np.ndarray): Patch intensity.
        labels (LabelMap): Patch labels.
        row (int): Window top row in scene coordinates.
        col (int): Window left col in scene coordinates.
        window (int): Window side before any resize.
        kind (str): positive, background, multiscale or hard-negative.
    """
    scene_id: str
    intensity: np.ndarray
    labels: LabelMap
    row: int
    col: int
    window: int
    kind: PatchKind

    @property
    def name(self) -> str:
        """File stem of the patch."""
        return f"{self.scene_id}_{self.kind}_{self.row}_{self.col}_{self.window}"


def percentile_normalize(intensity: np.ndarray, low: float = 0.5, high: float = 97.5,
                         method: str = "nearest") -> np.ndarray:
    """
    Clips a scene to its percentile range and scales it to [0, 1].

    Args:
        intensity (np.ndarray): Scene intensity.
        low (float): Lower percentile.
        high (float): Upper percentile.
        method (str): 'nearest' rank or 'linear' interpolation.

    Returns:
        np.ndarray: Normalized intensity with min 0 and max 1.
    """
    intensity = np.asarray(intensity, dtype=np.float64)
    if not np.isfinite(intensity).all() or np.unique(intensity).size < 2:
        error_message = "Scene needs at least two distinct finite intensity values."
        logger.error(error_message)
        raise DegenerateSceneError(error_message)
    lower, upper = np.percentile(intensity, [low, high], method=method)
    if upper <= lower:
        error_message = f"Scene percentiles collapse: P{low}={lower}, P{high}={upper}."
        logger.error(error_message)
        raise DegenerateSceneError(error_message)
    clipped = np.clip(intensity, lower, upper)
    return (clipped - lower) / (upper - lower)


def median_filter_3x3(intensity: np.ndarray) -> np.ndarray:
    """
    Speckle suppression with a 3×3 median and reflected edges.

    Args:
        intensity (np.ndarray): Scene intensity.

    Returns:
        np.ndarray: Filtered intensity.
    """
    intensity = np.asarray(intensity, dtype=np.float64)
    if intensity.ndim != 2 or min(intensity.shape) < 3:
        error_message = f"Median filter needs a grid of at least 3×3, got {intensity.shape}."
        logger.error(error_message)
        raise TooSmallError(error_message)
    return ndimage.median_filter(intensity, size=3, mode="reflect")


def window_positions(length: int, window: int, stride: int) -> list[int]:
    """Sliding positions covering the axis, the last aligned to its end."""
    positions = list(range(0, length - window + 1, stride))
    if positions[-1] != length - window:
        positions.append(length - window)
    return positions


def _window_sums(mask: np.ndarray, rows: list[int], cols: list[int], window: int) -> np.ndarray:
    integral = np.pad(np.cumsum(np.cumsum(mask.astype(np.int64), axis=0), axis=1),
                      ((1, 0), (1, 0)))
    top, left = np.ix_(rows, cols)
    return (integral[top + window, left + window] - integral[top, left + window]
            - integral[top + window, left] + integral[top, left])


def _check_window(scene_shape: tuple[int, int], window: int) -> None:
    if scene_shape[0] < window or scene_shape[1] < window:
        error_message = f"Scene {scene_shape} is smaller than the {window} px window."
        logger.error(error_message)
        raise SceneTooSmallError(error_message)


def _cut(scene: Scene, row: int, col: int, window: int, kind: PatchKind) -> Patch:
    return Patch(scene.scene_id, scene.intensity[row:row + window, col:col + window].copy(),
                 LabelMap(scene.labels.data[row:row + window, col:col + window]),
                 row, col, window, kind)


def half_up(value: float) -> int:
    """Rounds halves away from zero for non-negative values."""
    return int(math.floor(value + 0.5))


def extract_patches(scene: Scene, window: int, stride: int, neg_pos_ratio: float,
                    rng: np.random.Generator) -> list[Patch]:
    """
    Cuts every window touching oil or look-alike plus sampled background windows.

    Args:
        scene (Scene): Scene to cut.
        window (int): Patch side.
        stride (int): Sliding stride.
        neg_pos_ratio (float): Background windows per positive window.
        rng (np.random.Generator): Generator of the background sample.

    Returns:
        list[Patch]: Positives in raster order, then background windows in raster order.
    """
    _check_window(scene.labels.shape, window)
    if stride < 1:
        error_message = f"Stride must be at least 1, got {stride}."
        logger.error(error_message)
        raise ValueError(error_message)
    rows = window_positions(scene.labels.height, window, stride)
    cols = window_positions(scene.labels.width, window, stride)
    spill = np.isin(scene.labels.data, SPILL_CLASSES)
    sums = _window_sums(spill, rows, cols, window)
    positives = [(rows[i], cols[j]) for i, j in np.argwhere(sums > 0)]
    candidates = [(rows[i], cols[j]) for i, j in np.argwhere(sums == 0)]
    wanted = min(half_up(neg_pos_ratio * len(positives)), len(candidates))
    chosen = sorted(rng.choice(len(candidates), size=wanted, replace=False).tolist()) \
        if wanted else []
    patches = [_cut(scene, row, col, window, "positive") for row, col in positives]
    patches += [_cut(scene, *candidates[i], window, "background") for i in chosen]
    logger.debug("Scene '%s': %s positive and %s background patches.",
                 scene.scene_id, len(positives), wanted)
    return patches


def resize_labels(labels: np.ndarray, size: int) -> np.ndarray:
    """Nearest-neighbor resize with source index floor(i · src / size)."""
    rows = (np.arange(size) * labels.shape[0]) // size
    cols = (np.arange(size) * labels.shape[1]) // size
    return labels[np.ix_(rows, cols)]


def multiscale_patches(scene: Scene, count: int, min_side: int, max_side: int,
                       output_size: int, support_radius: int,
                       rng: np.random.Generator) -> list[Patch]:
    """
    Cuts large windows around annotations and resizes them to the patch size.

    Args:
        scene (Scene): Scene to cut.
        count (int): Number of windows.
        min_side (int): Smallest window side.
        max_side (int): Largest window side.
        output_size (int): Side after resize.
        support_radius (int): Dilation radius of the annotation support.
        rng (np.random.Generator): Generator of sides and centers.

    Returns:
        list[Patch]: Resized multi-scale patches; empty without annotations.
    """
    height, width = scene.labels.shape
    largest = min(max_side, height, width)
    if largest < min_side:
        error_message = f"Scene {scene.labels.shape} is smaller than the {min_side} px window."
        logger.error(error_message)
        raise SceneTooSmallError(error_message)
    support = np.isin(scene.labels.data, SPILL_CLASSES)
    if count == 0 or not support.any():
        return []
    near = ndimage.distance_transform_edt(~support) <= support_radius
    centers = np.argwhere(near)
    patches = []
    for _ in range(count):
        side = int(rng.integers(min_side, largest + 1))
        center_row, center_col = centers[int(rng.integers(len(centers)))]
        row = int(np.clip(center_row - side // 2, 0, height - side))
        col = int(np.clip(center_col - side // 2, 0, width - side))
        crop = scene.intensity[row:row + side, col:col + side].astype(np.float32)
        intensity = cv2.resize(crop, (output_size, output_size), interpolation=cv2.INTER_AREA)
        labels = resize_labels(scene.labels.data[row:row + side, col:col + side], output_size)
        patches.append(Patch(scene.scene_id, intensity.astype(np.float64), LabelMap(labels),
                             row, col, side, "multiscale"))
    return patches


def hard_negative_filter(pred: LabelMap, truth: LabelMap, window: int = 512,
                         fp_fraction: float = 0.005, sea_fraction: float = 0.8,
                         stride: int | None = None) -> list[tuple[int, int]]:
    """
    Finds windows with confident false spill over mostly sea.

    Args:
        pred (LabelMap): Predicted labels of a previous model.
        truth (LabelMap): Ground truth labels.
        window (int): Window side.
        fp_fraction (float): Minimum share of predicted spill on truth sea.
        sea_fraction (float): Minimum share of truth sea.
        stride (int | None): Window stride, None tiles without overlap.

    Returns:
        list[tuple[int, int]]: (row, col) window origins in raster order.
    """
    if pred.shape != truth.shape:
        error_message = f"Prediction {pred.shape} and truth {truth.shape} differ in size."
        logger.error(error_message)
        raise ShapeMismatchError(error_message)
    _check_window(truth.shape, window)
    rows = window_positions(truth.height, window, stride or window)
    cols = window_positions(truth.width, window, stride or window)
    sea = truth.data == ClassId.SEA
    false_spill = np.isin(pred.data, SPILL_CLASSES) & sea
    area = window * window
    fp_sums = _window_sums(false_spill, rows, cols, window)
    sea_sums = _window_sums(sea, rows, cols, window)
    selected = ((fp_sums >= fp_fraction * area - THRESHOLD_TOLERANCE)
                & (sea_sums >= sea_fraction * area - THRESHOLD_TOLERANCE))
    return [(rows[i], cols[j]) for i, j in np.argwhere(selected)]


def cut_windows(scene: Scene, origins: list[tuple[int, int]], window: int,
                kind: PatchKind) -> list[Patch]:
    """Cuts patches at given origins."""
    return [_cut(scene, row, col, window, kind) for row, col in origins]


def load_manifest(manifest_path: Path) -> list[ManifestRow]:
    """
    Reads a delimited scene manifest.

    Args:
        manifest_path (Path): CSV file with the scene table columns.

    Returns:
        list[ManifestRow]: Parsed rows.
    """
    try:
        with open(manifest_path, newline="", encoding="utf-8") as file:
            reader = csv.DictReader(file)
            missing = set(MANIFEST_COLUMNS) - set(reader.fieldnames or ())
            if missing:
                error_message = f"Manifest '{manifest_path}' lacks columns: {sorted(missing)}"
                logger.error(error_message)
                raise ManifestParseError(error_message)
            rows = []
            for line, record in enumerate(reader, start=2):
                try:
                    rows.append(ManifestRow.model_validate(record))
                except ValidationError as error:
                    error_message = f"Manifest '{manifest_path}' line {line}: {error}"
                    logger.error(error_message)
                    raise ManifestParseError(error_message) from error
    except OSError as error:
        error_message = f"Can't read manifest '{manifest_path}': {error}"
        logger.error(error_message)
        raise ManifestParseError(error_message) from error
    logger.info("Manifest '%s' parsed, %s scenes.", manifest_path, len(rows))
    return rows


class SplitAssignment:
    """Scene-level train/test assignment inherited by every patch."""

    def __init__(self, rows: list[ManifestRow]) -> None:
        """
        Builds the assignment and rejects split leakage.

        Args:
            rows (list[ManifestRow]): Manifest rows.
        """
        self._splits: dict[str, str] = {}
        for row in rows:
            scene_id = str(row.img)
            known = self._splits.get(scene_id)
            if known is not None and known != row.split:
                error_message = f"Scene {scene_id} appears in both {known} and {row.split}."
                logger.error(error_message)
                raise SplitLeakageError(error_message)
            if known is not None:
                error_message = f"Scene {scene_id} is listed twice in the manifest."
                logger.error(error_message)
                raise ManifestParseError(error_message)
            self._splits[scene_id] = row.split

    @property
    def scene_ids(self) -> list[str]:
        """Scene identifiers in manifest order."""
        return list(self._splits)

    def split_of(self, scene_id: str) -> str:
        """
        Returns the split of a scene.

        Raises:
            ManifestParseError: If the scene is not in the manifest.
        """
        try:
            return self._splits[scene_id]
        except KeyError as error:
            error_message = f"Scene '{scene_id}' is not listed in the manifest."
            logger.error(error_message)
            raise ManifestParseError(error_message) from error

    def assign(self, patches: list[Patch]) -> dict[str, list[Patch]]:
        """
        Groups patches by the split of their scene.

        Args:
            patches (list[Patch]): Patches of any scenes.

        Returns:
            dict[str, list[Patch]]: 'Train' and 'Test' patch lists.
        """
        assigned: dict[str, list[Patch]] = {"Train": [], "Test": []}
        for patch in patches:
            assigned[self.split_of(patch.scene_id)].append(patch)
        return assigned


def augment_patch(patch: Patch, config: AugmentConfig, rng: np.random.Generator) -> Patch:
    """
    Applies flips, Gaussian noise and coarse dropout to a patch.

    Args:
        patch (Patch): Patch with intensity in [0, 1].
        config (AugmentConfig): Augmentation parameters.
        rng (np.random.Generator): Patch generator.

    Returns:
        Patch: Augmented copy; labels are only flipped.
    """
    intensity = patch.intensity.copy()
    labels = patch.labels.data.copy()
    if rng.random() < config.flip_probability:
        intensity, labels = intensity[:, ::-1], labels[:, ::-1]
    if rng.random() < config.flip_probability:
        intensity, labels = intensity[::-1, :], labels[::-1, :]
    if config.noise_sigma > 0:
        intensity = np.clip(intensity + rng.normal(0.0, config.noise_sigma, intensity.shape),
                            0.0, 1.0)
    intensity = np.ascontiguousarray(intensity)
    height, width = intensity.shape
    for _ in range(int(rng.integers(0, config.dropout_holes + 1))):
        hole_h = int(rng.integers(1, min(config.dropout_max_size, height) + 1))
        hole_w = int(rng.integers(1, min(config.dropout_max_size, width) + 1))
        row = int(rng.integers(0, height - hole_h + 1))
        col = int(rng.integers(0, width - hole_w + 1))
        intensity[row:row + hole_h, col:col + hole_w] = 0.0
    return replace(patch, intensity=intensity, labels=LabelMap(np.ascontiguousarray(labels)))


def encode_intensity(intensity: np.ndarray) -> bytes:
    """Encodes [0, 1] intensity as a 16-bit grayscale PNG."""
    scaled = np.floor(np.clip(intensity, 0.0, 1.0) * UINT16_MAX + 0.5).astype(np.uint16)
    success, buffer = cv2.imencode(".png", scaled)
    if not success:
        error_message = "OpenCV failed to encode patch intensity."
        logger.error(error_message)
        raise PatchPipelineError(error_message)
    return buffer.tobytes()


def save_patch(patch: Patch, output_directory: Path, split: str,
               mask_processor: Type[MaskProcessor]) -> PatchIndexRow:
    """
    Writes a patch pair under <split>/images and <split>/labels.

    Args:
        patch (Patch): Patch to save.
        output_directory (Path): Output root.
        split (str): Train or Test.
        mask_processor (Type[MaskProcessor]): Codec of the label file.

    Returns:
        PatchIndexRow: Index line with paths relative to the output root.
    """
    relative_image = Path(split.lower()) / "images" / f"{patch.name}.png"
    relative_labels = Path(split.lower()) / "labels" / f"{patch.name}.png"
    image_path = output_directory / relative_image
    image_path.parent.mkdir(parents=True, exist_ok=True)
    image_path.write_bytes(encode_intensity(patch.intensity))
    mask_processor.save_mask(patch.labels, output_directory / relative_labels)
    return PatchIndexRow(intensity=relative_image.as_posix(), labels=relative_labels.as_posix(),
                         scene=patch.scene_id, row=patch.row, col=patch.col,
                         window=patch.window, kind=patch.kind, split=split)
