"""
This module provides the morphological region perturbation engine:
    - MorpEngine: region selection, flat-aware rigid placement, apex bulges and wedges.
    - BatchGenerator: regime-driven augmentation of mask batches in a worker pool.
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
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Literal

import cv2
import numpy as np

from . import geometry
from .geometry import DegenerateNormalError, DistanceField
from .label_maps import ClassId, LabelMap, Region
from .schemas import (ApexRecord, EditParams, EditRecord, MorpConfig, PlacementRecord,
                      RayRecord)
from .seeding import EDIT_STREAM, PLACEMENT_STREAM, REGIME_STREAM, SELECTION_STREAM, derive_rng

logger = logging.getLogger(__name__)

Stages = Literal["full", "placement"]
Regime = Literal["nomove", "m00", "m50", "m100"]

EASING_FLOOR = 0.7
EASING_SPAN = 0.3


@dataclass(frozen=True)
class ApexEdit:
    """
    Bulge or wedge produced at one apex, as canvas pixel coordinates.

    Attributes:
        bulge_rows (np.ndarray): Rows of pixels added to the region.
        bulge_cols (np.ndarray): Cols of pixels added to the region.
        wedge_rows (np.ndarray): Rows of pixels removed from the region.
        wedge_cols (np.ndarray): Cols of pixels removed from the region.
        record (ApexRecord | None): Provenance of a single apex edit.
    """
    bulge_rows: np.ndarray
    bulge_cols: np.ndarray
    wedge_rows: np.ndarray
    wedge_cols: np.ndarray
    record: ApexRecord | None = None


@dataclass(frozen=True)
class AugmentedMask:
    """
    Engine output for one mask replicate.

    Attributes:
        result (LabelMap): Augmented label map.
        records (list[EditRecord]): One record per placed or edited region.
        seed (int): Master seed of the run.
        stream (tuple[int, ...]): Stream keys of this replicate.
    """
    result: LabelMap
    records: list[EditRecord] = field(default_factory=list)
    seed: int = 0
    stream: tuple[int, ...] = ()

    @property
    def skipped(self) -> bool:
        """Checks whether any region edit was skipped."""
        return any(record.skipped for record in self.records)


def _empty() -> np.ndarray:
    return np.empty(0, dtype=np.int64)


class MorpEngine:
    """Curvature-guided label-space augmentation of one label map."""

    class OutOfCanvasError(Exception):
        """Error appear when a transformed region doesn't touch the canvas anymore."""

    def __init__(self, config: MorpConfig) -> None:
        """
        Initializes the engine with validated parameters.

        Args:
            config (MorpConfig): Engine parameters.
        """
        self._config = config

    @property
    def config(self) -> MorpConfig:
        """Engine parameters."""
        return self._config

    @staticmethod
    def select_regions(regions: list[Region], k: int, mode: str, diversity: bool,
                       rng: np.random.Generator) -> list[Region]:
        """
        Picks at most k regions to edit.

        Args:
            regions (list[Region]): Candidate regions.
            k (int): Maximum number of regions.
            mode (str): 'largest' (area descending, ties by bbox) or 'random'.
            diversity (bool): Round robin over classes in ascending id order.
            rng (np.random.Generator): Generator of the random mode.

        Returns:
            list[Region]: Selected regions in priority order.
        """
        if k < 1:
            error_message = f"Region count k must be at least 1, got {k}."
            logger.error(error_message)
            raise ValueError(error_message)
        match mode:
            case "largest":
                ordered = sorted(regions, key=lambda region: (-region.area, region.bbox))
            case "random":
                ordered = [regions[i] for i in rng.permutation(len(regions))]
            case _:
                error_message = f"Unknown selection mode: {mode}"
                logger.error(error_message)
                raise ValueError(error_message)
        if not diversity:
            return ordered[:k]
        groups: dict[ClassId, list[Region]] = {}
        for region in ordered:
            groups.setdefault(region.class_id, []).append(region)
        queues = [groups[class_id] for class_id in sorted(groups)]
        selected: list[Region] = []
        depth = 0
        while len(selected) < k and any(depth < len(queue) for queue in queues):
            for queue in queues:
                if depth < len(queue) and len(selected) < k:
                    selected.append(queue[depth])
            depth += 1
        return selected

    @classmethod
    def rigid_transform(cls, region: Region, theta: float,
                        shift: tuple[int, int]) -> Region:
        """
        Rotates a region about its centroid without cropping, then translates it.

        Args:
            region (Region): Region to move.
            theta (float): Rotation in radians, counter-clockwise as displayed.
            shift (tuple[int, int]): Integer (dx, dy) translation.

        Returns:
            Region: Moved region, possibly partly outside the canvas.

        Raises:
            OutOfCanvasError: If the moved region doesn't overlap the canvas.
        """
        dx, dy = int(shift[0]), int(shift[1])
        rotated = region if theta == 0 else cls._rotate(region, theta)
        moved = rotated.translated(dy, dx)
        if not moved.overlaps_canvas():
            error_message = (f"Region moved by theta={theta:.4f}, shift={(dx, dy)} "
                             f"left the {region.canvas_shape} canvas.")
            logger.error(error_message)
            raise cls.OutOfCanvasError(error_message)
        return moved

    @staticmethod
    def _rotate(region: Region, theta: float) -> Region:
        height, width = region.mask.shape
        margin = int(math.ceil(math.hypot(height, width))) + 1
        padded, (row0, col0) = region.padded_mask(margin)
        centroid_row, centroid_col = region.centroid
        center = (centroid_col - col0, centroid_row - row0)
        matrix = cv2.getRotationMatrix2D(center, math.degrees(theta), 1.0)
        warped = cv2.warpAffine(padded.astype(np.uint8), matrix,
                                (padded.shape[1], padded.shape[0]),
                                flags=cv2.INTER_NEAREST, borderValue=0)
        if not warped.any():
            logger.warning("Rotation resampled region at %s to nothing, keeping it unrotated.",
                           region.offset)
            return region
        return Region(region.class_id, warped > 0, (row0, col0), region.canvas_shape)

    @staticmethod
    def try_paste(canvas: LabelMap, region: Region, forbid: set[ClassId],
                  allow: set[ClassId]) -> tuple[bool, LabelMap]:
        """
        Writes a region onto the canvas when every covered label permits it.

        Pixels of the region class are not permitted unless allowed, so a paste
        never merges into another target region.

        Args:
            canvas (LabelMap): Current label map.
            region (Region): Region fully inside the canvas.
            forbid (set[ClassId]): Labels that may never be covered.
            allow (set[ClassId]): Labels that may be overwritten.

        Returns:
            tuple[bool, LabelMap]: Acceptance flag and the canvas, unchanged on rejection.
        """
        if not region.fits_canvas():
            return False, canvas
        coords = region.coords
        covered = set(np.unique(canvas.data[coords[:, 0], coords[:, 1]]).tolist())
        if covered & set(forbid) or not covered <= set(allow):
            logger.debug("Paste of region at %s rejected over labels %s.",
                         region.offset, sorted(covered))
            return False, canvas
        return True, canvas.with_class(coords[:, 0], coords[:, 1], region.class_id)

    @staticmethod
    def target_length(d_in: int, scale: float, r_max: int,
                      rng: np.random.Generator) -> RayRecord:
        """
        Scales a support length and applies the soft easing cap.

        Args:
            d_in (int): Support length of the ray.
            scale (float): Expand or shrink scale.
            r_max (int): Easing radius; targets reaching it are redrawn below it.
            rng (np.random.Generator): Generator of the rounding and easing draws.

        Returns:
            RayRecord: d_in, d_target and the final d_out.
        """
        xi = int(rng.integers(0, 2))
        d_target = int(math.floor(scale * d_in + xi))
        if d_target >= r_max:
            d_out = int(math.floor(r_max * (EASING_FLOOR + EASING_SPAN * rng.random())))
            return RayRecord(d_in=d_in, d_target=d_target, d_out=d_out, xi=xi, eased=True)
        return RayRecord(d_in=d_in, d_target=d_target, d_out=d_target, xi=xi, eased=False)

    def apex_edit_single(self, region: Region, index: int, apex: tuple[float, float],
                         distance: DistanceField, params: EditParams,
                         rng: np.random.Generator, mode: str | None = None,
                         eps: float = geometry.EPS) -> ApexEdit:
        """
        Builds one bulge (expand) or wedge (shrink) at an apex.

        Args:
            region (Region): Region being edited.
            index (int): Contour index of the apex.
            apex (tuple[float, float]): Apex (x, y).
            distance (DistanceField): Distance to the region.
            params (EditParams): Edit parameters of the region class.
            rng (np.random.Generator): Region generator.
            mode (str | None): Forced 'expand' or 'shrink', None draws it from p_exp.
            eps (float): Normal regularizer.

        Returns:
            ApexEdit: Exactly one of bulge and wedge is non-empty.

        Raises:
            DegenerateNormalError: If the apex has no outward direction.
        """
        if mode is None:
            mode = "expand" if rng.random() < params.p_exp else "shrink"
        normal = geometry.outward_normal(distance, apex, region, eps)
        if mode == "expand":
            directions = geometry.fan_directions(normal, params.alpha, params.n_rays)
            scale, r_max, sign = params.s_exp, params.r_max_exp, 1.0
        else:
            directions = geometry.fan_directions(-normal, params.alpha, params.n_rays)
            scale, r_max, sign = params.s_shr, params.r_max_shr, -1.0
        rays = [self.target_length(geometry.inward_support(region, apex, sign * direction),
                                   scale, r_max, rng)
                for direction in directions]
        fan = geometry.rasterize_fan_polygon(apex, directions,
                                             np.array([ray.d_out for ray in rays], dtype=float))
        record = ApexRecord(index=index, x=float(apex[0]), y=float(apex[1]), mode=mode, rays=rays)
        if mode == "expand":
            return ApexEdit(fan.rows, fan.cols, _empty(), _empty(), record)
        inside = np.array([region.contains(row, col) for row, col in zip(fan.rows, fan.cols)],
                          dtype=bool)
        return ApexEdit(_empty(), _empty(), fan.rows[inside], fan.cols[inside], record)

    def apex_edit_multi(self, region: Region, apices: list[tuple[int, tuple[float, float]]],
                        params: EditParams, rng: np.random.Generator,
                        eps: float = geometry.EPS) -> tuple[ApexEdit, list[ApexRecord]]:
        """
        Edits a region at several apices, each with its own mode draw.

        Args:
            region (Region): Region being edited.
            apices (list[tuple[int, tuple[float, float]]]): (contour index, (x, y)) pairs.
            params (EditParams): Edit parameters of the region class.
            rng (np.random.Generator): Region generator.
            eps (float): Normal regularizer.

        Returns:
            tuple[ApexEdit, list[ApexRecord]]: Union of bulges, union of wedges, records.
        """
        distance = geometry.region_distance_field(region)
        bulges, wedges, records = [], [], []
        for index, apex in apices:
            try:
                edit = self.apex_edit_single(region, index, apex, distance, params, rng, eps=eps)
            except DegenerateNormalError as error:
                logger.warning("Apex %s of region at %s skipped: %s", index, region.offset, error)
                records.append(ApexRecord(index=index, x=float(apex[0]), y=float(apex[1]),
                                          mode="skipped", reason=str(error)))
                continue
            bulges.append((edit.bulge_rows, edit.bulge_cols))
            wedges.append((edit.wedge_rows, edit.wedge_cols))
            records.append(edit.record)
        union = ApexEdit(*self._union(bulges), *self._union(wedges))
        return union, records

    @staticmethod
    def _union(parts: list[tuple[np.ndarray, np.ndarray]]) -> tuple[np.ndarray, np.ndarray]:
        if not parts:
            return _empty(), _empty()
        stacked = np.unique(np.concatenate([np.stack([rows, cols], axis=1)
                                            for rows, cols in parts]), axis=0)
        return stacked[:, 0].astype(np.int64), stacked[:, 1].astype(np.int64)

    def compose(self, canvas: LabelMap, region: Region, edit: ApexEdit) -> LabelMap:
        """
        Writes (R ∪ B) ∖ S back into the canvas.

        Bulge pixels are written only over allowed labels or the region class; wedge
        pixels become the cleanup fill class and win over bulges.

        Args:
            canvas (LabelMap): Current label map.
            region (Region): Edited region.
            edit (ApexEdit): Union of bulges and wedges.

        Returns:
            LabelMap: Updated label map.
        """
        data = canvas.data.copy()
        height, width = canvas.shape
        permitted = np.array(sorted(set(self._config.placement.allow) | {region.class_id}))
        rows, cols = edit.bulge_rows, edit.bulge_cols
        inside = (rows >= 0) & (rows < height) & (cols >= 0) & (cols < width)
        rows, cols = rows[inside], cols[inside]
        writable = np.isin(data[rows, cols], permitted)
        data[rows[writable], cols[writable]] = region.class_id
        rows, cols = edit.wedge_rows, edit.wedge_cols
        inside = (rows >= 0) & (rows < height) & (cols >= 0) & (cols < width)
        data[rows[inside], cols[inside]] = self._config.cleanup.fill
        return LabelMap(data)

    def flat_aware_bulges(self, region: Region,
                          rng: np.random.Generator) -> tuple[Region, int]:
        """
        Adds forced-expand bulges at the midpoints of the longest flat boundary runs.

        Args:
            region (Region): Region to bulge.
            rng (np.random.Generator): Region generator.

        Returns:
            tuple[Region, int]: Bulged region of the same class and the number of bulges.
        """
        placement = self._config.placement
        apex_params = self._config.apex_for(region.class_id)
        edit_params = self._config.edit_for(region.class_id)
        contour = geometry.trace_outer_contour(region)
        if contour.degenerate or placement.max_flat_bulges == 0:
            return region, 0
        profile = geometry.curvature_profile(contour, apex_params.w, apex_params.p,
                                             apex_params.d_s, apex_params.eps, rho=0.0)
        runs = geometry.flat_runs(profile.kappa, placement.flat_kappa,
                                  placement.flat_run_length)[:placement.max_flat_bulges]
        if not runs:
            return region, 0
        distance = geometry.region_distance_field(region)
        parts = []
        for start, length in runs:
            middle = (start + length // 2) % len(contour)
            apex = (float(contour.points[middle, 0]), float(contour.points[middle, 1]))
            try:
                edit = self.apex_edit_single(region, middle, apex, distance, edit_params, rng,
                                             mode="expand", eps=apex_params.eps)
            except DegenerateNormalError:
                continue
            parts.append((edit.bulge_rows, edit.bulge_cols))
        if not parts:
            return region, 0
        rows, cols = self._union(parts)
        logger.debug("Added %s flat-run bulges to region at %s.", len(parts), region.offset)
        return region.union(rows, cols), len(parts)

    def _draw_motion(self, rng: np.random.Generator) -> tuple[float, tuple[int, int]]:
        theta = float(rng.uniform(-math.pi, math.pi))
        radius = self._config.placement.max_shift * math.sqrt(rng.random())
        direction = float(rng.uniform(-math.pi, math.pi))
        return theta, (int(radius * math.cos(direction)), int(radius * math.sin(direction)))

    def place_region(self, canvas: LabelMap, region: Region, ordinal: int,
                     rng: np.random.Generator,
                     clear_source: bool = True) -> tuple[LabelMap, EditRecord]:
        """
        Moves one region with rotation, flat-aware bulges and translation.

        The source pixels are cleared to sea first unless the caller already did.
        When no draw is accepted the last bulged shape is restored, centered on the
        original centroid, over sea only.

        Args:
            canvas (LabelMap): Current label map.
            region (Region): Region to move.
            ordinal (int): Region ordinal within the stage.
            rng (np.random.Generator): Region generator.
            clear_source (bool): Clear the region pixels before the first draw.

        Returns:
            tuple[LabelMap, EditRecord]: Updated canvas and placement provenance.
        """
        placement = self._config.placement
        if clear_source:
            canvas = self._clear(canvas, [region])
        shape, bulges = region, 0
        theta, shift = 0.0, (0, 0)
        for attempt in range(1, placement.max_paste_retries + 1):
            theta, shift = self._draw_motion(rng)
            try:
                rotated = self.rigid_transform(region, theta, (0, 0))
            except self.OutOfCanvasError:
                continue
            shape, bulges = self.flat_aware_bulges(rotated, rng)
            moved = shape.translated(shift[1], shift[0])
            accepted, pasted = self.try_paste(canvas, moved, set(placement.forbid),
                                              set(placement.allow))
            if accepted:
                logger.debug("Region %s placed after %s attempts.", ordinal, attempt)
                record = PlacementRecord(theta=theta, shift=shift, attempts=attempt,
                                         bulges=bulges, status="accepted")
                return pasted, EditRecord(region=ordinal, stage="placement",
                                          class_id=region.class_id, area_before=region.area,
                                          area_after=moved.area, placement=record)
        restored = self._restore_near_origin(canvas, region, shape)
        logger.warning("Region %s not placed in %s attempts, restored near origin.",
                       ordinal, placement.max_paste_retries)
        record = PlacementRecord(theta=theta, shift=shift, attempts=placement.max_paste_retries,
                                 bulges=bulges, status="restored")
        area_after = int(np.count_nonzero(restored.data == region.class_id)
                         - np.count_nonzero(canvas.data == region.class_id))
        return restored, EditRecord(region=ordinal, stage="placement", class_id=region.class_id,
                                    area_before=region.area, area_after=area_after,
                                    placement=record)

    @staticmethod
    def _clear(canvas: LabelMap, regions: list[Region]) -> LabelMap:
        if not regions:
            return canvas
        coords = np.concatenate([region.coords for region in regions])
        return canvas.with_class(coords[:, 0], coords[:, 1], ClassId.SEA)

    @staticmethod
    def _restore_near_origin(canvas: LabelMap, original: Region, shape: Region) -> LabelMap:
        origin_row, origin_col = original.centroid
        shape_row, shape_col = shape.centroid
        centered = shape.translated(int(math.floor(origin_row - shape_row + 0.5)),
                                    int(math.floor(origin_col - shape_col + 0.5)))
        clipped = centered.clipped()
        if clipped is None:
            return canvas
        coords = clipped.coords
        data = canvas.data.copy()
        sea = data[coords[:, 0], coords[:, 1]] == ClassId.SEA
        data[coords[sea, 0], coords[sea, 1]] = original.class_id
        return LabelMap(data)

    def _components(self, canvas: LabelMap) -> list[Region]:
        connectivity = self._config.cleanup.connectivity
        return [region for class_id in sorted(set(self._config.selection.target_classes))
                for region in canvas.connected_components(class_id, connectivity)]

    def _select(self, canvas: LabelMap, seed: int, stream: tuple[int, ...], stage: int,
                k: int, diversity: bool) -> list[Region]:
        regions = self._components(canvas)
        if not regions or k < 1:
            return []
        rng = derive_rng(seed, *stream, SELECTION_STREAM, stage)
        return self.select_regions(regions, k, self._config.selection.mode, diversity, rng)

    def _large_oil(self, canvas: LabelMap) -> Region | None:
        if ClassId.OIL not in self._config.selection.target_classes:
            return None
        oil = canvas.connected_components(ClassId.OIL, self._config.cleanup.connectivity)
        if not oil:
            return None
        largest = min(oil, key=lambda region: (-region.area, region.bbox))
        if largest.area / (canvas.height * canvas.width) >= self._config.large_oil_fraction:
            return largest
        return None

    def edit_region(self, canvas: LabelMap, region: Region, ordinal: int, large: bool,
                    rng: np.random.Generator) -> tuple[LabelMap, EditRecord]:
        """
        Finds, spreads and edits the apices of one region.

        Args:
            canvas (LabelMap): Current label map.
            region (Region): Region to edit.
            ordinal (int): Region ordinal within the stage.
            large (bool): Region was forced in as the large oil region.
            rng (np.random.Generator): Region generator.

        Returns:
            tuple[LabelMap, EditRecord]: Updated canvas and edit provenance.
        """
        apex_params = self._config.apex_for(region.class_id)
        edit_params = self._config.edit_for(region.class_id)
        record = EditRecord(region=ordinal, stage="apex", class_id=region.class_id,
                            area_before=region.area, area_after=region.area, large=large)
        contour = geometry.trace_outer_contour(region)
        if contour.degenerate:
            return canvas, record
        profile = geometry.curvature_profile(contour, apex_params.w, apex_params.p,
                                             apex_params.d_s, apex_params.eps, apex_params.rho)
        indices = geometry.detect_apices(profile.kappa_plus, apex_params.q, apex_params.d)
        if not indices:
            return canvas, record
        centroid_row, centroid_col = region.centroid
        kept = geometry.select_apices_kmeans(contour.points[indices], indices, apex_params.m,
                                             (centroid_col, centroid_row), rng)
        apices = [(index, (float(contour.points[index, 0]), float(contour.points[index, 1])))
                  for index in kept]
        edit, apex_records = self.apex_edit_multi(region, apices, edit_params, rng,
                                                  apex_params.eps)
        updated = self.compose(canvas, region, edit)
        gained = int(np.count_nonzero(updated.data == region.class_id)
                     - np.count_nonzero(canvas.data == region.class_id))
        logger.debug("Region %s edited at %s apices.", ordinal, len(apices))
        return updated, record.model_copy(update={"apices": apex_records,
                                                  "area_after": region.area + gained})

    def morp_augment(self, label_map: LabelMap, seed: int, stream: tuple[int, ...] = (),
                     stages: Stages = "full") -> AugmentedMask:
        """
        Runs placement, then apex editing, then small component cleanup.

        Every placed source is cleared before the first paste. The editing stage
        picks as many regions as were placed, without the diversity rule.

        Args:
            label_map (LabelMap): Input label map.
            seed (int): Master seed.
            stream (tuple[int, ...]): Stream keys of this replicate.
            stages (str): 'full' or 'placement' only.

        Returns:
            AugmentedMask: Augmented map and provenance records.
        """
        selection = self._config.selection
        records: list[EditRecord] = []
        moving = self._select(label_map, seed, stream, 0, selection.n_regions, selection.diversity)
        canvas = self._clear(label_map, moving)
        for ordinal, region in enumerate(moving):
            rng = derive_rng(seed, *stream, PLACEMENT_STREAM, ordinal)
            canvas, record = self.place_region(canvas, region, ordinal, rng, clear_source=False)
            records.append(record)

        if stages == "full" and moving:
            count = len(moving)
            selected = self._select(canvas, seed, stream, 1, count, diversity=False)
            large = self._large_oil(canvas)
            if large is not None and not any(region.pixels == large.pixels for region in selected):
                if len(selected) >= count:
                    selected = selected[:-1]
                selected.append(large)
            for ordinal, region in enumerate(selected):
                rng = derive_rng(seed, *stream, EDIT_STREAM, ordinal)
                is_large = large is not None and region.pixels == large.pixels
                canvas, record = self.edit_region(canvas, region, ordinal, is_large, rng)
                records.append(record)

        cleanup = self._config.cleanup
        canvas = canvas.remove_small(cleanup.min_px, self._config.selection.target_classes,
                                     cleanup.fill, cleanup.connectivity)
        return AugmentedMask(canvas, records, seed, tuple(stream))


class BatchGenerator:
    """Applies a morph regime to a batch of masks with a worker pool."""

    class DuplicateOutputError(Exception):
        """Error appear when a replicate can't be made different from earlier outputs."""

    def __init__(self, engine: MorpEngine | None, jobs: int = 1,
                 max_duplicate_retries: int = 5) -> None:
        """
        Initializes the generator.

        Args:
            engine (MorpEngine | None): Engine applied to every mask, unused by nomove.
            jobs (int): Worker pool width.
            max_duplicate_retries (int): Redraws of a replicate equal to an earlier output.
        """
        self._engine = engine
        self._jobs = max(1, jobs)
        self._max_duplicate_retries = max_duplicate_retries

    @staticmethod
    def full_morp_indices(count: int, regime: Regime, seed: int) -> set[int]:
        """
        Chooses the masks receiving full editing.

        Args:
            count (int): Number of input masks.
            regime (str): nomove, m00, m50 or m100.
            seed (int): Master seed.

        Returns:
            set[int]: Indices of fully edited masks; the rest get placement only.
        """
        match regime:
            case "nomove" | "m00":
                return set()
            case "m50":
                rng = derive_rng(seed, REGIME_STREAM)
                chosen = rng.choice(count, size=math.ceil(0.5 * count), replace=False)
                return {int(index) for index in chosen}
            case "m100":
                return set(range(count))
            case _:
                error_message = f"Unknown regime: {regime}"
                logger.error(error_message)
                raise ValueError(error_message)

    def generate(self, masks: list[LabelMap], regime: Regime, pool_multiplier: int,
                 seed: int) -> list[AugmentedMask]:
        """
        Augments every mask pool_multiplier times.

        Args:
            masks (list[LabelMap]): Input masks.
            regime (str): nomove, m00, m50 or m100.
            pool_multiplier (int): Replicates per mask.
            seed (int): Master seed.

        Returns:
            list[AugmentedMask]: Outputs ordered by (mask, replicate).
        """
        if not masks:
            error_message = "Batch generation needs at least one mask."
            logger.error(error_message)
            raise ValueError(error_message)
        if pool_multiplier < 1:
            error_message = f"Pool multiplier must be at least 1, got {pool_multiplier}."
            logger.error(error_message)
            raise ValueError(error_message)
        full = self.full_morp_indices(len(masks), regime, seed)
        tasks = [(index, replicate) for index in range(len(masks))
                 for replicate in range(pool_multiplier)]
        logger.info("Generating %s masks with regime '%s'.", len(tasks), regime)

        def run(task: tuple[int, int], attempt: int = 0) -> AugmentedMask:
            index, replicate = task
            stream = (index, replicate) if attempt == 0 else (index, replicate, attempt)
            if regime == "nomove":
                return AugmentedMask(masks[index], [], seed, stream)
            stages = "full" if index in full else "placement"
            return self._engine.morp_augment(masks[index], seed, stream, stages)

        with ThreadPoolExecutor(max_workers=self._jobs) as executor:
            outputs = list(executor.map(run, tasks))

        if pool_multiplier > 1 and regime != "nomove":
            outputs = self._ensure_unique(outputs, tasks, run)
        logger.info("Batch generation finished.")
        return outputs

    def _ensure_unique(self, outputs: list[AugmentedMask], tasks: list[tuple[int, int]],
                       run) -> list[AugmentedMask]:
        seen: dict[bytes, tuple[int, int]] = {}
        for position, task in enumerate(tasks):
            output = outputs[position]
            attempt = 0
            while output.result.digest() in seen:
                attempt += 1
                if attempt > self._max_duplicate_retries:
                    error_message = (f"Replicate {task[1]} of mask {task[0]} equals output "
                                     f"{seen[output.result.digest()]} after "
                                     f"{self._max_duplicate_retries} redraws.")
                    logger.error(error_message)
                    raise self.DuplicateOutputError(error_message)
                logger.debug("Replicate %s duplicates an earlier output, redrawing.", task)
                output = run(task, attempt)
            seen[output.result.digest()] = task
            outputs[position] = output
        return outputs
