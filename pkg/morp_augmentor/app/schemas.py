"""
Pydantic models for run configuration and provenance records.
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
from datetime import date, datetime
from typing import Literal

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .label_maps import ClassId, MaskFormat

logger = logging.getLogger(__name__)


class StrictModel(BaseModel):
    """Base model rejecting unknown keys."""
    model_config = ConfigDict(extra="forbid")


class SelectionConfig(StrictModel):
    """
    Region selection parameters.

    Attributes:
        target_classes (list[ClassId]): Classes whose regions are edited.
        n_regions (int): Number of regions k picked per mask.
        mode (str): 'largest' by area or 'random' draw.
        diversity (bool): Balance the selection across target classes.
    """
    target_classes: list[ClassId] = [ClassId.OIL, ClassId.LOOKALIKE]
    n_regions: int = Field(default=4, ge=1)
    mode: Literal["largest", "random"] = "random"
    diversity: bool = True


class PlacementConfig(StrictModel):
    """
    Rigid placement parameters.

    Attributes:
        max_shift (float): S_max, largest translation norm in pixels.
        forbid (list[ClassId]): Labels a paste may never cover.
        allow (list[ClassId]): Labels a paste may overwrite.
        max_paste_retries (int): Fresh (theta, shift) draws before restoring near origin.
        flat_run_length (int): L_flat, minimum contour points of a flat run.
        flat_kappa (float): kappa_flat, curvature magnitude treated as flat.
        max_flat_bulges (int): Cap of bulged flat runs per region.
    """
    max_shift: float = Field(default=64.0, ge=0)
    forbid: list[ClassId] = [ClassId.LAND]
    allow: list[ClassId] = [ClassId.SEA]
    max_paste_retries: int = Field(default=10, ge=1)
    flat_run_length: int = Field(ge=1)
    flat_kappa: float = Field(gt=0)
    max_flat_bulges: int = Field(default=2, ge=0)


class ApexOverride(StrictModel):
    """Per-class apex discovery overrides; unset fields fall back to the global section."""
    w: int | None = None
    p: int | None = None
    q: float | None = None
    d: int | None = None
    rho: float | None = None
    d_s: int | None = None
    m: int | None = None


class ApexParams(StrictModel):
    """
    Apex discovery parameters.

    Attributes:
        w (int): Savitzky-Golay window, odd.
        p (int): Savitzky-Golay polynomial order, p < w.
        q (float): Prominence quantile in (0, 1).
        d (int): Minimum circular index distance between apices.
        rho (float): Radial boost strength, 0 disables it.
        d_s (int): Derivative step in contour points.
        m (int): Apices kept per region after k-means spreading.
        eps (float): Regularizer of curvature and normal denominators.
    """
    w: int = Field(ge=3)
    p: int = Field(ge=0)
    q: float = Field(gt=0, lt=1)
    d: int = Field(ge=1)
    rho: float = Field(ge=0)
    d_s: int = Field(ge=1)
    m: int = Field(default=3, ge=1)
    eps: float = Field(default=1e-6, gt=0)

    @model_validator(mode="after")
    def check_window(self) -> "ApexParams":
        """Validates the smoothing window against the polynomial order."""
        if self.w % 2 == 0:
            error_message = f"Smoothing window w must be odd, got {self.w}."
            logger.error(error_message)
            raise ValueError(error_message)
        if self.p >= self.w:
            error_message = f"Polynomial order p={self.p} must be lower than window w={self.w}."
            logger.error(error_message)
            raise ValueError(error_message)
        return self


class ApexSection(ApexParams):
    """Global apex parameters with optional per-class overrides."""
    oil: ApexOverride | None = None
    lookalike: ApexOverride | None = None


class EditOverride(StrictModel):
    """Per-class edit overrides; unset fields fall back to the global section."""
    alpha: float | None = None
    n_rays: int | None = None
    p_exp: float | None = None
    s_exp: float | None = None
    s_shr: float | None = None
    r_max_exp: int | None = None
    r_max_shr: int | None = None


class EditParams(StrictModel):
    """
    Apex edit parameters.

    Attributes:
        alpha (float): Fan half-angle in radians.
        n_rays (int): Rays per fan.
        p_exp (float): Probability of the expand mode.
        s_exp (float): Expand scale, at least 1.
        s_shr (float): Shrink scale.
        r_max_exp (int): R_grow, soft easing radius of bulges.
        r_max_shr (int): Soft easing radius of wedges.
    """
    alpha: float = Field(gt=0)
    n_rays: int = Field(ge=2)
    p_exp: float = Field(default=0.5, ge=0, le=1)
    s_exp: float = Field(default=1.2, ge=1)
    s_shr: float = Field(default=0.5, ge=0)
    r_max_exp: int = Field(default=30, ge=1)
    r_max_shr: int = Field(default=15, ge=1)


class EditSection(EditParams):
    """Global edit parameters with optional per-class overrides."""
    oil: EditOverride | None = None
    lookalike: EditOverride | None = None


class CleanupConfig(StrictModel):
    """
    Final cleanup parameters.

    Attributes:
        min_px (int): Components of target classes smaller than this are removed.
        fill (ClassId): Replacement class of removed pixels.
        connectivity (int): Neighbourhood of component analysis.
    """
    min_px: int = Field(ge=1)
    fill: ClassId = ClassId.SEA
    connectivity: Literal[4, 8] = 8


class MorpConfig(StrictModel):
    """
    Every parameter of the morphological region perturbation engine.

    Attributes:
        selection (SelectionConfig): Region selection.
        placement (PlacementConfig): Rigid placement and flat-aware bulges.
        apex (ApexSection): Apex discovery, with per-class overrides.
        edit (EditSection): Apex edits, with per-class overrides.
        cleanup (CleanupConfig): Final small component removal.
        large_oil_fraction (float): gamma, area fraction forcing the largest oil region in.
    """
    selection: SelectionConfig = SelectionConfig()
    placement: PlacementConfig
    apex: ApexSection
    edit: EditSection
    cleanup: CleanupConfig
    large_oil_fraction: float = Field(gt=0, le=1)

    @model_validator(mode="after")
    def check_label_sets(self) -> "MorpConfig":
        """Validates label sets and every per-class parameter overlay."""
        forbid = set(self.placement.forbid)
        allow = set(self.placement.allow)
        targets = set(self.selection.target_classes)
        problems = []
        if forbid & allow:
            problems.append(f"forbid and allow overlap: {sorted(forbid & allow)}")
        if targets & forbid:
            problems.append(f"target classes are forbidden: {sorted(targets & forbid)}")
        if ClassId.SEA not in allow:
            problems.append("sea must be in the allow set")
        if self.cleanup.fill in targets:
            problems.append("cleanup fill class can't be a target class")
        if self.cleanup.fill in forbid:
            problems.append("cleanup fill class is forbidden")
        elif self.cleanup.fill not in allow:
            problems.append("cleanup fill class must be in the allow set")
        if problems:
            error_message = "Invalid MORP label sets: " + "; ".join(problems)
            logger.error(error_message)
            raise ValueError(error_message)
        for class_id in targets:
            self.apex_for(class_id)
            self.edit_for(class_id)
        return self

    @staticmethod
    def _override_for(section: ApexSection | EditSection,
                      class_id: ClassId) -> ApexOverride | EditOverride | None:
        match class_id:
            case ClassId.OIL:
                return section.oil
            case ClassId.LOOKALIKE:
                return section.lookalike
            case _:
                return None

    def apex_for(self, class_id: ClassId) -> ApexParams:
        """
        Resolves apex parameters of a class: class override first, then global value.

        Args:
            class_id (ClassId): Region class.

        Returns:
            ApexParams: Validated parameters.
        """
        values = self.apex.model_dump(exclude={"oil", "lookalike"})
        override = self._override_for(self.apex, class_id)
        if override is not None:
            values.update(override.model_dump(exclude_none=True))
        return ApexParams.model_validate(values)

    def edit_for(self, class_id: ClassId) -> EditParams:
        """
        Resolves edit parameters of a class: class override first, then global value.

        Args:
            class_id (ClassId): Region class.

        Returns:
            EditParams: Validated parameters.
        """
        values = self.edit.model_dump(exclude={"oil", "lookalike"})
        override = self._override_for(self.edit, class_id)
        if override is not None:
            values.update(override.model_dump(exclude_none=True))
        return EditParams.model_validate(values)


class BatchConfig(StrictModel):
    """
    Augmentation campaign parameters.

    Attributes:
        regime (str): nomove, m00 (placement only), m50 or m100 (full editing share).
        pool_multiplier (int): Replicates generated per input mask.
        mask_format (MaskFormat): On-disk format of input and output masks.
        max_duplicate_retries (int): Extra seed draws of a replicate equal to an earlier one.
    """
    regime: Literal["nomove", "m00", "m50", "m100"] = "m100"
    pool_multiplier: Literal[1, 2, 4] = 1
    mask_format: MaskFormat = MaskFormat.INDEXED
    max_duplicate_retries: int = Field(default=5, ge=0)


class ConfusionPair(StrictModel):
    """Weighted confusion penalty term: truth class a predicted as class b."""
    truth: ClassId
    pred: ClassId
    weight: float = Field(ge=0)

    @model_validator(mode="after")
    def check_distinct(self) -> "ConfusionPair":
        """Validates that the pair names two classes."""
        if self.truth == self.pred:
            error_message = f"Confusion pair needs two distinct classes, got {self.truth}."
            logger.error(error_message)
            raise ValueError(error_message)
        return self


class LossWeights(StrictModel):
    """
    Composite loss weights and shape parameters.

    Attributes:
        ce (float): lambda_CE.
        ftl (float): lambda_FTL.
        penalties (list[ConfusionPair]): Confusion penalty terms.
        tversky_alpha (float): False positive weight of the Tversky index.
        tversky_beta (float): False negative weight of the Tversky index.
        tversky_gamma (float): Focal exponent.
        tversky_eps (float): Tversky denominator regularizer.
        penalty_gamma (float): gamma_p exponent of confusion penalties.
        cb_mu (float | None): Class-balanced base, None derives it from counts.
        ce_eps (float): Log floor of the cross entropy.
        synth_weight (float): lambda_synth.
        synth_mode (str): 'raw' or 'percent' (lambda_synth / 100).
    """
    ce: float = Field(default=0.3, ge=0)
    ftl: float = Field(default=0.7, ge=0)
    penalties: list[ConfusionPair] = [
        ConfusionPair(truth=ClassId.LOOKALIKE, pred=ClassId.OIL, weight=0.40),
        ConfusionPair(truth=ClassId.SEA, pred=ClassId.LOOKALIKE, weight=0.30),
    ]
    tversky_alpha: float = Field(default=0.65, ge=0)
    tversky_beta: float = Field(default=0.35, ge=0)
    tversky_gamma: float = Field(default=1.33, gt=0)
    tversky_eps: float = Field(default=1e-6, gt=0)
    penalty_gamma: float = Field(default=2.0, gt=0)
    cb_mu: float | None = Field(default=None, gt=0, lt=1)
    ce_eps: float = Field(default=1e-7, gt=0)
    synth_weight: float = Field(default=0.0, ge=0)
    synth_mode: Literal["raw", "percent"] = "raw"


class AugmentConfig(StrictModel):
    """
    Training-time patch augmentations.

    Attributes:
        enabled (bool): Apply augmentations to saved patches.
        flip_probability (float): Probability of each horizontal and vertical flip.
        noise_sigma (float): Standard deviation of additive Gaussian noise.
        dropout_holes (int): Maximum coarse dropout holes.
        dropout_max_size (int): Maximum hole side in pixels.
    """
    enabled: bool = False
    flip_probability: float = Field(default=0.5, ge=0, le=1)
    noise_sigma: float = Field(default=0.02, ge=0)
    dropout_holes: int = Field(default=4, ge=0)
    dropout_max_size: int = Field(default=32, ge=1)


class PatchConfig(StrictModel):
    """
    Patch extraction parameters.

    Attributes:
        window (int): Patch side in pixels.
        stride (int): Sliding window stride.
        neg_pos_ratio (float): Background tiles per positive tile.
        percentile_low (float): Lower clipping percentile.
        percentile_high (float): Upper clipping percentile.
        percentile_method (str): 'nearest' rank or 'linear' interpolation.
        median_filter (bool): Apply the 3×3 median filter before normalization.
        multiscale_count (int): Multi-scale windows per scene.
        multiscale_min (int): Smallest multi-scale window side.
        multiscale_max (int): Largest multi-scale window side.
        support_radius (int): Dilation radius of annotations for multi-scale centers.
        hard_negative_fp_fraction (float): Minimum false spill share of a window.
        hard_negative_sea_fraction (float): Minimum truth sea share of a window.
        augment (AugmentConfig): Training-time augmentations.
    """
    window: int = Field(default=512, ge=1)
    stride: int = Field(default=256, ge=1)
    neg_pos_ratio: float = Field(default=1.25, ge=0)
    percentile_low: float = Field(default=0.5, ge=0, le=100)
    percentile_high: float = Field(default=97.5, ge=0, le=100)
    percentile_method: Literal["nearest", "linear"] = "nearest"
    median_filter: bool = True
    multiscale_count: int = Field(default=0, ge=0)
    multiscale_min: int = Field(default=1024, ge=1)
    multiscale_max: int = Field(default=2048, ge=1)
    support_radius: int = Field(default=64, ge=0)
    hard_negative_fp_fraction: float = Field(default=0.005, ge=0, le=1)
    hard_negative_sea_fraction: float = Field(default=0.8, ge=0, le=1)
    augment: AugmentConfig = AugmentConfig()

    @model_validator(mode="after")
    def check_ranges(self) -> "PatchConfig":
        """Validates percentile and multi-scale ranges."""
        if self.percentile_low >= self.percentile_high:
            error_message = "percentile_low must be lower than percentile_high."
            logger.error(error_message)
            raise ValueError(error_message)
        if self.multiscale_min > self.multiscale_max:
            error_message = "multiscale_min must not exceed multiscale_max."
            logger.error(error_message)
            raise ValueError(error_message)
        return self


class MetricsConfig(StrictModel):
    """
    Evaluation parameters.

    Attributes:
        pixel_spacing (float): Ground sampling distance in meters.
        mask_format (MaskFormat): On-disk format of the compared masks.
    """
    pixel_spacing: float = Field(default=10.0, gt=0)
    mask_format: MaskFormat = MaskFormat.INDEXED


class RunConfig(StrictModel):
    """
    Fully resolved configuration of one command run.

    Attributes:
        seed (int | None): Master seed, mandatory for stochastic commands.
        morp (MorpConfig | None): Engine parameters, mandatory for augment.
        batch (BatchConfig): Augmentation campaign parameters.
        loss (LossWeights): Loss weights.
        patches (PatchConfig): Patch pipeline parameters.
        metrics (MetricsConfig): Evaluation parameters.
    """
    seed: int | None = Field(default=None, ge=0)
    morp: MorpConfig | None = None
    batch: BatchConfig = BatchConfig()
    loss: LossWeights = LossWeights()
    patches: PatchConfig = PatchConfig()
    metrics: MetricsConfig = MetricsConfig()


class RayRecord(BaseModel):
    """Lengths of one fan ray in pixels."""
    d_in: int
    d_target: int
    d_out: int
    xi: int
    eased: bool


class ApexRecord(BaseModel):
    """
    Outcome of one apex edit.

    Attributes:
        index (int): Contour index of the apex.
        x (float): Apex column.
        y (float): Apex row.
        mode (str): expand, shrink or skipped.
        reason (str | None): Why a skipped edit was skipped.
        rays (list[RayRecord]): Per-ray lengths.
    """
    index: int
    x: float
    y: float
    mode: Literal["expand", "shrink", "skipped"]
    reason: str | None = None
    rays: list[RayRecord] = []


class PlacementRecord(BaseModel):
    """Outcome of the rigid placement of one region."""
    theta: float = 0.0
    shift: tuple[int, int] = (0, 0)
    attempts: int = 0
    bulges: int = 0
    status: Literal["accepted", "restored"]


class EditRecord(BaseModel):
    """
    Provenance of one edited region, serialized as one JSON line.

    Attributes:
        mask (str): Output mask name.
        region (int): Region ordinal within its stage.
        stage (str): 'placement' or 'apex'.
        class_id (ClassId): Region class.
        area_before (int): Region area before the stage.
        area_after (int): Region area after the stage.
        large (bool): Region forced in as the large oil region.
        placement (PlacementRecord | None): Placement outcome, for placement stage.
        apices (list[ApexRecord]): Apex edits, for apex stage.
    """
    mask: str = ""
    region: int
    stage: Literal["placement", "apex"]
    class_id: ClassId
    area_before: int
    area_after: int
    large: bool = False
    placement: PlacementRecord | None = None
    apices: list[ApexRecord] = []

    @property
    def skipped(self) -> bool:
        """Checks whether any apex edit of this region was skipped."""
        return any(apex.mode == "skipped" for apex in self.apices)


class ManifestRow(BaseModel):
    """One scene of the split manifest."""
    img: int = Field(alias="Img")
    spill_date: date = Field(alias="SpillDate")
    lat: float = Field(alias="Lat")
    lon: float = Field(alias="Lon")
    acq_date: date = Field(alias="AcqDate")
    delta_days: int = Field(alias="DeltaDays")
    patches: int = Field(alias="Patches", ge=0)
    split: Literal["Train", "Test"] = Field(alias="Split")

    @field_validator("spill_date", "acq_date", mode="before")
    @classmethod
    def parse_day_first(cls, value: str | date) -> date:
        """Parses dd/mm/yyyy manifest dates."""
        if isinstance(value, date):
            return value
        return datetime.strptime(value.strip(), "%d/%m/%Y").date()


class PatchIndexRow(BaseModel):
    """Line of the patch index; paths relative to the output root."""
    intensity: str
    labels: str
    scene: str
    row: int
    col: int
    window: int
    kind: Literal["positive", "background", "multiscale", "hard-negative"]
    split: Literal["Train", "Test"]
