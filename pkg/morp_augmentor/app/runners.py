"""
This module provides the command runners wiring the library into batch runs:
    - Runner: Abstract class for creating command runners.
    - RunnerFactory: Runner factory for getting runners by command name.
    - AugmentRunner, MetricsRunner, PatchesRunner, LossEvalRunner: command implementations.
    - load_run_config: TOML configuration loader.
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
import json
import logging
import tomllib
from abc import ABC, abstractmethod
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from pydantic import ValidationError

from . import patch_pipeline
from .dependencies import RunnerDependencies
from .label_maps import ClassId, LabelMap, MaskFormat
from .metrics_losses import (ConfusionCounts, ProbMap, composite_loss, confusion_counts, iou,
                             total_loss)
from .morp_engine import BatchGenerator, MorpEngine
from .patch_pipeline import Patch, Scene, SplitAssignment
from .schemas import RunConfig
from .seeding import AUGMENT_STREAM, PATCH_STREAM, derive_rng

logger = logging.getLogger(__name__)

MASK_EXTENSIONS = (".png",)
CLASS_COLUMNS = ("Sea", "Oil", "Look-alike", "Ship", "Land")
SUCCESS = 0
PARTIAL = 2


class ConfigError(Exception):
    """Raised when a configuration file or override is invalid."""


def load_run_config(config_path: Path | None, seed: int | None = None) -> RunConfig:
    """
    Reads and validates the TOML run configuration.

    Args:
        config_path (Path | None): Configuration file, None uses defaults only.
        seed (int | None): Command line seed overriding the file value.

    Returns:
        RunConfig: Validated configuration.

    Raises:
        ConfigError: If the file can't be read, parsed or validated.
    """
    values = {}
    if config_path is not None:
        try:
            with open(config_path, "rb") as file:
                values = tomllib.load(file)
        except (OSError, tomllib.TOMLDecodeError) as error:
            error_message = f"Can't read config '{config_path}': {error}"
            logger.error(error_message)
            raise ConfigError(error_message) from error
    if seed is not None:
        values["seed"] = seed
    try:
        run_config = RunConfig.model_validate(values)
    except ValidationError as error:
        problems = "; ".join(f"{'.'.join(str(part) for part in problem['loc'])}: "
                             f"{problem['msg']}" for problem in error.errors())
        error_message = f"Invalid config '{config_path}': {problems}"
        logger.error(error_message)
        raise ConfigError(error_message) from error
    logger.debug("Run config resolved: %s", run_config)
    return run_config


@dataclass
class RunPaths:
    """
    Filesystem locations of one run.

    Attributes:
        input_directory (Path): Masks, predictions, probability maps or scenes.
        output_directory (Path): Output root.
        truth_directory (Path | None): Ground truth masks for metrics and loss-eval.
        manifest (Path | None): Scene manifest for patches.
        synth_input_directory (Path | None): Synthetic probability maps for loss-eval.
        synth_truth_directory (Path | None): Synthetic ground truth for loss-eval.
    """
    input_directory: Path
    output_directory: Path
    truth_directory: Path | None = None
    manifest: Path | None = None
    synth_input_directory: Path | None = None
    synth_truth_directory: Path | None = None


class Runner(ABC):
    """Abstract class for creating command runners."""

    class EmptyInputDirectoryError(Exception):
        """Error appear when runner can't get any input to process."""

    class UnpairedFileError(Exception):
        """Error appear when an input file has no counterpart to compare with."""

    def __init__(self, config: RunConfig, paths: RunPaths,
                 dependencies: RunnerDependencies, jobs: int = 1) -> None:
        """
        Initializes the runner.

        Args:
            config (RunConfig): Validated run configuration.
            paths (RunPaths): Input and output locations.
            dependencies (RunnerDependencies): Dependencies that will be used in runner.
            jobs (int): Worker pool width.
        """
        self._config = config
        self._paths = paths
        self._mask_processor = dependencies.mask_processor
        self._jobs = max(1, jobs)

    @abstractmethod
    def process(self) -> int:
        """
        Abstract main method of the command.

        Returns:
            int: 0 on full success, 2 on partial success.
        """

    def _require_seed(self) -> int:
        if self._config.seed is None:
            error_message = ("Command is stochastic and needs a seed: set 'seed' "
                             "in the config file or pass --seed.")
            logger.error(error_message)
            raise ConfigError(error_message)
        return self._config.seed

    def _list_files(self, directory: Path, extensions: tuple[str, ...],
                    suffix: str = "") -> list[Path]:
        """
        List all files with given extensions and stem suffix, sorted by name.

        Args:
            directory (Path): Searched directory.
            extensions (tuple[str, ...]): Accepted file extensions.
            suffix (str): Required end of the file stem.

        Returns:
            list[Path]: Matching files.
        """
        if not directory.is_dir():
            error_message = f"Input directory not found: {directory}"
            logger.error(error_message)
            raise self.EmptyInputDirectoryError(error_message)
        files = sorted(entry for entry in directory.iterdir()
                       if entry.is_file() and entry.suffix in extensions
                       and entry.stem.endswith(suffix))
        if not files:
            error_message = (f"Files with extensions '{extensions}' not found in folder: "
                             f"{directory}.\n-->HINT: Check input directory.")
            logger.error(error_message)
            raise self.EmptyInputDirectoryError(error_message)
        logger.info("Directory '%s' files listed.", directory)
        logger.debug("Listed file paths: %s", files)
        return files

    def _pair_files(self, inputs: list[Path], counterpart_directory: Path,
                    counterpart_extension: str) -> list[tuple[Path, Path]]:
        """
        Match every input with the same-stem file of another directory.

        Args:
            inputs (list[Path]): Listed input files.
            counterpart_directory (Path): Directory of counterparts.
            counterpart_extension (str): Counterpart extension.

        Returns:
            list[tuple[Path, Path]]: (input, counterpart) pairs.
        """
        counterparts = {entry.stem: entry for entry in counterpart_directory.iterdir()
                        if entry.is_file() and entry.suffix == counterpart_extension}
        stems = {path.stem for path in inputs}
        for path in inputs:
            if path.stem not in counterparts:
                error_message = (f"File '{path.name}' has no counterpart "
                                 f"'{path.stem}{counterpart_extension}' in {counterpart_directory}.")
                logger.error(error_message)
                raise self.UnpairedFileError(error_message)
        for stem, path in sorted(counterparts.items()):
            if stem not in stems:
                error_message = f"File '{path.name}' in {counterpart_directory} has no input pair."
                logger.error(error_message)
                raise self.UnpairedFileError(error_message)
        return [(path, counterparts[path.stem]) for path in inputs]

    def _read_masks(self, paths: list[Path], mask_format: MaskFormat) -> list[LabelMap]:
        """Read all masks from given paths with the worker pool."""
        with ThreadPoolExecutor(max_workers=self._jobs) as executor:
            futures = [executor.submit(self._mask_processor.read_mask, path, mask_format)
                       for path in paths]
            return [future.result() for future in futures]

    @staticmethod
    def _write_lines(path: Path, lines: list[str]) -> None:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("".join(f"{line}\n" for line in lines), encoding="utf-8")


class RunnerFactory:
    """Runner factory for getting runners by their command names."""

    @staticmethod
    def create_runner(command: str, config: RunConfig, paths: RunPaths,
                      dependencies: RunnerDependencies, jobs: int = 1) -> Runner:
        """
        Match runner class by its command name and return its instance.

        Args:
            command (str): Command name.
            config (RunConfig): Validated run configuration.
            paths (RunPaths): Input and output locations.
            dependencies (RunnerDependencies): Dependencies that will be used in runner.
            jobs (int): Worker pool width.

        Returns:
            Runner: Chosen runner.
        """
        match command:
            case "augment":
                return AugmentRunner(config, paths, dependencies, jobs)
            case "metrics":
                return MetricsRunner(config, paths, dependencies, jobs)
            case "patches":
                return PatchesRunner(config, paths, dependencies, jobs)
            case "loss-eval":
                return LossEvalRunner(config, paths, dependencies, jobs)
            case _:
                error_message = f"Provided unknown command name: {command}"
                logger.error(error_message)
                raise ValueError(error_message)


class AugmentRunner(Runner):
    """Runs an augmentation campaign over a directory of masks."""

    def process(self) -> int:
        """
        Augments every input mask and writes masks plus provenance records.

        Returns:
            int: 0 on full success, 2 when some region edit was skipped.
        """
        seed = self._require_seed()
        batch = self._config.batch
        if self._config.morp is None and batch.regime != "nomove":
            error_message = f"Regime '{batch.regime}' needs a [morp] config section."
            logger.error(error_message)
            raise ConfigError(error_message)
        logger.info("Starting augmentation of '%s'.", self._paths.input_directory)
        paths = self._list_files(self._paths.input_directory, MASK_EXTENSIONS)
        masks = self._read_masks(paths, batch.mask_format)
        engine = MorpEngine(self._config.morp) if self._config.morp is not None else None
        generator = BatchGenerator(engine, self._jobs, batch.max_duplicate_retries)
        outputs = generator.generate(masks, batch.regime, batch.pool_multiplier, seed)

        output_directory = self._paths.output_directory
        records = []
        for output in outputs:
            index, replicate = output.stream[:2]
            name = f"{paths[index].stem}_r{replicate}.png"
            self._mask_processor.save_mask(output.result, output_directory / "masks" / name,
                                           batch.mask_format)
            records.extend(record.model_copy(update={"mask": f"masks/{name}"}).model_dump_json()
                           for record in output.records)
        self._write_lines(output_directory / "records.jsonl", records)
        skipped = sum(output.skipped for output in outputs)
        logger.info("Augmentation finished: %s masks written, %s with skipped edits.",
                    len(outputs), skipped)
        return PARTIAL if skipped else SUCCESS


class MetricsRunner(Runner):
    """Compares predicted masks with ground truth and writes the metrics report."""

    HEADER = ("file", "mIoU", *CLASS_COLUMNS,
              *(f"pred_km2_{name}" for name in CLASS_COLUMNS),
              *(f"fp_km2_{name}" for name in CLASS_COLUMNS))

    def process(self) -> int:
        """
        Writes metrics.csv with one row per file and an ALL row.

        Returns:
            int: 0 on success.
        """
        metrics = self._config.metrics
        predictions = self._list_files(self._paths.input_directory, MASK_EXTENSIONS)
        pairs = self._pair_files(predictions, self._truth_directory(), ".png")
        pixel_area = metrics.pixel_spacing ** 2
        rows = []
        total = ConfusionCounts(np.zeros((len(ClassId), len(ClassId)), dtype=np.int64))
        for pred_path, truth_path in pairs:
            pred = self._mask_processor.read_mask(pred_path, metrics.mask_format)
            truth = self._mask_processor.read_mask(truth_path, metrics.mask_format)
            counts = confusion_counts(pred, truth)
            total = total + counts
            rows.append(self._row(pred_path.name, counts, pixel_area))
        rows.append(self._row("ALL", total, pixel_area))

        report_path = self._paths.output_directory / "metrics.csv"
        report_path.parent.mkdir(parents=True, exist_ok=True)
        with open(report_path, "w", newline="", encoding="utf-8") as file:
            writer = csv.writer(file, lineterminator="\n")
            writer.writerow(self.HEADER)
            writer.writerows(rows)
        logger.info("Metrics report saved at '%s'.", report_path)
        return SUCCESS

    def _truth_directory(self) -> Path:
        if self._paths.truth_directory is None:
            error_message = "Metrics need a truth directory."
            logger.error(error_message)
            raise ConfigError(error_message)
        return self._paths.truth_directory

    @staticmethod
    def _row(name: str, counts: ConfusionCounts, pixel_area: float) -> list[str]:
        scores = iou(counts)
        predicted = counts.matrix.sum(axis=0) * pixel_area / 1e6
        false_positive = counts.fp * pixel_area / 1e6
        return [name, f"{scores.miou:.6f}",
                *(f"{value:.6f}" for value in scores.per_class),
                *(f"{value:.6f}" for value in predicted),
                *(f"{value:.6f}" for value in false_positive)]


class PatchesRunner(Runner):
    """Cuts normalized training patches from scenes listed in a manifest."""

    def process(self) -> int:
        """
        Writes patch pairs per split and the patch index.

        Scenes are '<id>.npy' intensity grids with '<id>_mask.png' labels and an
        optional '<id>_pred.png' prediction used for hard negative mining.

        Returns:
            int: 0 on success.
        """
        seed = self._require_seed()
        if self._paths.manifest is None:
            error_message = "Patches need a scene manifest."
            logger.error(error_message)
            raise ConfigError(error_message)
        assignment = SplitAssignment(patch_pipeline.load_manifest(self._paths.manifest))
        mask_paths = self._list_files(self._paths.input_directory, MASK_EXTENSIONS, "_mask")
        scene_ids = [path.stem.removesuffix("_mask") for path in mask_paths]
        for scene_id in scene_ids:
            assignment.split_of(scene_id)

        with ThreadPoolExecutor(max_workers=self._jobs) as executor:
            per_scene = list(executor.map(lambda scene_id: self._scene_patches(scene_id, seed),
                                          scene_ids))
        index = []
        for scene_id, patches in zip(scene_ids, per_scene):
            split = assignment.split_of(scene_id)
            for patch in patches:
                row = patch_pipeline.save_patch(patch, self._paths.output_directory, split,
                                                self._mask_processor)
                index.append(row.model_dump_json())
        self._write_lines(self._paths.output_directory / "index.jsonl", index)
        logger.info("Patch extraction finished: %s patches from %s scenes.",
                    len(index), len(scene_ids))
        return SUCCESS

    def _load_scene(self, scene_id: str) -> Scene:
        directory = self._paths.input_directory
        patches_config = self._config.patches
        intensity_path = directory / f"{scene_id}.npy"
        if not intensity_path.is_file():
            error_message = f"Scene '{scene_id}' has labels but no intensity file {intensity_path}."
            logger.error(error_message)
            raise self.UnpairedFileError(error_message)
        intensity = np.load(intensity_path)
        labels = self._mask_processor.read_mask(directory / f"{scene_id}_mask.png",
                                                self._config.metrics.mask_format)
        if patches_config.median_filter:
            intensity = patch_pipeline.median_filter_3x3(intensity)
        intensity = patch_pipeline.percentile_normalize(
            intensity, patches_config.percentile_low, patches_config.percentile_high,
            patches_config.percentile_method
        )
        return Scene(scene_id, intensity, labels, self._config.metrics.pixel_spacing)

    def _scene_patches(self, scene_id: str, seed: int) -> list[Patch]:
        config = self._config.patches
        scene = self._load_scene(scene_id)
        scene_key = int(scene_id)
        rng = derive_rng(seed, PATCH_STREAM, scene_key)
        patches = patch_pipeline.extract_patches(scene, config.window, config.stride,
                                                 config.neg_pos_ratio, rng)
        if config.multiscale_count:
            try:
                patches += patch_pipeline.multiscale_patches(
                    scene, config.multiscale_count, config.multiscale_min,
                    config.multiscale_max, config.window, config.support_radius, rng
                )
            except patch_pipeline.SceneTooSmallError:
                logger.warning("Scene '%s' too small for multi-scale windows.", scene_id)
        pred_path = self._paths.input_directory / f"{scene_id}_pred.png"
        if pred_path.is_file():
            pred = self._mask_processor.read_mask(pred_path, self._config.metrics.mask_format)
            origins = patch_pipeline.hard_negative_filter(
                pred, scene.labels, config.window, config.hard_negative_fp_fraction,
                config.hard_negative_sea_fraction
            )
            patches += patch_pipeline.cut_windows(scene, origins, config.window, "hard-negative")
        if config.augment.enabled:
            patches = [patch_pipeline.augment_patch(
                patch, config.augment, derive_rng(seed, AUGMENT_STREAM, scene_key, ordinal)
            ) for ordinal, patch in enumerate(patches)]
        logger.info("Scene '%s': %s patches.", scene_id, len(patches))
        return patches


class LossEvalRunner(Runner):
    """Evaluates the composite loss on stored probability maps."""

    def process(self) -> int:
        """
        Writes loss.jsonl with one breakdown per file and a summary line.

        Returns:
            int: 0 on success.
        """
        weights = self._config.loss
        if self._paths.truth_directory is None:
            error_message = "Loss evaluation needs a truth directory."
            logger.error(error_message)
            raise ConfigError(error_message)
        lines, real = self._evaluate(self._paths.input_directory, self._paths.truth_directory)
        synth = 0.0
        if self._paths.synth_input_directory is not None:
            if self._paths.synth_truth_directory is None:
                error_message = "Synthetic loss evaluation needs a synthetic truth directory."
                logger.error(error_message)
                raise ConfigError(error_message)
            synth_lines, synth = self._evaluate(self._paths.synth_input_directory,
                                                self._paths.synth_truth_directory, "synth/")
            lines += synth_lines
        summary = {"file": "ALL", "real": real, "synth": synth,
                   "total": total_loss(real, synth, weights.synth_weight, weights.synth_mode)}
        lines.append(json.dumps(summary))
        self._write_lines(self._paths.output_directory / "loss.jsonl", lines)
        logger.info("Loss evaluation finished: total %.6f.", summary["total"])
        return SUCCESS

    def _evaluate(self, probs_directory: Path, truth_directory: Path,
                  prefix: str = "") -> tuple[list[str], float]:
        weights = self._config.loss
        probs = self._list_files(probs_directory, (".npy",))
        lines, totals = [], []
        for prob_path, truth_path in self._pair_files(probs, truth_directory, ".png"):
            prob = ProbMap(np.load(prob_path))
            truth = self._mask_processor.read_mask(truth_path, self._config.metrics.mask_format)
            breakdown = composite_loss(prob, truth, weights)
            totals.append(breakdown.total)
            lines.append(json.dumps({"file": f"{prefix}{prob_path.name}",
                                     "cb_ce": breakdown.cb_ce,
                                     "focal_tversky": breakdown.focal_tversky,
                                     "penalties": breakdown.penalties,
                                     "total": breakdown.total}))
        return lines, float(np.mean(totals))

