import csv
import json
from unittest.mock import patch

import numpy as np
import pytest

from morp_augmentor.app.geometry import DegenerateRegionError
from morp_augmentor.app.label_maps import ClassId, LabelMap, OpenCVMask
from morp_augmentor.app.metrics_losses import ProbMap
from morp_augmentor.app.runners import AugmentRunner
from morp_augmentor.app.schemas import EditRecord, PatchIndexRow
from start import main


def _write_masks(directory, label_maps: dict[str, LabelMap]) -> None:
    for name, label_map in label_maps.items():
        OpenCVMask.save_mask(label_map, directory / f"{name}.png")


@pytest.fixture
def masks_directory(tmp_path, spill_scene):
    directory = tmp_path / "masks_in"
    shifted = LabelMap(np.roll(spill_scene.data, 3, axis=0))
    _write_masks(directory, {"scene_a": spill_scene, "scene_b": shifted})
    return directory


@pytest.fixture
def scenes_directory(tmp_path):
    directory = tmp_path / "scenes"
    directory.mkdir()
    rng = np.random.default_rng(0)
    for scene_id in ("3", "14"):
        labels = np.zeros((32, 32), dtype=np.uint8)
        labels[2:10, 2:10] = ClassId.OIL
        np.save(directory / f"{scene_id}.npy", rng.gamma(2.0, 0.05, size=(32, 32)))
        OpenCVMask.save_mask(LabelMap(labels), directory / f"{scene_id}_mask.png")
    return directory


def _patch_config(tmp_path):
    path = tmp_path / "patches.toml"
    path.write_text("seed = 7\n\n[patches]\nwindow = 16\nstride = 16\n", encoding="utf-8")
    return path


def test_dry_run_prints_resolved_config(config_file, tmp_path, capsys):
    output_directory = tmp_path / "out"

    exit_code = main(["augment", "-c", str(config_file), "--seed", "12", "--dry-run",
                      "-o", str(output_directory)])

    out = capsys.readouterr().out
    resolved = json.loads(out[out.index("{"):])
    assert exit_code == 0
    assert resolved["seed"] == 12
    assert resolved["morp"]["apex"]["w"] == 5
    assert not output_directory.exists()


def test_augment_nomove_reproduces_inputs(tmp_path, masks_directory):
    config_path = tmp_path / "nomove.toml"
    config_path.write_text("seed = 1\n\n[batch]\nregime = \"nomove\"\n", encoding="utf-8")
    output_directory = tmp_path / "out"

    exit_code = main(["augment", "-c", str(config_path), "-i", str(masks_directory),
                      "-o", str(output_directory)])

    assert exit_code == 0
    for name in ("scene_a", "scene_b"):
        assert (output_directory / "masks" / f"{name}_r0.png").read_bytes() == \
               (masks_directory / f"{name}.png").read_bytes()


def test_augment_is_reproducible_across_pool_widths(config_file, tmp_path, masks_directory):
    outputs = {}
    for jobs in (1, 3):
        output_directory = tmp_path / f"out_{jobs}"
        exit_code = main(["augment", "-c", str(config_file), "-j", str(jobs),
                          "-i", str(masks_directory), "-o", str(output_directory)])
        assert exit_code in (0, 2)
        outputs[jobs] = output_directory

    for name in ("scene_a_r0.png", "scene_b_r0.png"):
        assert (outputs[1] / "masks" / name).read_bytes() == \
               (outputs[3] / "masks" / name).read_bytes()
    records = (outputs[1] / "records.jsonl").read_text(encoding="utf-8")
    assert records == (outputs[3] / "records.jsonl").read_text(encoding="utf-8")
    parsed = [EditRecord.model_validate_json(line) for line in records.splitlines()]
    assert parsed
    assert {record.mask for record in parsed} <= {"masks/scene_a_r0.png", "masks/scene_b_r0.png"}


def test_augment_keeps_land_and_ships(config_file, tmp_path, masks_directory):
    output_directory = tmp_path / "out"

    main(["augment", "-c", str(config_file), "-i", str(masks_directory),
          "-o", str(output_directory)])

    source = OpenCVMask.read_mask(masks_directory / "scene_a.png")
    result = OpenCVMask.read_mask(output_directory / "masks" / "scene_a_r0.png")
    for class_id in (ClassId.LAND, ClassId.SHIP):
        assert np.array_equal(source.data == class_id, result.data == class_id)


def test_augment_without_seed(tmp_path, masks_directory, caplog):
    config_path = tmp_path / "nomove.toml"
    config_path.write_text("[batch]\nregime = \"nomove\"\n", encoding="utf-8")

    exit_code = main(["augment", "-c", str(config_path), "-i", str(masks_directory),
                      "-o", str(tmp_path / "out")])

    assert exit_code == 1
    assert "needs a seed" in caplog.text


def test_unknown_config_key(tmp_path, masks_directory):
    config_path = tmp_path / "typo.toml"
    config_path.write_text("seed = 1\n\n[batch]\nregim = \"nomove\"\n", encoding="utf-8")

    exit_code = main(["augment", "-c", str(config_path), "-i", str(masks_directory),
                      "-o", str(tmp_path / "out")])

    assert exit_code == 1


def test_augment_empty_input_directory(config_file, tmp_path, caplog):
    input_directory = tmp_path / "empty"
    input_directory.mkdir()

    exit_code = main(["augment", "-c", str(config_file), "-i", str(input_directory),
                      "-o", str(tmp_path / "out")])

    assert exit_code == 3
    assert "Command 'augment' failed" in caplog.text


@pytest.mark.parametrize("error", (DegenerateRegionError("region has no pixels"),
                                   ValueError("region has no pixels")))
def test_augment_unexpected_engine_error(config_file, tmp_path, masks_directory, caplog, error):
    with patch.object(AugmentRunner, "process", side_effect=error):
        exit_code = main(["augment", "-c", str(config_file), "-i", str(masks_directory),
                          "-o", str(tmp_path / "out")])

    assert exit_code == 1
    assert "Command 'augment' stopped: region has no pixels" in caplog.text


def test_metrics_report(tmp_path, masks_directory):
    output_directory = tmp_path / "out"

    exit_code = main(["metrics", "-i", str(masks_directory), "-t", str(masks_directory),
                      "-o", str(output_directory)])

    with open(output_directory / "metrics.csv", encoding="utf-8") as file:
        rows = list(csv.DictReader(file))
    assert exit_code == 0
    assert [row["file"] for row in rows] == ["scene_a.png", "scene_b.png", "ALL"]
    assert all(row["mIoU"] == "1.000000" for row in rows)
    assert all(row["fp_km2_Oil"] == "0.000000" for row in rows)


def test_metrics_unpaired_prediction(tmp_path, masks_directory, spill_scene):
    truth_directory = tmp_path / "truth"
    _write_masks(truth_directory, {"scene_a": spill_scene})

    exit_code = main(["metrics", "-i", str(masks_directory), "-t", str(truth_directory),
                      "-o", str(tmp_path / "out")])

    assert exit_code == 3


def test_patches_by_split(tmp_path, scenes_directory, manifest_path):
    outputs = {}
    for jobs in (1, 2):
        output_directory = tmp_path / f"out_{jobs}"
        exit_code = main(["patches", "-c", str(_patch_config(tmp_path)), "-j", str(jobs),
                          "-m", str(manifest_path), "-i", str(scenes_directory),
                          "-o", str(output_directory)])
        assert exit_code == 0
        outputs[jobs] = output_directory

    index = (outputs[1] / "index.jsonl").read_text(encoding="utf-8")
    assert index == (outputs[2] / "index.jsonl").read_text(encoding="utf-8")
    rows = [PatchIndexRow.model_validate_json(line) for line in index.splitlines()]
    assert [(row.scene, row.kind) for row in rows] == [
        ("14", "positive"), ("14", "background"), ("3", "positive"), ("3", "background")]
    for row in rows:
        assert row.intensity.startswith(row.split.lower() + "/images/")
        assert (outputs[1] / row.intensity).is_file()
        assert (outputs[1] / row.labels).is_file()
    assert {row.split for row in rows if row.scene == "14"} == {"Test"}


def test_patches_scene_missing_from_manifest(tmp_path, scenes_directory, manifest_path):
    OpenCVMask.save_mask(LabelMap(np.zeros((32, 32), dtype=np.uint8)),
                         scenes_directory / "99_mask.png")
    np.save(scenes_directory / "99.npy", np.linspace(0, 1, 1024).reshape(32, 32))

    exit_code = main(["patches", "-c", str(_patch_config(tmp_path)), "-m", str(manifest_path),
                      "-i", str(scenes_directory), "-o", str(tmp_path / "out")])

    assert exit_code == 3


def test_loss_eval(tmp_path, spill_scene):
    probs_directory = tmp_path / "probs"
    probs_directory.mkdir()
    truth_directory = tmp_path / "truth"
    _write_masks(truth_directory, {"scene": spill_scene})
    np.save(probs_directory / "scene.npy", ProbMap.uniform(*spill_scene.shape).values)
    output_directory = tmp_path / "out"

    exit_code = main(["loss-eval", "-i", str(probs_directory), "-t", str(truth_directory),
                      "-o", str(output_directory)])

    lines = [json.loads(line) for line in
             (output_directory / "loss.jsonl").read_text(encoding="utf-8").splitlines()]
    assert exit_code == 0
    assert lines[-1]["file"] == "ALL"
    assert lines[-1]["real"] == pytest.approx(lines[0]["total"])
    assert lines[-1]["total"] == pytest.approx(lines[0]["total"])
    assert lines[0]["total"] > 0
