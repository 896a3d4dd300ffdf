import logging
from unittest.mock import patch

import cv2
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from morp_augmentor.app.label_maps import (PALETTE, ClassId, LabelMap, MalformedImageError,
                                           MaskFormat, OpenCVMask, Region,
                                           UnknownPixelValueError, connectivity_structure)

label_grids = arrays(np.uint8, st.tuples(st.integers(1, 12), st.integers(1, 12)),
                     elements=st.integers(0, 4))


def test_label_map_rejects_values_outside_classes():
    with pytest.raises(ValueError, match="class ids"):
        LabelMap(np.array([[0, 5]], dtype=np.uint8))


def test_label_map_rejects_empty_grid():
    with pytest.raises(ValueError):
        LabelMap(np.zeros((0, 3), dtype=np.uint8))


def test_label_map_is_read_only():
    label_map = LabelMap(np.zeros((2, 2), dtype=np.uint8))

    with pytest.raises(ValueError):
        label_map.data[0, 0] = 1


def test_label_map_equality_is_bit_exact():
    first = LabelMap(np.array([[0, 1], [2, 3]]))
    second = LabelMap(np.array([[0, 1], [2, 3]], dtype=np.uint8))
    third = LabelMap(np.array([[0, 1, 2, 3]], dtype=np.uint8))

    assert first == second
    assert first != third
    assert first.digest() != third.digest()


@given(label_grids)
def test_class_histogram_sums_to_pixel_count(data):
    histogram = LabelMap(data).class_histogram()

    assert sum(histogram.values()) == data.size
    assert set(histogram) == set(ClassId)


@pytest.mark.parametrize("connectivity, expected", ((4, 2), (8, 1)))
def test_connected_components_connectivity(connectivity, expected):
    data = np.array([[1, 0, 0],
                     [0, 1, 0],
                     [0, 0, 0]], dtype=np.uint8)
    regions = LabelMap(data).connected_components(ClassId.OIL, connectivity)

    assert len(regions) == expected


def test_connectivity_structure_rejects_other_values():
    with pytest.raises(ValueError):
        connectivity_structure(6)


def test_connected_components_ordered_by_bbox(spill_scene):
    data = spill_scene.data.copy()
    data[2:4, 40:42] = ClassId.OIL
    regions = LabelMap(data).connected_components(ClassId.OIL)

    assert [region.offset for region in regions] == [(2, 40), (10, 8)]
    assert regions[1].area == 12 * 22
    assert all(region.class_id == ClassId.OIL for region in regions)


@given(label_grids)
@settings(max_examples=50)
def test_components_partition_class_support(data):
    label_map = LabelMap(data)
    for class_id in (ClassId.OIL, ClassId.LOOKALIKE):
        regions = label_map.connected_components(class_id)
        pixels = [pixel for region in regions for pixel in region.pixels]

        assert len(pixels) == len(set(pixels))
        assert set(pixels) == set(map(tuple, np.argwhere(data == class_id).tolist()))


def test_remove_small_relabels_only_small_components():
    data = np.zeros((10, 10), dtype=np.uint8)
    data[0:2, 0:2] = ClassId.OIL
    data[5:8, 5:8] = ClassId.OIL
    data[0, 9] = ClassId.SHIP
    cleaned = LabelMap(data).remove_small(5, [ClassId.OIL])

    assert cleaned.data[0:2, 0:2].sum() == 0
    assert (cleaned.data[5:8, 5:8] == ClassId.OIL).all()
    assert cleaned.data[0, 9] == ClassId.SHIP


def test_remove_small_keeps_component_of_exact_size():
    data = np.zeros((4, 4), dtype=np.uint8)
    data[1:3, 1:3] = ClassId.LOOKALIKE
    cleaned = LabelMap(data).remove_small(4, [ClassId.LOOKALIKE])

    assert cleaned == LabelMap(data)


def test_remove_small_rejects_fill_in_classes():
    with pytest.raises(ValueError, match="Fill class"):
        LabelMap(np.zeros((2, 2), dtype=np.uint8)).remove_small(
            2, [ClassId.OIL, ClassId.SEA], fill=ClassId.SEA)


@given(label_grids, st.integers(1, 6))
@settings(max_examples=50)
def test_remove_small_is_idempotent(data, min_px):
    classes = [ClassId.OIL, ClassId.LOOKALIKE]
    once = LabelMap(data).remove_small(min_px, classes)

    assert once.remove_small(min_px, classes) == once


def test_region_geometry(disk_mask):
    region = Region(ClassId.OIL, disk_mask, (10, 20), (64, 64))

    assert region.bbox == (10, 20, 34, 44)
    assert region.centroid == pytest.approx((22.0, 32.0))
    assert region.contains(22, 32)
    assert not region.contains(10, 20)
    assert region.fits_canvas()


def test_region_trims_mask_to_bbox():
    mask = np.zeros((5, 5), dtype=bool)
    mask[2:4, 1:3] = True
    region = Region(ClassId.OIL, mask, (0, 0), (8, 8))

    assert region.offset == (2, 1)
    assert region.mask.shape == (2, 2)


def test_region_rejects_empty_mask():
    with pytest.raises(ValueError):
        Region(ClassId.OIL, np.zeros((3, 3), dtype=bool), (0, 0), (3, 3))


def test_region_translation_and_clipping():
    region = Region.from_pixels(ClassId.OIL, np.array([0, 0, 1]), np.array([0, 1, 1]), (4, 4))
    moved = region.translated(-1, 3)

    assert moved.offset == (-1, 3)
    assert not moved.fits_canvas()
    assert moved.overlaps_canvas()
    clipped = moved.clipped()
    assert clipped.pixels == {(0, 4)}
    assert region.translated(10, 10).clipped() is None


def test_region_union_adds_pixels():
    region = Region.from_pixels(ClassId.OIL, np.array([1]), np.array([1]), (4, 4))
    merged = region.union(np.array([1, 2]), np.array([2, 2]))

    assert merged.pixels == {(1, 1), (1, 2), (2, 2)}


@given(label_grids)
@settings(max_examples=30)
def test_indexed_codec_keeps_label_map(data):
    label_map = LabelMap(data)
    encoded = OpenCVMask.encode_mask(label_map, MaskFormat.INDEXED)

    assert OpenCVMask.decode_mask(encoded, MaskFormat.INDEXED) == label_map


def test_palette_codec_uses_display_colors(spill_scene):
    encoded = OpenCVMask.encode_mask(spill_scene, MaskFormat.PALETTE_RGB)
    image = cv2.imdecode(np.frombuffer(encoded, dtype=np.uint8), cv2.IMREAD_COLOR)
    rgb = cv2.cvtColor(image, cv2.COLOR_BGR2RGB)

    assert tuple(rgb[15, 15]) == PALETTE[ClassId.OIL]
    assert tuple(rgb[0, 63]) == PALETTE[ClassId.LAND]
    assert OpenCVMask.decode_mask(encoded, MaskFormat.PALETTE_RGB) == spill_scene


def test_decode_indexed_unknown_value(caplog):
    success, buffer = cv2.imencode(".png", np.array([[0, 7]], dtype=np.uint8))
    assert success

    with caplog.at_level(logging.ERROR):
        with pytest.raises(UnknownPixelValueError):
            OpenCVMask.decode_mask(buffer.tobytes(), MaskFormat.INDEXED)

    assert "Mask contains values outside class lookup: [7]" in caplog.text


def test_decode_palette_unknown_color():
    image = np.zeros((2, 2, 3), dtype=np.uint8)
    image[0, 0] = (1, 2, 3)
    success, buffer = cv2.imencode(".png", image)
    assert success

    with pytest.raises(UnknownPixelValueError, match="outside the palette"):
        OpenCVMask.decode_mask(buffer.tobytes(), MaskFormat.PALETTE_RGB)


def test_decode_indexed_accepts_gray_three_channel():
    gray = np.array([[0, 1], [2, 4]], dtype=np.uint8)
    success, buffer = cv2.imencode(".png", np.dstack([gray, gray, gray]))
    assert success

    decoded = OpenCVMask.decode_mask(buffer.tobytes(), MaskFormat.INDEXED)

    assert np.array_equal(decoded.data, gray)


@pytest.mark.parametrize("encoded", (b"", b"not an image"))
def test_decode_malformed_bytes(encoded):
    with pytest.raises(MalformedImageError):
        OpenCVMask.decode_mask(encoded, MaskFormat.INDEXED)


def test_save_and_read_mask(tmp_path, spill_scene, caplog):
    mask_path = tmp_path / "nested" / "mask.png"

    with caplog.at_level(logging.DEBUG):
        saved = OpenCVMask.save_mask(spill_scene, mask_path)
        result = OpenCVMask.read_mask(saved)

    assert saved == mask_path
    assert result == spill_scene
    assert f"Mask saved at '{mask_path}'." in caplog.text
    assert f"Mask '{mask_path}' has successfully read." in caplog.text


@patch.object(cv2, "imencode")
def test_encode_mask_failure(mock_imencode, spill_scene):
    mock_imencode.return_value = (False, None)

    with pytest.raises(MalformedImageError, match="failed to encode"):
        OpenCVMask.encode_mask(spill_scene, MaskFormat.INDEXED)
