"""
This module provides the semantic label grid and everything that works on it directly:
    - ClassId, MaskFormat: class ids and on-disk mask formats.
    - LabelMap: immutable H×W grid of class ids with histogram, components and cleanup.
    - Region: one connected component of a single class.
    - MaskProcessor: Abstract class for creating mask codecs.
    - OpenCVMask: mask codec using OpenCV library.
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
from abc import ABC, abstractmethod
from dataclasses import dataclass
from enum import Enum, IntEnum
from functools import cached_property
from pathlib import Path
from typing import Iterable

import cv2
import numpy as np
from scipy import ndimage

logger = logging.getLogger(__name__)

NUM_CLASSES = 5


class ClassId(IntEnum):
    """Semantic classes of the label grid."""
    SEA = 0
    OIL = 1
    LOOKALIKE = 2
    SHIP = 3
    LAND = 4


# RGB display palette, bijective with ClassId
PALETTE: dict[ClassId, tuple[int, int, int]] = {
    ClassId.SEA: (0, 0, 0),
    ClassId.OIL: (0, 255, 255),
    ClassId.LOOKALIKE: (255, 0, 0),
    ClassId.SHIP: (153, 76, 0),
    ClassId.LAND: (0, 153, 0),
}


class MaskFormat(str, Enum):
    """Supported on-disk mask encodings."""
    INDEXED = "indexed"
    PALETTE_RGB = "palette_rgb"


class LabelMapError(Exception):
    """Base error for label map operations."""


class UnknownPixelValueError(LabelMapError):
    """Raised when a decoded pixel has no entry in the format lookup table."""


class MalformedImageError(LabelMapError):
    """Raised when bytes can't be decoded into an 8-bit mask image."""


def connectivity_structure(connectivity: int) -> np.ndarray:
    """
    Returns the scipy structuring element for 4- or 8-connectivity.

    Args:
        connectivity (int): 4 or 8.

    Returns:
        np.ndarray: 3×3 boolean structuring element.
    """
    match connectivity:
        case 4:
            return ndimage.generate_binary_structure(2, 1)
        case 8:
            return ndimage.generate_binary_structure(2, 2)
        case _:
            error_message = f"Connectivity must be 4 or 8, got: {connectivity}"
            logger.error(error_message)
            raise ValueError(error_message)


def _readonly(array: np.ndarray) -> np.ndarray:
    array = np.array(array, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class Region:
    """
    One connected component of a class, stored as a bitmask inside its bounding box.

    Attributes:
        class_id (ClassId): Class of every pixel in the region.
        mask (np.ndarray): Boolean bitmask, trimmed to the region bounding box.
        offset (tuple[int, int]): Canvas (row, col) of mask[0, 0]. May be negative
            for regions that were transformed past the canvas edge.
        canvas_shape (tuple[int, int]): (height, width) of the label map the region lives on.
    """
    class_id: ClassId
    mask: np.ndarray
    offset: tuple[int, int]
    canvas_shape: tuple[int, int]

    def __post_init__(self) -> None:
        mask = np.asarray(self.mask, dtype=bool)
        if mask.ndim != 2 or not mask.any():
            error_message = "Region mask must be a non-empty 2D grid."
            logger.error(error_message)
            raise ValueError(error_message)
        rows = np.flatnonzero(mask.any(axis=1))
        cols = np.flatnonzero(mask.any(axis=0))
        trimmed = mask[rows[0]:rows[-1] + 1, cols[0]:cols[-1] + 1]
        object.__setattr__(self, "class_id", ClassId(self.class_id))
        object.__setattr__(self, "mask", _readonly(trimmed))
        object.__setattr__(self, "offset", (int(self.offset[0] + rows[0]),
                                            int(self.offset[1] + cols[0])))
        object.__setattr__(self, "canvas_shape", (int(self.canvas_shape[0]),
                                                  int(self.canvas_shape[1])))

    @classmethod
    def from_pixels(cls, class_id: ClassId, rows: np.ndarray, cols: np.ndarray,
                    canvas_shape: tuple[int, int]) -> "Region":
        """
        Builds a region from canvas pixel coordinates.

        Args:
            class_id (ClassId): Region class.
            rows (np.ndarray): Row coordinates.
            cols (np.ndarray): Column coordinates.
            canvas_shape (tuple[int, int]): Canvas (height, width).

        Returns:
            Region: Region covering exactly the given pixels.
        """
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        if rows.size == 0:
            error_message = "Can't build a region from an empty pixel set."
            logger.error(error_message)
            raise ValueError(error_message)
        row0, col0 = int(rows.min()), int(cols.min())
        mask = np.zeros((int(rows.max()) - row0 + 1, int(cols.max()) - col0 + 1), dtype=bool)
        mask[rows - row0, cols - col0] = True
        return cls(class_id, mask, (row0, col0), canvas_shape)

    @cached_property
    def area(self) -> int:
        """Pixel count |R|."""
        return int(np.count_nonzero(self.mask))

    @property
    def bbox(self) -> tuple[int, int, int, int]:
        """Inclusive (min_row, min_col, max_row, max_col) in canvas coordinates."""
        height, width = self.mask.shape
        return (self.offset[0], self.offset[1],
                self.offset[0] + height - 1, self.offset[1] + width - 1)

    @cached_property
    def coords(self) -> np.ndarray:
        """(K, 2) array of canvas (row, col) pixel coordinates in row-major order."""
        local = np.argwhere(self.mask)
        return local + np.array(self.offset, dtype=np.int64)

    @cached_property
    def pixels(self) -> frozenset[tuple[int, int]]:
        """Explicit pixel set of canvas (row, col) tuples."""
        return frozenset(map(tuple, self.coords.tolist()))

    @cached_property
    def centroid(self) -> tuple[float, float]:
        """Real-valued (row, col) mean of the region pixels."""
        mean = self.coords.mean(axis=0)
        return float(mean[0]), float(mean[1])

    def contains(self, row: int, col: int) -> bool:
        """Checks canvas pixel membership."""
        local_row, local_col = row - self.offset[0], col - self.offset[1]
        height, width = self.mask.shape
        if 0 <= local_row < height and 0 <= local_col < width:
            return bool(self.mask[local_row, local_col])
        return False

    def padded_mask(self, pad: int) -> tuple[np.ndarray, tuple[int, int]]:
        """
        Returns the bitmask with a background margin and the canvas offset of its origin.

        Args:
            pad (int): Margin width in pixels.

        Returns:
            tuple[np.ndarray, tuple[int, int]]: Padded mask and its (row, col) offset.
        """
        padded = np.pad(self.mask, pad, mode="constant", constant_values=False)
        return padded, (self.offset[0] - pad, self.offset[1] - pad)

    def translated(self, d_row: int, d_col: int) -> "Region":
        """Returns the region shifted by an integer offset."""
        return Region(self.class_id, self.mask,
                      (self.offset[0] + int(d_row), self.offset[1] + int(d_col)),
                      self.canvas_shape)

    def union(self, rows: np.ndarray, cols: np.ndarray) -> "Region":
        """Returns the region extended by extra canvas pixels."""
        all_rows = np.concatenate([self.coords[:, 0], np.asarray(rows, dtype=np.int64)])
        all_cols = np.concatenate([self.coords[:, 1], np.asarray(cols, dtype=np.int64)])
        return Region.from_pixels(self.class_id, all_rows, all_cols, self.canvas_shape)

    def fits_canvas(self) -> bool:
        """Checks whether every pixel lies inside the canvas."""
        min_row, min_col, max_row, max_col = self.bbox
        height, width = self.canvas_shape
        return min_row >= 0 and min_col >= 0 and max_row < height and max_col < width

    def overlaps_canvas(self) -> bool:
        """Checks whether the bounding box intersects the canvas at all."""
        min_row, min_col, max_row, max_col = self.bbox
        height, width = self.canvas_shape
        return max_row >= 0 and max_col >= 0 and min_row < height and min_col < width

    def clipped(self) -> "Region | None":
        """Returns the part of the region inside the canvas, None when nothing is left."""
        coords = self.coords
        height, width = self.canvas_shape
        inside = ((coords[:, 0] >= 0) & (coords[:, 0] < height)
                  & (coords[:, 1] >= 0) & (coords[:, 1] < width))
        if not inside.any():
            return None
        return Region.from_pixels(self.class_id, coords[inside, 0], coords[inside, 1],
                                  self.canvas_shape)


@dataclass(frozen=True, eq=False)
class LabelMap:
    """
    Immutable semantic label grid with one class id byte per pixel.

    Attributes:
        data (np.ndarray): Row-major (height, width) uint8 grid of class ids 0..4.
    """
    data: np.ndarray

    def __post_init__(self) -> None:
        data = np.asarray(self.data)
        if data.ndim != 2 or data.size == 0:
            error_message = f"Label map must be a non-empty 2D grid, got shape {data.shape}."
            logger.error(error_message)
            raise ValueError(error_message)
        if data.dtype.kind not in "ui" or data.min() < 0 or data.max() >= NUM_CLASSES:
            error_message = (f"Label map values must be class ids 0..{NUM_CLASSES - 1}, "
                             f"got range [{data.min()}, {data.max()}].")
            logger.error(error_message)
            raise ValueError(error_message)
        object.__setattr__(self, "data", _readonly(data.astype(np.uint8)))

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, LabelMap):
            return NotImplemented
        return self.data.shape == other.data.shape and np.array_equal(self.data, other.data)

    __hash__ = None

    @property
    def height(self) -> int:
        """Grid height in pixels."""
        return self.data.shape[0]

    @property
    def width(self) -> int:
        """Grid width in pixels."""
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        """(height, width) of the grid."""
        return self.height, self.width

    def digest(self) -> bytes:
        """Shape-aware byte key for bit-exact comparisons."""
        return np.array(self.shape, dtype=np.int64).tobytes() + self.data.tobytes()

    def class_histogram(self) -> dict[ClassId, int]:
        """
        Counts pixels per class.

        Returns:
            dict[ClassId, int]: Pixel count of every class, summing to width × height.
        """
        counts = np.bincount(self.data.ravel(), minlength=NUM_CLASSES)
        return {class_id: int(counts[class_id]) for class_id in ClassId}

    def connected_components(self, class_id: ClassId, connectivity: int = 8) -> list[Region]:
        """
        Splits the support of one class into connected regions.

        Args:
            class_id (ClassId): Class whose pixels are labeled.
            connectivity (int): 4 or 8 neighbourhood. Default is 8.

        Returns:
            list[Region]: Disjoint regions ordered by (min row, min col) of their bounding box.
        """
        labeled, count = ndimage.label(self.data == class_id,
                                       structure=connectivity_structure(connectivity))
        regions = []
        for label, slices in enumerate(ndimage.find_objects(labeled), start=1):
            if slices is None:
                continue
            mask = labeled[slices] == label
            offset = (slices[0].start, slices[1].start)
            regions.append((offset, label, Region(class_id, mask, offset, self.shape)))
        regions.sort(key=lambda item: (item[0], item[1]))
        logger.debug("Found %s components of class %s.", count, class_id.name)
        return [region for _, _, region in regions]

    def remove_small(self, min_px: int, classes: Iterable[ClassId],
                     fill: ClassId = ClassId.SEA, connectivity: int = 8) -> "LabelMap":
        """
        Relabels every component smaller than min_px of the given classes to fill.

        Args:
            min_px (int): Minimum kept component area; areas equal to it are kept.
            classes (Iterable[ClassId]): Classes that are cleaned.
            fill (ClassId): Replacement class. Default is sea.
            connectivity (int): 4 or 8 neighbourhood. Default is 8.

        Returns:
            LabelMap: Cleaned label map; other pixels are unchanged.
        """
        classes = {ClassId(class_id) for class_id in classes}
        if fill in classes:
            error_message = f"Fill class {fill.name} can't be one of the cleaned classes."
            logger.error(error_message)
            raise ValueError(error_message)
        structure = connectivity_structure(connectivity)
        cleaned = self.data.copy()
        removed = 0
        for class_id in sorted(classes):
            labeled, _ = ndimage.label(self.data == class_id, structure=structure)
            sizes = np.bincount(labeled.ravel())
            small = sizes < min_px
            small[0] = False
            hit = small[labeled]
            removed += int(np.count_nonzero(hit))
            cleaned[hit] = fill
        if removed:
            logger.debug("Removed %s pixels of small components.", removed)
        return LabelMap(cleaned)

    def with_class(self, rows: np.ndarray, cols: np.ndarray, class_id: ClassId) -> "LabelMap":
        """Returns a copy with the given canvas pixels set to class_id."""
        data = self.data.copy()
        data[np.asarray(rows, dtype=np.int64), np.asarray(cols, dtype=np.int64)] = class_id
        return LabelMap(data)

    def to_rgb(self) -> np.ndarray:
        """Renders the grid with the display palette as an (H, W, 3) RGB uint8 image."""
        lookup = np.array([PALETTE[class_id] for class_id in ClassId], dtype=np.uint8)
        return lookup[self.data]


class MaskProcessor(ABC):
    """Abstract class for creating mask codecs used for managing mask files."""
    @staticmethod
    @abstractmethod
    def decode_mask(encoded: bytes, mask_format: MaskFormat) -> LabelMap:
        """
        Decode encoded image bytes into a label map.

        Args:
            encoded (bytes): Encoded 8-bit image.
            mask_format (MaskFormat): Lookup table used to map pixels to classes.

        Returns:
            LabelMap: Decoded label map.
        """

    @staticmethod
    @abstractmethod
    def encode_mask(label_map: LabelMap, mask_format: MaskFormat) -> bytes:
        """
        Encode a label map into image bytes.

        Args:
            label_map (LabelMap): Label map to encode.
            mask_format (MaskFormat): Target encoding.

        Returns:
            bytes: Encoded image.
        """

    @classmethod
    def read_mask(cls, mask_path: Path,
                  mask_format: MaskFormat = MaskFormat.INDEXED) -> LabelMap:
        """
        Read mask file from given path and decode it.

        Args:
            mask_path (Path): Path to the mask file.
            mask_format (MaskFormat): Encoding of the file. Default is indexed.

        Returns:
            LabelMap: Decoded label map.
        """
        label_map = cls.decode_mask(Path(mask_path).read_bytes(), mask_format)
        logger.debug("Mask '%s' has successfully read.", mask_path)
        return label_map

    @classmethod
    def save_mask(cls, label_map: LabelMap, mask_path: Path,
                  mask_format: MaskFormat = MaskFormat.INDEXED) -> Path:
        """
        Encode label map and save it at given path.

        Args:
            label_map (LabelMap): Label map to save.
            mask_path (Path): Destination path.
            mask_format (MaskFormat): Encoding of the file. Default is indexed.

        Returns:
            Path: Path where mask was saved.
        """
        mask_path = Path(mask_path)
        mask_path.parent.mkdir(parents=True, exist_ok=True)
        mask_path.write_bytes(cls.encode_mask(label_map, mask_format))
        logger.debug("Mask saved at '%s'.", mask_path)
        return mask_path


class OpenCVMask(MaskProcessor):
    """Mask codec implementation using OpenCV library (PNG container)."""
    @staticmethod
    def decode_mask(encoded: bytes, mask_format: MaskFormat) -> LabelMap:
        """
        Decode encoded image bytes into a label map.

        Args:
            encoded (bytes): Encoded 8-bit image.
            mask_format (MaskFormat): Lookup table used to map pixels to classes.

        Returns:
            LabelMap: Decoded label map.

        Raises:
            MalformedImageError: If bytes are not a decodable 8-bit image.
            UnknownPixelValueError: If a pixel has no class in the lookup table.
        """
        image = OpenCVMask._imdecode(encoded, mask_format)
        match MaskFormat(mask_format):
            case MaskFormat.INDEXED:
                return OpenCVMask._decode_indexed(image)
            case MaskFormat.PALETTE_RGB:
                return OpenCVMask._decode_palette(image)

    @staticmethod
    def _imdecode(encoded: bytes, mask_format: MaskFormat) -> np.ndarray:
        buffer = np.frombuffer(encoded, dtype=np.uint8)
        flags = (cv2.IMREAD_UNCHANGED if mask_format == MaskFormat.INDEXED
                 else cv2.IMREAD_COLOR)
        image = None
        if buffer.size:
            try:
                image = cv2.imdecode(buffer, flags)
            except cv2.error:
                image = None
        if not isinstance(image, np.ndarray) or image.dtype != np.uint8:
            error_message = "Can't decode mask. OpenCV decoding not returns an 8-bit image."
            logger.error(error_message)
            raise MalformedImageError(error_message)
        return image

    @staticmethod
    def _decode_indexed(image: np.ndarray) -> LabelMap:
        if image.ndim == 3:
            channels = image[..., :3]
            if not (np.array_equal(channels[..., 0], channels[..., 1])
                    and np.array_equal(channels[..., 0], channels[..., 2])):
                error_message = "Indexed mask must be single-channel or gray, got color image."
                logger.error(error_message)
                raise MalformedImageError(error_message)
            image = channels[..., 0]
        unknown = np.unique(image[image >= NUM_CLASSES])
        if unknown.size:
            error_message = f"Mask contains values outside class lookup: {unknown.tolist()}"
            logger.error(error_message)
            raise UnknownPixelValueError(error_message)
        return LabelMap(image)

    @staticmethod
    def _decode_palette(image: np.ndarray) -> LabelMap:
        rgb = cv2.cvtColor(image, cv2.COLOR_BGR2RGB).astype(np.int64)
        keys = (rgb[..., 0] << 16) | (rgb[..., 1] << 8) | rgb[..., 2]
        lookup = {(red << 16) | (green << 8) | blue: class_id
                  for class_id, (red, green, blue) in PALETTE.items()}
        colors, inverse = np.unique(keys, return_inverse=True)
        unknown = [int(color) for color in colors if int(color) not in lookup]
        if unknown:
            error_message = (f"Mask contains colors outside the palette: "
                             f"{[f'#{color:06x}' for color in unknown]}")
            logger.error(error_message)
            raise UnknownPixelValueError(error_message)
        classes = np.array([lookup[int(color)] for color in colors], dtype=np.uint8)
        return LabelMap(classes[inverse].reshape(keys.shape))

    @staticmethod
    def encode_mask(label_map: LabelMap, mask_format: MaskFormat) -> bytes:
        """
        Encode a label map into PNG bytes.

        Args:
            label_map (LabelMap): Label map to encode.
            mask_format (MaskFormat): Target encoding.

        Returns:
            bytes: Encoded PNG image.
        """
        match MaskFormat(mask_format):
            case MaskFormat.INDEXED:
                image = label_map.data
            case MaskFormat.PALETTE_RGB:
                image = cv2.cvtColor(label_map.to_rgb(), cv2.COLOR_RGB2BGR)
        success, buffer = cv2.imencode(".png", np.ascontiguousarray(image))
        if not success:
            error_message = "OpenCV failed to encode mask."
            logger.error(error_message)
            raise MalformedImageError(error_message)
        return buffer.tobytes()
