"""
This module provides the geometry kernels consumed by the MORP engine:
    - trace_outer_contour: outer boundary of a region as a CCW point sequence.
    - sg_smooth_circular, resolve_sg_window: periodic Savitzky-Golay smoothing.
    - curvature_profile, flat_runs: signed curvature with optional radial boost.
    - detect_apices, select_apices_kmeans: apex discovery and spreading.
    - distance_transform, outward_normal, inward_support: normals and ray support.
    - fan_directions, rasterize_fan_polygon: fan polygons closed at an apex.
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
import warnings
from dataclasses import dataclass

import cv2
import numpy as np
from scipy import ndimage
from scipy.cluster.vq import kmeans2
from scipy.signal import find_peaks, peak_prominences, savgol_filter

from .label_maps import Region

logger = logging.getLogger(__name__)

EPS = 1e-6
MARCH_STEP = 0.5
NORMAL_PAD = 2


class GeometryError(Exception):
    """Base error for geometry kernels."""


class DegenerateRegionError(GeometryError):
    """Raised when a region is too small for the requested kernel."""


class WindowTooLargeError(GeometryError):
    """Raised when the smoothing window exceeds the sequence length."""


class EmptyReferenceSetError(GeometryError):
    """Raised when a distance transform has no reference pixel."""


class DegenerateNormalError(GeometryError):
    """Raised when neither the gradient nor the centroid offset gives a direction."""


@dataclass(frozen=True)
class Contour:
    """
    Closed boundary as an ordered (N, 2) array of (x=col, y=row) pixel centers.

    Attributes:
        points (np.ndarray): Contour points, positive signed area for N ≥ 3.
        degenerate (bool): Too few points to carry curvature.
    """
    points: np.ndarray
    degenerate: bool = False

    def __len__(self) -> int:
        return len(self.points)

    def signed_area(self) -> float:
        """Shoelace area, positive for the normalized orientation."""
        x, y = self.points[:, 0], self.points[:, 1]
        return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


@dataclass(frozen=True)
class CurvatureProfile:
    """Signed curvature of a smoothed contour."""
    kappa: np.ndarray
    kappa_plus: np.ndarray
    smoothed: tuple[np.ndarray, np.ndarray]
    radii: np.ndarray
    centroid: tuple[float, float]


@dataclass(frozen=True)
class DistanceField:
    """
    Euclidean distances to the nearest reference pixel.

    Attributes:
        values (np.ndarray): Distance grid.
        origin (tuple[int, int]): Canvas (row, col) of values[0, 0].
    """
    values: np.ndarray
    origin: tuple[int, int] = (0, 0)


@dataclass(frozen=True)
class FanPolygon:
    """Fan of rays at an apex and its inclusive raster as canvas rows and cols."""
    apex: tuple[float, float]
    directions: np.ndarray
    lengths: np.ndarray
    rows: np.ndarray
    cols: np.ndarray

    @property
    def vertices(self) -> np.ndarray:
        """(n_rays + 1, 2) polygon vertices, closed at the apex."""
        tips = np.asarray(self.apex) + self.directions * self.lengths[:, None]
        return np.vstack([np.asarray(self.apex, dtype=float)[None, :], tips])


def trace_outer_contour(region: Region) -> Contour:
    """
    Traces the outer boundary of a region; holes are ignored.

    Args:
        region (Region): Region to trace.

    Returns:
        Contour: Boundary starting at the topmost-then-leftmost pixel, positive
            signed area. A one-pixel region gives a degenerate one-point contour.
    """
    if region.area < 1:
        error_message = "Can't trace the contour of an empty region."
        logger.error(error_message)
        raise DegenerateRegionError(error_message)
    padded, (row0, col0) = region.padded_mask(1)
    contours, _ = cv2.findContours(padded.astype(np.uint8), cv2.RETR_EXTERNAL,
                                   cv2.CHAIN_APPROX_NONE)
    outer = max(contours, key=len)
    points = outer.reshape(-1, 2).astype(np.float64)
    points += np.array([col0, row0], dtype=np.float64)
    contour = Contour(points, degenerate=len(points) < 3)
    if not contour.degenerate and contour.signed_area() < 0:
        points = points[::-1]
    start = int(np.lexsort((points[:, 0], points[:, 1]))[0])
    points = np.roll(points, -start, axis=0)
    logger.debug("Traced contour of %s points for region at %s.", len(points), region.offset)
    return Contour(points, degenerate=len(points) < 3)


def resolve_sg_window(w: int, p: int, n: int) -> tuple[int, int]:
    """
    Shrinks the smoothing window for short contours.

    Args:
        w (int): Requested odd window.
        p (int): Requested polynomial order.
        n (int): Contour length.

    Returns:
        tuple[int, int]: Window and order usable on the contour.
    """
    if w <= n / 2:
        return w, p
    reduced = max(3, n // 2)
    if reduced % 2 == 0:
        reduced -= 1
    reduced = max(3, reduced)
    order = min(p, reduced - 1)
    logger.warning("Smoothing window %s too large for contour of %s points, using w=%s, p=%s.",
                   w, n, reduced, order)
    return reduced, order


def sg_smooth_circular(x: np.ndarray, y: np.ndarray, w: int, p: int,
                       mode: str = "wrap") -> tuple[np.ndarray, np.ndarray]:
    """
    Savitzky-Golay smoothing of a closed curve.

    Args:
        x (np.ndarray): Coordinate sequence.
        y (np.ndarray): Coordinate sequence.
        w (int): Odd window length.
        p (int): Polynomial order, lower than w.
        mode (str): Boundary handling; 'wrap' for closed curves.

    Returns:
        tuple[np.ndarray, np.ndarray]: Smoothed coordinates.
    """
    n = len(x)
    if w % 2 == 0 or p >= w:
        error_message = f"Smoothing needs an odd window above the order, got w={w}, p={p}."
        logger.error(error_message)
        raise ValueError(error_message)
    if w > n:
        error_message = f"Smoothing window {w} exceeds sequence length {n}."
        logger.error(error_message)
        raise WindowTooLargeError(error_message)
    x_smooth = savgol_filter(np.asarray(x, dtype=np.float64), w, p, mode=mode)
    y_smooth = savgol_filter(np.asarray(y, dtype=np.float64), w, p, mode=mode)
    return x_smooth, y_smooth


def _central_difference(values: np.ndarray, step: int) -> np.ndarray:
    return (np.roll(values, -step) - np.roll(values, step)) / (2.0 * step)


def curvature_profile(contour: Contour, w: int, p: int, d_s: int,
                      eps: float = EPS, rho: float = 0.0) -> CurvatureProfile:
    """
    Computes signed curvature on the smoothed contour.

    Args:
        contour (Contour): Non-degenerate contour.
        w (int): Smoothing window.
        p (int): Smoothing polynomial order.
        d_s (int): Derivative step in points.
        eps (float): Denominator regularizer.
        rho (float): Radial boost strength.

    Returns:
        CurvatureProfile: kappa and the clamped, boosted kappa_plus.
    """
    if contour.degenerate:
        error_message = f"Contour of {len(contour)} points carries no curvature."
        logger.error(error_message)
        raise DegenerateRegionError(error_message)
    n = len(contour)
    w, p = resolve_sg_window(w, p, n)
    x_smooth, y_smooth = sg_smooth_circular(contour.points[:, 0], contour.points[:, 1], w, p)
    step = min(d_s, max(1, (n - 1) // 2))
    dx = _central_difference(x_smooth, step)
    dy = _central_difference(y_smooth, step)
    ddx = _central_difference(dx, step)
    ddy = _central_difference(dy, step)
    kappa = (dx * ddy - dy * ddx) / ((dx ** 2 + dy ** 2) ** 1.5 + eps)

    centroid = (float(x_smooth.mean()), float(y_smooth.mean()))
    radii = np.hypot(x_smooth - centroid[0], y_smooth - centroid[1])
    kappa_plus = np.maximum(kappa, 0.0)
    if rho != 0:
        boost = 1.0 + rho * (radii - radii.mean()) / (radii.std() + eps)
        kappa_plus = np.maximum(kappa_plus * boost, 0.0)
    return CurvatureProfile(kappa, kappa_plus, (x_smooth, y_smooth), radii, centroid)


def flat_runs(kappa: np.ndarray, kappa_flat: float, min_length: int) -> list[tuple[int, int]]:
    """
    Finds circular runs of near-zero curvature.

    Args:
        kappa (np.ndarray): Signed curvature.
        kappa_flat (float): Magnitude below which a point is flat.
        min_length (int): Shortest reported run.

    Returns:
        list[tuple[int, int]]: (start, length) runs, longest first, ties by start.
    """
    flat = np.abs(kappa) < kappa_flat
    n = len(flat)
    if flat.all():
        return [(0, n)] if n >= min_length else []
    shift = int(np.flatnonzero(~flat)[0])
    rotated = np.roll(flat, -shift)
    padded = np.concatenate([[False], rotated, [False]]).astype(np.int8)
    edges = np.diff(padded)
    starts = np.flatnonzero(edges == 1)
    ends = np.flatnonzero(edges == -1)
    runs = [((int(start) + shift) % n, int(end - start))
            for start, end in zip(starts, ends) if end - start >= min_length]
    runs.sort(key=lambda run: (-run[1], run[0]))
    return runs


def detect_apices(kappa_plus: np.ndarray, q: float, d: int) -> list[int]:
    """
    Finds curvature peaks used as edit anchors.

    Peaks are thinned tallest first (equal heights keep the smaller index) so that
    kept peaks are at least d apart along the closed contour, then only peaks with
    prominence above the q-quantile of kappa_plus survive.

    Args:
        kappa_plus (np.ndarray): Non-negative curvature.
        q (float): Quantile of the prominence threshold.
        d (int): Minimum circular index distance.

    Returns:
        list[int]: Apex indices, ascending.
    """
    if d < 1:
        error_message = f"Minimum apex distance must be at least 1, got {d}."
        logger.error(error_message)
        raise ValueError(error_message)
    signal = np.asarray(kappa_plus, dtype=np.float64)
    n = len(signal)
    if n < 3:
        return []
    threshold = float(np.quantile(signal, q))
    tiled = np.concatenate([signal, signal, signal])
    peaks, _ = find_peaks(tiled)
    peaks = peaks[(peaks >= n) & (peaks < 2 * n)]
    if peaks.size == 0:
        return []
    prominences = peak_prominences(tiled, peaks)[0]
    candidates = sorted(zip(peaks - n, prominences), key=lambda item: (-signal[item[0]], item[0]))
    kept: list[tuple[int, float]] = []
    for index, prominence in candidates:
        if all(min(abs(index - other), n - abs(index - other)) >= d for other, _ in kept):
            kept.append((int(index), float(prominence)))
    apices = sorted(index for index, prominence in kept if prominence > threshold)
    logger.debug("Detected %s apices above prominence %.6f.", len(apices), threshold)
    return apices


def select_apices_kmeans(points: np.ndarray, indices: list[int], m: int,
                         centroid: tuple[float, float], rng: np.random.Generator) -> list[int]:
    """
    Spreads apices along the boundary with k-means.

    Args:
        points (np.ndarray): (K, 2) apex (x, y) coordinates.
        indices (list[int]): Contour index of each apex.
        m (int): Number of apices to keep.
        centroid (tuple[float, float]): Region centroid as (x, y).
        rng (np.random.Generator): Generator of the k-means seeding.

    Returns:
        list[int]: Kept contour indices, ascending, one per cluster.
    """
    if m < 1:
        error_message = f"Apex count m must be at least 1, got {m}."
        logger.error(error_message)
        raise ValueError(error_message)
    points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    indices = [int(index) for index in indices]
    if len(indices) <= m:
        return sorted(indices)
    distances = np.hypot(points[:, 0] - centroid[0], points[:, 1] - centroid[1])
    order = sorted(range(len(indices)), key=lambda i: (-distances[i], indices[i]))

    if len(np.unique(points, axis=0)) <= m:
        chosen, seen = [], set()
        for i in order:
            key = tuple(points[i])
            if key not in seen:
                seen.add(key)
                chosen.append(indices[i])
        return sorted(chosen)

    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        _, labels = kmeans2(points, m, iter=50, minit="++", seed=rng, missing="warn")
    chosen_positions = []
    for cluster in range(m):
        members = [i for i in order if labels[i] == cluster]
        if members:
            chosen_positions.append(members[0])
    for i in order:
        if len(chosen_positions) >= m:
            break
        if i not in chosen_positions:
            chosen_positions.append(i)
    return sorted(indices[i] for i in chosen_positions)


def distance_transform(reference: np.ndarray, origin: tuple[int, int] = (0, 0)) -> DistanceField:
    """
    Exact Euclidean distance of every pixel to the nearest reference pixel.

    Args:
        reference (np.ndarray): Boolean grid, True on the reference set.
        origin (tuple[int, int]): Canvas (row, col) of the grid's first pixel.

    Returns:
        DistanceField: Distances, zero on the reference set.
    """
    reference = np.asarray(reference, dtype=bool)
    if not reference.any():
        error_message = "Distance transform needs at least one reference pixel."
        logger.error(error_message)
        raise EmptyReferenceSetError(error_message)
    values = ndimage.distance_transform_edt(~reference)
    return DistanceField(np.asarray(values, dtype=np.float64), origin)


def region_distance_field(region: Region) -> DistanceField:
    """Distance to the region on its padded bounding box."""
    padded, origin = region.padded_mask(NORMAL_PAD)
    return distance_transform(padded, origin)


def _gradient_at(values: np.ndarray, row: int, col: int) -> tuple[float, float]:
    height, width = values.shape
    left, right = max(col - 1, 0), min(col + 1, width - 1)
    up, down = max(row - 1, 0), min(row + 1, height - 1)
    grad_x = (values[row, right] - values[row, left]) / max(right - left, 1)
    grad_y = (values[down, col] - values[up, col]) / max(down - up, 1)
    return float(grad_x), float(grad_y)


def outward_normal(field: DistanceField, apex: tuple[float, float], region: Region,
                   eps: float = EPS) -> np.ndarray:
    """
    Unit normal pointing out of the region at an apex.

    Args:
        field (DistanceField): Distance to the region.
        apex (tuple[float, float]): Apex (x, y).
        region (Region): Region the apex belongs to.
        eps (float): Norm below which a direction is unusable.

    Returns:
        np.ndarray: (x, y) unit vector.
    """
    row = int(math.floor(apex[1] + 0.5)) - field.origin[0]
    col = int(math.floor(apex[0] + 0.5)) - field.origin[1]
    height, width = field.values.shape
    if 0 <= row < height and 0 <= col < width:
        gradient = np.array(_gradient_at(field.values, row, col))
        norm = float(np.hypot(*gradient))
        if norm > eps:
            return gradient / norm
    centroid_row, centroid_col = region.centroid
    offset = np.array([apex[0] - centroid_col, apex[1] - centroid_row])
    norm = float(np.hypot(*offset))
    if norm > eps:
        logger.debug("Flat distance gradient at %s, using centroid direction.", apex)
        return offset / norm
    error_message = f"No outward direction at apex {apex}."
    logger.error(error_message)
    raise DegenerateNormalError(error_message)


def inward_support(region: Region, apex: tuple[float, float], direction: np.ndarray) -> int:
    """
    Length the region extends behind the apex against a direction.

    Args:
        region (Region): Region being edited.
        apex (tuple[float, float]): Apex (x, y).
        direction (np.ndarray): Unit (x, y) direction; the march goes along -direction.

    Returns:
        int: Whole pixels of support, 0 when the first step leaves the region.
    """
    min_row, min_col, max_row, max_col = region.bbox
    limit = math.hypot(max_row - min_row + 1, max_col - min_col + 1) + 2.0
    last_inside = 0.0
    t = MARCH_STEP
    while t <= limit:
        x = apex[0] - t * direction[0]
        y = apex[1] - t * direction[1]
        if not region.contains(int(math.floor(y + 0.5)), int(math.floor(x + 0.5))):
            break
        last_inside = t
        t += MARCH_STEP
    return int(math.floor(last_inside))


def fan_directions(normal: np.ndarray, alpha: float, n_rays: int) -> np.ndarray:
    """
    Evenly spaced unit rays within ±alpha of a normal.

    Args:
        normal (np.ndarray): Central (x, y) unit direction.
        alpha (float): Half-angle in radians.
        n_rays (int): Number of rays, at least 2.

    Returns:
        np.ndarray: (n_rays, 2) unit vectors.
    """
    if n_rays < 2:
        error_message = f"A fan needs at least 2 rays, got {n_rays}."
        logger.error(error_message)
        raise ValueError(error_message)
    angles = np.linspace(-alpha, alpha, n_rays)
    cos, sin = np.cos(angles), np.sin(angles)
    directions = np.stack([cos * normal[0] - sin * normal[1],
                           sin * normal[0] + cos * normal[1]], axis=1)
    return directions / np.linalg.norm(directions, axis=1, keepdims=True)


def _points_in_polygon(px: np.ndarray, py: np.ndarray, vertices: np.ndarray,
                       tolerance: float = 1e-9) -> np.ndarray:
    inside = np.zeros(px.shape, dtype=bool)
    on_edge = np.zeros(px.shape, dtype=bool)
    count = len(vertices)
    for i in range(count):
        x1, y1 = vertices[i]
        x2, y2 = vertices[(i + 1) % count]
        crosses = (y1 > py) != (y2 > py)
        with np.errstate(divide="ignore", invalid="ignore"):
            x_cross = x1 + (py - y1) * (x2 - x1) / (y2 - y1)
        inside ^= crosses & (px < x_cross)

        edge_x, edge_y = x2 - x1, y2 - y1
        length_sq = edge_x ** 2 + edge_y ** 2
        if length_sq == 0:
            on_edge |= np.hypot(px - x1, py - y1) <= tolerance
            continue
        t = np.clip(((px - x1) * edge_x + (py - y1) * edge_y) / length_sq, 0.0, 1.0)
        on_edge |= np.hypot(px - (x1 + t * edge_x), py - (y1 + t * edge_y)) <= tolerance
    return inside | on_edge


def rasterize_fan_polygon(apex: tuple[float, float], directions: np.ndarray,
                          lengths: np.ndarray) -> FanPolygon:
    """
    Fills the polygon [a, a + d_1 u_1, ..., a + d_n u_n] closed at the apex.

    Args:
        apex (tuple[float, float]): Apex (x, y).
        directions (np.ndarray): (n_rays, 2) unit vectors.
        lengths (np.ndarray): Non-negative ray lengths.

    Returns:
        FanPolygon: Fan with inclusive raster of pixel centers.
    """
    directions = np.asarray(directions, dtype=np.float64).reshape(-1, 2)
    lengths = np.asarray(lengths, dtype=np.float64)
    if len(directions) < 2 or len(lengths) != len(directions) or (lengths < 0).any():
        error_message = "Fan needs at least 2 rays with one non-negative length each."
        logger.error(error_message)
        raise ValueError(error_message)
    apex = (float(apex[0]), float(apex[1]))
    apex_row, apex_col = int(math.floor(apex[1] + 0.5)), int(math.floor(apex[0] + 0.5))
    vertices = np.vstack([np.array(apex)[None, :], np.array(apex) + directions * lengths[:, None]])

    col_lo, row_lo = np.floor(vertices.min(axis=0)).astype(int)
    col_hi, row_hi = np.ceil(vertices.max(axis=0)).astype(int)
    grid_rows, grid_cols = np.mgrid[row_lo:row_hi + 1, col_lo:col_hi + 1]
    filled = _points_in_polygon(grid_cols.astype(np.float64), grid_rows.astype(np.float64),
                                vertices)
    rows, cols = grid_rows[filled], grid_cols[filled]
    if not ((rows == apex_row) & (cols == apex_col)).any():
        rows = np.append(rows, apex_row)
        cols = np.append(cols, apex_col)
    return FanPolygon(apex, directions, lengths, rows.astype(np.int64), cols.astype(np.int64))
