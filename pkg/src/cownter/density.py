"""Gaussian density maps: the training target and count readout for the
density-regression model.

Each point contributes a truncated Gaussian kernel whose footprint sum is
renormalized to exactly 1 before accumulation, so the map total equals the
point count up to float accumulation error, even for points near the border
where the kernel is clipped.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.ndimage

from .errors import DataError, FormatError
from .raster import Point

DEFAULT_SIGMA = 2.0  # px; cattle are ~5 px long at 0.4 m/px
TRUNCATION_SIGMAS = 4.0

_MAGIC = b"DMAP"


@dataclass(frozen=True)
class DensityMap:
    """Per-pixel non-negative map whose integral estimates the object count."""

    values: np.ndarray  # (H, W) float64
    sigma: float = DEFAULT_SIGMA

    def __post_init__(self) -> None:
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.ndim != 2:
            raise DataError(f"density map must be 2-D, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise DataError("density map contains non-finite values")
        if arr.min() < 0:
            raise DataError("density map contains negative values")
        object.__setattr__(self, "values", arr)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]


def render_density(
    points: list[Point] | tuple[Point, ...],
    width: int,
    height: int,
    sigma: float = DEFAULT_SIGMA,
) -> DensityMap:
    """Render point annotations into a Gaussian density map.

    Accumulation follows point-list order for bit reproducibility; the
    result is invariant to point permutation up to float addition order.

    Args:
        points: Annotation points, all inside [0, width) x [0, height).
        width: Map width in pixels.
        height: Map height in pixels.
        sigma: Kernel width in pixels; the kernel is truncated at 4 sigma
            and renormalized per point.

    Raises:
        DataError: Non-positive sigma or out-of-bounds point.
    """
    if sigma <= 0:
        raise DataError(f"sigma must be positive, got {sigma}")
    values = np.zeros((height, width), dtype=np.float64)
    radius = int(np.ceil(TRUNCATION_SIGMAS * sigma))
    inv_two_sigma2 = 1.0 / (2.0 * sigma * sigma)
    for p in points:
        if not (0 <= p.x < width and 0 <= p.y < height):
            raise DataError(f"point ({p.x}, {p.y}) outside {width}x{height} map")
        cx, cy = p.pixel()
        x0, x1 = max(0, cx - radius), min(width - 1, cx + radius)
        y0, y1 = max(0, cy - radius), min(height - 1, cy + radius)
        # Each array cell samples the kernel at its pixel center, matching
        # the continuous point coordinates where (0.5, 0.5) is the center
        # of the top-left pixel.
        xs = np.arange(x0, x1 + 1, dtype=np.float64) + 0.5
        ys = np.arange(y0, y1 + 1, dtype=np.float64) + 0.5
        d2 = (ys[:, None] - p.y) ** 2 + (xs[None, :] - p.x) ** 2
        kernel = np.exp(-d2 * inv_two_sigma2)
        kernel /= kernel.sum()
        values[y0 : y1 + 1, x0 : x1 + 1] += kernel
    return DensityMap(values, sigma=sigma)


def count_from_density(m: DensityMap) -> float:
    """Count readout: the sum of all map values."""
    return float(m.values.sum())


def cell_counts(m: DensityMap, grid_n: int) -> np.ndarray:
    """Integrate a density map over a grid_n x grid_n block partition.

    Blocks are half-open pixel ranges; the last row/column absorbs the
    remainder when dimensions don't divide evenly, so the blocks partition
    the image and the cells sum to the map total exactly.
    """
    return grid_cell_sums(m.values, grid_n)


def grid_cell_sums(values: np.ndarray, grid_n: int) -> np.ndarray:
    """Sum an (H, W) array over the standard grid_n x grid_n block partition."""
    h, w = values.shape
    if grid_n < 1 or grid_n > min(h, w):
        raise DataError(f"grid_n must be in [1, {min(h, w)}], got {grid_n}")
    cells = np.zeros((grid_n, grid_n), dtype=np.float64)
    for i in range(grid_n):
        y0, y1 = cell_bounds(h, grid_n, i)
        for j in range(grid_n):
            x0, x1 = cell_bounds(w, grid_n, j)
            cells[i, j] = values[y0:y1, x0:x1].sum()
    return cells


def cell_bounds(extent: int, grid_n: int, index: int) -> tuple[int, int]:
    """Half-open pixel range of grid cell ``index`` along one axis.

    Cell size is floor(extent / grid_n); the last cell absorbs the remainder.
    """
    step = extent // grid_n
    lo = index * step
    hi = (index + 1) * step if index < grid_n - 1 else extent
    return lo, hi


def points_cell_counts(
    points: list[Point] | tuple[Point, ...], width: int, height: int, grid_n: int
) -> np.ndarray:
    """Count points per grid cell under the same half-open block partition."""
    if grid_n < 1 or grid_n > min(height, width):
        raise DataError(f"grid_n must be in [1, {min(height, width)}], got {grid_n}")
    step_y = height // grid_n
    step_x = width // grid_n
    cells = np.zeros((grid_n, grid_n), dtype=np.float64)
    for p in points:
        col, row = p.pixel()
        i = min(row // step_y, grid_n - 1)
        j = min(col // step_x, grid_n - 1)
        cells[i, j] += 1.0
    return cells


def peak_threshold(sigma: float = DEFAULT_SIGMA) -> float:
    """Half the peak value of a unit-mass kernel at the given sigma."""
    return 0.5 / (2.0 * np.pi * sigma * sigma)


def density_peaks(
    values: np.ndarray, min_value: float | None = None, sigma: float = DEFAULT_SIGMA
) -> list[Point]:
    """Local maxima of a density map, as points at pixel centers.

    A pixel is a peak candidate when nothing in its 3x3 neighborhood
    exceeds it and it exceeds min_value, which defaults to half the peak
    of a unit-mass kernel so isolated instances survive. Connected runs
    of tied candidates (plateaus, e.g. a point symmetric between pixel
    centers) collapse to a single peak at the plateau centroid.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.ndim != 2:
        raise DataError(f"density map must be 2-D, got shape {values.shape}")
    if min_value is None:
        min_value = peak_threshold(sigma)
    neighborhood_max = scipy.ndimage.maximum_filter(values, size=3, mode="constant")
    candidates = (values >= neighborhood_max) & (values > min_value)
    labels, k = scipy.ndimage.label(candidates, structure=np.ones((3, 3), dtype=int))
    if k == 0:
        return []
    ys, xs = np.nonzero(candidates)
    ids = labels[ys, xs]
    sizes = np.bincount(ids, minlength=k + 1)[1:]
    mean_x = np.bincount(ids, weights=xs, minlength=k + 1)[1:] / sizes
    mean_y = np.bincount(ids, weights=ys, minlength=k + 1)[1:] / sizes
    return [Point(float(x) + 0.5, float(y) + 0.5) for x, y in zip(mean_x, mean_y)]


def save_density(m: DensityMap, path: str | Path) -> None:
    """Dump a map as magic "DMAP", u16 width, u16 height, f32 LE grid."""
    if m.width > 0xFFFF or m.height > 0xFFFF:
        raise DataError("density dump supports dimensions up to 65535")
    with open(path, "wb") as f:
        f.write(_MAGIC)
        f.write(struct.pack("<HH", m.width, m.height))
        f.write(m.values.astype("<f4").tobytes())


def load_density(path: str | Path, sigma: float = DEFAULT_SIGMA) -> DensityMap:
    """Read a "DMAP" dump written by save_density."""
    blob = Path(path).read_bytes()
    if len(blob) < 8 or blob[:4] != _MAGIC:
        raise FormatError(f"{path}: not a DMAP file")
    width, height = struct.unpack("<HH", blob[4:8])
    expected = 8 + 4 * width * height
    if len(blob) != expected:
        raise FormatError(f"{path}: truncated DMAP ({len(blob)} bytes, expected {expected})")
    values = np.frombuffer(blob[8:], dtype="<f4").reshape(height, width).astype(np.float64)
    return DensityMap(values, sigma=sigma)
