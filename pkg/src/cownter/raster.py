"""Core image and annotation types shared by every stage of the pipeline.

Pixel convention (used everywhere, including the annotation service and the
frontend): origin at the top-left, ``x`` is the column, ``y`` is the row, and
a point ``(x, y)`` falls inside pixel ``(floor(x), floor(y))``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DataError

DEFAULT_GSD = 0.4  # meters per pixel; quality floor used for collection
DEFAULT_TILE_SIZE = 500


@dataclass(frozen=True)
class Raster:
    """An in-memory image: (H, W, C) array of floats in [0, 1].

    ``channels`` is restricted to 1 (grayscale) or 3 (RGB); anything else
    (e.g. raw multi-band stacks) must be reduced before ingestion and is
    rejected here with a clear error.

    Attributes:
        data: Array of shape (height, width, channels), finite values in
            [0, 1]. Marked read-only after construction.
        gsd: Ground sample distance in meters per pixel (metadata only).
    """

    data: np.ndarray
    gsd: float = DEFAULT_GSD

    def __post_init__(self) -> None:
        arr = np.asarray(self.data)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3:
            raise DataError(f"raster data must be HxWxC, got shape {arr.shape}")
        if arr.shape[2] not in (1, 3):
            raise DataError(
                f"unsupported channel count {arr.shape[2]}: only 1 (grayscale) "
                "or 3 (RGB) are accepted; reduce multi-band input first"
            )
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise DataError(f"raster must be at least 1x1, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise DataError("raster contains non-finite values")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise DataError("raster values must lie in [0, 1] after ingestion")
        if self.gsd <= 0:
            raise DataError(f"gsd must be positive, got {self.gsd}")
        arr = np.ascontiguousarray(arr, dtype=np.float64)
        arr.flags.writeable = False
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


@dataclass(frozen=True, order=True)
class Point:
    """A point annotation in fractional pixel coordinates."""

    x: float
    y: float

    def pixel(self) -> tuple[int, int]:
        """The (col, row) of the pixel this point falls in."""
        return int(np.floor(self.x)), int(np.floor(self.y))


class Label(enum.Enum):
    """Tile-level presence label; the manifest spells these "cow"/"no cow"."""

    COW = "cow"
    NO_COW = "no cow"


@dataclass(frozen=True)
class TileRecord:
    """One dataset unit: a tile image, its point annotations and its label."""

    id: str
    image: Raster
    points: tuple[Point, ...] = field(default_factory=tuple)
    label: Label = Label.NO_COW

    def __post_init__(self) -> None:
        object.__setattr__(self, "points", tuple(self.points))


def validate_tile(tile: TileRecord, expected_size: int | None = None) -> list[str]:
    """Check every TileRecord invariant and report all violations.

    Never raises on malformed data: violations are returned as a list of
    human-readable strings, empty when the tile is consistent.

    Args:
        tile: The record to check.
        expected_size: Configured square tile size; when given, tiles of any
            other dimension are flagged. None skips the size check.
    """
    violations: list[str] = []
    w, h = tile.image.width, tile.image.height
    for p in tile.points:
        if not (0 <= p.x < w and 0 <= p.y < h):
            violations.append(
                f"point out of bounds: ({p.x}, {p.y}) outside {w}x{h}"
            )
    has_points = len(tile.points) > 0
    if tile.label is Label.COW and not has_points:
        violations.append("label/points mismatch: label 'cow' but no points")
    if tile.label is Label.NO_COW and has_points:
        violations.append(
            f"label/points mismatch: label 'no cow' but {len(tile.points)} points"
        )
    if expected_size is not None and (w, h) != (expected_size, expected_size):
        violations.append(
            f"wrong size: {w}x{h}, expected {expected_size}x{expected_size}"
        )
    return violations


def normalize_ingest(raw: np.ndarray, bit_depth: int, gsd: float = DEFAULT_GSD) -> Raster:
    """Scale an integer image onto the [0, 1] grid.

    Values are divided by ``2**bit_depth - 1`` so the integer range maps
    bijectively onto an evenly spaced [0, 1] grid (0 -> 0.0, max -> 1.0).

    Args:
        raw: Integer array, (H, W) or (H, W, C).
        bit_depth: 8 or 16.
        gsd: Ground sample distance to attach to the result.

    Raises:
        DataError: Unsupported bit depth, or values outside the stated range.
    """
    if bit_depth not in (8, 16):
        raise DataError(f"unsupported bit depth {bit_depth}: expected 8 or 16")
    arr = np.asarray(raw)
    if not np.issubdtype(arr.dtype, np.integer):
        raise DataError(f"normalize_ingest expects integer input, got {arr.dtype}")
    max_val = (1 << bit_depth) - 1
    if arr.min() < 0 or arr.max() > max_val:
        raise DataError(f"values outside [0, {max_val}] for {bit_depth}-bit input")
    return Raster(arr.astype(np.float64) / max_val, gsd=gsd)


def load_png(path: str | Path, gsd: float = DEFAULT_GSD) -> Raster:
    """Read an 8- or 16-bit PNG as a Raster (grayscale or RGB)."""
    with Image.open(path) as img:
        if img.mode in ("I", "I;16", "I;16B"):
            arr = np.asarray(img.convert("I"), dtype=np.int64)
            return normalize_ingest(arr, 16, gsd=gsd)
        if img.mode == "L":
            return normalize_ingest(np.asarray(img, dtype=np.int64), 8, gsd=gsd)
        rgb = img.convert("RGB")
        return normalize_ingest(np.asarray(rgb, dtype=np.int64), 8, gsd=gsd)


def save_png(raster: Raster, path: str | Path) -> None:
    """Write a Raster as an 8-bit PNG (values rounded to the uint8 grid)."""
    arr = np.clip(np.rint(raster.data * 255.0), 0, 255).astype(np.uint8)
    if raster.channels == 1:
        img = Image.fromarray(arr[:, :, 0], mode="L")
    else:
        img = Image.fromarray(arr, mode="RGB")
    img.save(path, format="PNG")
