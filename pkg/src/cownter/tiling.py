"""Slice large scene rasters into fixed-size tiles and route annotations.

Tiles are emitted in (row, col) order of their origin, so output ordering is
deterministic regardless of how the work is parallelized. Point assignment
uses half-open pixel ranges [origin, origin + size) per axis: every scene
point lands in exactly one tile, or in the orphan list when it falls in a
region dropped by the partial-tile policy.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .raster import DEFAULT_TILE_SIZE, Point, Raster


class PadPolicy(enum.Enum):
    DROP_PARTIAL = "drop_partial"
    REFLECT_PAD = "reflect_pad"


@dataclass(frozen=True)
class TileGrid:
    """Tiling configuration: square tile size, stride and border policy."""

    tile_size: int = DEFAULT_TILE_SIZE
    stride: int | None = None  # None means stride = tile_size
    pad_policy: PadPolicy = PadPolicy.DROP_PARTIAL

    def __post_init__(self) -> None:
        if self.tile_size < 32:
            raise DataError(f"tile_size must be >= 32, got {self.tile_size}")
        if self.stride is not None and self.stride < 1:
            raise DataError(f"stride must be >= 1, got {self.stride}")

    @property
    def effective_stride(self) -> int:
        return self.tile_size if self.stride is None else self.stride


@dataclass(frozen=True)
class TileSlice:
    """One tile cut from a scene plus where it came from."""

    image: Raster
    origin_x: int
    origin_y: int
    padded: bool = False


def _reflect_pad(data: np.ndarray, pad_y: int, pad_x: int) -> np.ndarray:
    return np.pad(data, ((0, pad_y), (0, pad_x), (0, 0)), mode="reflect")


def slice_scene(scene: Raster, grid: TileGrid) -> list[TileSlice]:
    """Cut a scene into tiles of ``grid.tile_size`` square.

    With DROP_PARTIAL only fully covered tiles are emitted; with REFLECT_PAD
    border tiles are mirror-padded out to full size. Origins are recorded so
    predictions can be mapped back to scene coordinates.
    """
    if scene.width < 1 or scene.height < 1:
        raise DataError("scene must be at least 1x1")
    size = grid.tile_size
    stride = grid.effective_stride
    tiles: list[TileSlice] = []
    for oy in range(0, scene.height, stride):
        for ox in range(0, scene.width, stride):
            full = oy + size <= scene.height and ox + size <= scene.width
            if not full and grid.pad_policy is PadPolicy.DROP_PARTIAL:
                continue
            chunk = scene.data[oy : oy + size, ox : ox + size, :]
            if not full:
                chunk = _reflect_pad(chunk, size - chunk.shape[0], size - chunk.shape[1])
            tiles.append(
                TileSlice(Raster(chunk, gsd=scene.gsd), origin_x=ox, origin_y=oy, padded=not full)
            )
    return tiles


def assign_points(
    points: list[Point], tiles: list[TileSlice], grid: TileGrid
) -> tuple[dict[int, list[Point]], list[Point]]:
    """Distribute scene-coordinate points onto tiles.

    Each point goes to the tile whose half-open range
    [origin, origin + tile_size) contains it, translated into tile-local
    coordinates. Points covered by no emitted tile are returned as orphans
    rather than silently dropped. With overlapping tiles (stride < size) a
    point is assigned to the first containing tile in emission order.

    Returns:
        (per-tile lists keyed by index into ``tiles``, orphan list).
    """
    size = grid.tile_size
    assigned: dict[int, list[Point]] = {i: [] for i in range(len(tiles))}
    orphans: list[Point] = []
    for p in points:
        home = None
        for i, t in enumerate(tiles):
            if t.origin_x <= p.x < t.origin_x + size and t.origin_y <= p.y < t.origin_y + size:
                home = i
                break
        if home is None:
            orphans.append(p)
        else:
            assigned[home].append(Point(p.x - tiles[home].origin_x, p.y - tiles[home].origin_y))
    return assigned, orphans


def reassemble(tiles: list[TileSlice], width: int, height: int, channels: int) -> np.ndarray:
    """Paste tiles back onto a scene-sized canvas (reflect padding trimmed).

    Pixels covered by no tile are left at zero. Used to check the
    slice/reassemble round-trip.
    """
    canvas = np.zeros((height, width, channels), dtype=np.float64)
    for t in tiles:
        h = min(t.image.height, height - t.origin_y)
        w = min(t.image.width, width - t.origin_x)
        canvas[t.origin_y : t.origin_y + h, t.origin_x : t.origin_x + w, :] = t.image.data[:h, :w, :]
    return canvas
