"""Connected components, per-blob point accounting and watershed splitting.

These are the structural pieces behind the detection-based loss and the
blob-count readout: a blob is a 4-connected component of a thresholded
foreground-probability map, and crowded blobs are split along watershed
lines grown from their annotation points.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import DataError
from .raster import Point

FOUR_CONNECTED = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=np.int32)


@dataclass(frozen=True)
class BlobMap:
    """Integer labeling of 4-connected foreground components.

    Label 0 is background; blob ids run 1..count in raster-scan order of
    each blob's first pixel.
    """

    labels: np.ndarray  # (H, W) int32
    count: int

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]


def connected_components(mask: np.ndarray) -> BlobMap:
    """Label 4-connected components of a boolean mask.

    Ids are assigned in raster-scan order of each component's first
    encountered pixel, which makes the labeling deterministic and
    platform-independent.
    """
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim != 2:
        raise DataError(f"mask must be 2-D, got shape {mask.shape}")
    raw, n = ndimage.label(mask, structure=FOUR_CONNECTED)
    if n == 0:
        return BlobMap(raw.astype(np.int32), 0)
    # enforce raster-scan id order regardless of scipy internals
    flat = raw.ravel()
    vals, first = np.unique(flat, return_index=True)
    keep = vals > 0
    order = np.argsort(first[keep], kind="stable")
    lut = np.zeros(n + 1, dtype=np.int32)
    lut[vals[keep][order]] = np.arange(1, n + 1, dtype=np.int32)
    return BlobMap(lut[raw], int(n))


def points_per_blob(
    blob_map: BlobMap, points: list[Point] | tuple[Point, ...]
) -> tuple[dict[int, int], int]:
    """Attribute each point to the blob of its containing pixel.

    Returns ({blob_id: point count} over ids 1..count, background count).
    Totals always conserve the number of input points.
    """
    counts = np.zeros(blob_map.count + 1, dtype=np.int64)
    for p in points:
        col, row = p.pixel()
        if not (0 <= col < blob_map.width and 0 <= row < blob_map.height):
            raise DataError(f"point ({p.x}, {p.y}) outside blob map")
        counts[blob_map.labels[row, col]] += 1
    per_blob = {bid: int(counts[bid]) for bid in range(1, blob_map.count + 1)}
    return per_blob, int(counts[0])


def watershed_split(
    prob: np.ndarray, blob_mask: np.ndarray, seeds: list[Point] | tuple[Point, ...]
) -> np.ndarray:
    """Split one blob along watershed lines between its seed points.

    Region growing is restricted to the blob and seeded at the seed pixels;
    the flood processes pixels by descending probability (topography is the
    negated map), FIFO among equal probabilities, with seeds and neighbor
    pushes enqueued in raster order so ties resolve identically on every
    platform. A pixel whose 4-neighborhood already touches two different
    regions when it is reached becomes part of the returned watershed line
    and does not grow further.

    Returns a boolean mask of the boundary pixels. Removing them from the
    blob disconnects the seeds. The only case yielding an empty boundary is
    seed pixels in direct contact, where no separating pixel exists.

    Args:
        prob: (H, W) map in [0, 1].
        blob_mask: boolean mask of the blob's pixels.
        seeds: at least two points inside the blob.

    Raises:
        DataError: fewer than two distinct seed pixels, or a seed outside
            the blob.
    """
    prob = np.asarray(prob, dtype=np.float64)
    blob_mask = np.asarray(blob_mask, dtype=bool)
    if prob.shape != blob_mask.shape:
        raise DataError("prob and blob mask shapes differ")
    h, w = prob.shape

    seed_px: list[tuple[int, int]] = []
    seen = set()
    for p in seeds:
        col, row = p.pixel()
        if not (0 <= col < w and 0 <= row < h) or not blob_mask[row, col]:
            raise DataError(f"seed ({p.x}, {p.y}) outside the blob")
        if (row, col) not in seen:
            seen.add((row, col))
            seed_px.append((row, col))
    if len(seed_px) < 2:
        raise DataError(f"need >= 2 distinct seed pixels, got {len(seed_px)}")
    seed_px.sort()  # raster order fixes region id assignment

    labels = np.zeros((h, w), dtype=np.int32)
    boundary = np.zeros((h, w), dtype=bool)
    for i, (r, c) in enumerate(seed_px, start=1):
        labels[r, c] = i

    # heap entries: (-prob, insertion age, row, col, pusher's region id)
    heap: list[tuple[float, int, int, int, int]] = []
    age = 0
    offsets = ((-1, 0), (0, -1), (0, 1), (1, 0))  # raster order of neighbors

    def push_neighbors(r: int, c: int, region: int) -> None:
        nonlocal age
        for dr, dc in offsets:
            nr, nc = r + dr, c + dc
            if 0 <= nr < h and 0 <= nc < w and blob_mask[nr, nc] and labels[nr, nc] == 0:
                heapq.heappush(heap, (-prob[nr, nc], age, nr, nc, region))
                age += 1

    for i, (r, c) in enumerate(seed_px, start=1):
        push_neighbors(r, c, i)

    while heap:
        _, _, r, c, region = heapq.heappop(heap)
        if labels[r, c] != 0 or boundary[r, c]:
            continue
        distinct = 0
        last = 0
        for dr, dc in offsets:
            nr, nc = r + dr, c + dc
            if 0 <= nr < h and 0 <= nc < w:
                lab = labels[nr, nc]
                if lab != 0 and lab != last:
                    if last != 0:
                        distinct = 2
                        break
                    last = lab
                    distinct = 1
        if distinct >= 2:
            boundary[r, c] = True
            continue
        labels[r, c] = region
        push_neighbors(r, c, region)

    # pockets sealed off by the line are unreachable from any seed; fold
    # them into the boundary so every remaining region holds one seed
    unreached = blob_mask & (labels == 0) & ~boundary
    if unreached.any():
        boundary |= unreached
    return boundary


def blob_count(prob: np.ndarray, threshold: float = 0.5) -> tuple[int, list[Point]]:
    """Count blobs of ``prob >= threshold`` and locate their centroids.

    Centroids are the mean pixel coordinate per blob, in blob id order;
    they serve as the prediction points for grid-based evaluation.
    """
    prob = np.asarray(prob, dtype=np.float64)
    blob_map = connected_components(prob >= threshold)
    centroids: list[Point] = []
    if blob_map.count > 0:
        rows, cols = np.nonzero(blob_map.labels)
        ids = blob_map.labels[rows, cols]
        sums_r = np.bincount(ids, weights=rows, minlength=blob_map.count + 1)
        sums_c = np.bincount(ids, weights=cols, minlength=blob_map.count + 1)
        sizes = np.bincount(ids, minlength=blob_map.count + 1)
        for bid in range(1, blob_map.count + 1):
            centroids.append(Point(sums_c[bid] / sizes[bid], sums_r[bid] / sizes[bid]))
    return blob_map.count, centroids
