"""Training objectives: the blob-detection point-supervision loss and the
density least-squares loss, both returning exact gradients with respect to
the model output map.

The detection loss treats blob membership and watershed boundaries as
constants of the current thresholding: the thresholding step is not
differentiable, so gradients flow only through the pixel probabilities
(standard straight-through treatment for detection losses).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .blobs import connected_components, watershed_split
from .density import DensityMap
from .errors import DataError
from .raster import Point

PROB_EPS = 1e-6  # clamp before logs: bounded loss on saturated outputs
BLOB_THRESHOLD = 0.5


@dataclass(frozen=True)
class LcfcnLossBreakdown:
    """The four detection-loss terms; total is their sum, all non-negative."""

    image_term: float
    point_term: float
    split_term: float
    fp_term: float

    @property
    def total(self) -> float:
        return self.image_term + self.point_term + self.split_term + self.fp_term


def lcfcn_loss(
    prob: np.ndarray, points: list[Point] | tuple[Point, ...]
) -> tuple[LcfcnLossBreakdown, np.ndarray]:
    """Point-supervision detection loss over a foreground-probability map.

    Terms:
      * image: the most confident pixel should be foreground when points
        exist, background otherwise.
      * point: every annotated pixel should be foreground.
      * split: blobs containing m >= 2 points pay m times the background
        log-loss on their internal watershed line, pushing the model to
        cut crowded blobs apart.
      * false positive: blobs containing no point pay the background
        log-loss over all their pixels.

    Returns (breakdown, d total / d prob). The gradient is the exact
    derivative of the clamped objective: zero where the input sits in the
    clamp region, analytic elsewhere.
    """
    prob = np.asarray(prob, dtype=np.float64)
    if prob.ndim != 2:
        raise DataError(f"probability map must be 2-D, got shape {prob.shape}")
    h, w = prob.shape
    for p in points:
        if not (0 <= p.x < w and 0 <= p.y < h):
            raise DataError(f"point ({p.x}, {p.y}) outside {w}x{h} map")

    clamped = np.clip(prob, PROB_EPS, 1.0 - PROB_EPS)
    grad = np.zeros_like(clamped)

    # image term on the most confident pixel (first argmax in raster order)
    flat_idx = int(np.argmax(clamped))
    r_max, c_max = divmod(flat_idx, w)
    p_max = clamped[r_max, c_max]
    if len(points) > 0:
        image_term = -np.log(p_max)
        grad[r_max, c_max] += -1.0 / p_max
    else:
        image_term = -np.log(1.0 - p_max)
        grad[r_max, c_max] += 1.0 / (1.0 - p_max)

    # point term
    point_term = 0.0
    for p in points:
        col, row = p.pixel()
        point_term += -np.log(clamped[row, col])
        grad[row, col] += -1.0 / clamped[row, col]

    blob_map = connected_components(prob >= BLOB_THRESHOLD)
    labels = blob_map.labels
    point_blob_ids = np.zeros(len(points), dtype=np.int64)
    for i, p in enumerate(points):
        col, row = p.pixel()
        point_blob_ids[i] = labels[row, col]
    blob_point_counts = np.bincount(point_blob_ids, minlength=blob_map.count + 1)

    neg_log_bg = -np.log(1.0 - clamped)
    d_neg_log_bg = 1.0 / (1.0 - clamped)

    # split term: crowded blobs pay on their watershed line, weighted by
    # how many instances are fused
    split_term = 0.0
    for bid in range(1, blob_map.count + 1):
        m = int(blob_point_counts[bid])
        if m < 2:
            continue
        seeds = [points[i] for i in np.nonzero(point_blob_ids == bid)[0]]
        if len({p.pixel() for p in seeds}) < 2:
            continue  # co-located points leave nothing to split
        boundary = watershed_split(prob, labels == bid, seeds)
        split_term += m * float(neg_log_bg[boundary].sum())
        grad[boundary] += m * d_neg_log_bg[boundary]

    # false-positive term: blobs with no point are wholly background
    fp_term = 0.0
    fp_ids = [bid for bid in range(1, blob_map.count + 1) if blob_point_counts[bid] == 0]
    if fp_ids:
        fp_mask = np.isin(labels, fp_ids)
        fp_term = float(neg_log_bg[fp_mask].sum())
        grad[fp_mask] += d_neg_log_bg[fp_mask]

    # clamp region contributes nothing to the derivative
    grad[(prob <= PROB_EPS) | (prob >= 1.0 - PROB_EPS)] = 0.0

    breakdown = LcfcnLossBreakdown(
        image_term=float(image_term),
        point_term=float(point_term),
        split_term=float(split_term),
        fp_term=float(fp_term),
    )
    return breakdown, grad


def density_loss(
    pred: DensityMap | np.ndarray, target: DensityMap | np.ndarray
) -> tuple[float, np.ndarray]:
    """Least-squares density objective: 0.5 * sum((pred - target)^2).

    The sum runs over pixels (not the mean), keeping gradient magnitude
    independent of how tiles are packed into batches; batch reduction is the
    trainer's job. Returns (loss, gradient = pred - target).
    """
    p = pred.values if isinstance(pred, DensityMap) else np.asarray(pred, dtype=np.float64)
    t = target.values if isinstance(target, DensityMap) else np.asarray(target, dtype=np.float64)
    if p.shape != t.shape:
        raise DataError(f"shape mismatch: pred {p.shape} vs target {t.shape}")
    residual = p - t
    return float(0.5 * np.sum(residual * residual)), residual
