"""Counting metrics: MAPE, grid-partitioned MAPE (GAMPE), presence/absence
precision/recall/F-score, and the density-binned report aggregated over
multiple training seeds.

MAPE floors the denominator at one (max(y, 1)) so images with zero
ground-truth count are well defined; GAMPE applies the same error per grid
cell and sums over the cells of the image, penalizing predictions that get
the total right but the placement wrong. With a 1x1 grid GAMPE reduces to
MAPE exactly.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import DataError

# ground-truth count bins: {0}, [1,10], [11,100], [101, inf)
DEFAULT_BINS: tuple[tuple[int, int | None], ...] = (
    (0, 0),
    (1, 10),
    (11, 100),
    (101, None),
)

DEFAULT_GRID_N = 4
DEFAULT_PRESENCE_THRESHOLD = 0.5


@dataclass(frozen=True)
class CountPair:
    """Ground-truth count and prediction for one image."""

    y: int
    y_hat: float

    def __post_init__(self) -> None:
        if self.y < 0:
            raise DataError(f"ground-truth count must be >= 0, got {self.y}")
        if not np.isfinite(self.y_hat) or self.y_hat < 0:
            raise DataError(f"predicted count must be finite and >= 0, got {self.y_hat}")


def mape(pairs: list[CountPair] | tuple[CountPair, ...]) -> float:
    """Mean absolute percentage error with the denominator floored at 1."""
    if len(pairs) == 0:
        raise DataError("mape needs at least one pair")
    total = 0.0
    for p in pairs:
        total += abs(p.y - p.y_hat) / max(p.y, 1)
    return total / len(pairs)


def gampe(pred_cells: np.ndarray, gt_cells: np.ndarray) -> float:
    """Grid-average MAPE over per-image cell-count matrices.

    Args:
        pred_cells: (N, g, g) predicted counts per cell per image.
        gt_cells: (N, g, g) ground-truth counts per cell per image.

    Per image the absolute percentage errors of the cells are summed
    (denominator floored at 1 per cell); the result is the mean over images.
    """
    pred_cells = np.asarray(pred_cells, dtype=np.float64)
    gt_cells = np.asarray(gt_cells, dtype=np.float64)
    if pred_cells.shape != gt_cells.shape:
        raise DataError(
            f"cell shape mismatch: pred {pred_cells.shape} vs gt {gt_cells.shape}"
        )
    if pred_cells.ndim != 3 or pred_cells.shape[0] == 0:
        raise DataError("expected a non-empty (N, g, g) stack of cell matrices")
    denom = np.maximum(gt_cells, 1.0)
    per_image = (np.abs(gt_cells - pred_cells) / denom).sum(axis=(1, 2))
    return float(per_image.mean())


@dataclass(frozen=True)
class PresenceScores:
    """Binary cattle/no-cattle classification scores.

    ``degenerate`` flags the convention case where neither predictions nor
    ground truth contain a positive, making F undefined; it is reported as
    zero rather than raising.
    """

    precision: float
    recall: float
    fscore: float
    degenerate: bool = False


def presence_fscore(
    pairs: list[CountPair] | tuple[CountPair, ...],
    decision_threshold: float = DEFAULT_PRESENCE_THRESHOLD,
) -> PresenceScores:
    """Precision/recall/F for the presence decision y_hat >= threshold.

    Ground truth is positive when y >= 1. F = 2PR/(P+R), defined as 0 when
    P + R = 0.
    """
    if len(pairs) == 0:
        raise DataError("presence_fscore needs at least one pair")
    tp = fp = fn = 0
    for p in pairs:
        pred_pos = p.y_hat >= decision_threshold
        gt_pos = p.y >= 1
        if pred_pos and gt_pos:
            tp += 1
        elif pred_pos and not gt_pos:
            fp += 1
        elif not pred_pos and gt_pos:
            fn += 1
    degenerate = (tp + fp + fn) == 0
    precision = tp / (tp + fp) if (tp + fp) > 0 else 0.0
    recall = tp / (tp + fn) if (tp + fn) > 0 else 0.0
    f = 2 * precision * recall / (precision + recall) if (precision + recall) > 0 else 0.0
    return PresenceScores(precision, recall, f, degenerate)


def bin_label(bin_range: tuple[int, int | None]) -> str:
    lo, hi = bin_range
    if hi is None:
        return f"{lo}+"
    if lo == hi:
        return str(lo)
    return f"{lo}-{hi}"


def bin_index(y: int, bins: tuple[tuple[int, int | None], ...] = DEFAULT_BINS) -> int:
    """Index of the bin containing ground-truth count y."""
    for i, (lo, hi) in enumerate(bins):
        if y >= lo and (hi is None or y <= hi):
            return i
    raise DataError(f"count {y} falls in no bin: {bins}")


@dataclass(frozen=True)
class SeedEval:
    """Per-image evaluation results of one trained model (one seed)."""

    pairs: tuple[CountPair, ...]
    pred_cells: np.ndarray  # (N, g, g)
    gt_cells: np.ndarray  # (N, g, g)

    def __post_init__(self) -> None:
        pred = np.asarray(self.pred_cells, dtype=np.float64)
        gt = np.asarray(self.gt_cells, dtype=np.float64)
        if pred.shape != gt.shape or pred.ndim != 3:
            raise DataError("pred/gt cell stacks must share an (N, g, g) shape")
        if pred.shape[0] != len(self.pairs):
            raise DataError("cell stack length does not match pair count")
        object.__setattr__(self, "pairs", tuple(self.pairs))
        object.__setattr__(self, "pred_cells", pred)
        object.__setattr__(self, "gt_cells", gt)


@dataclass(frozen=True)
class EvalReport:
    """Binned counting/localization report with across-seed spread."""

    bins: tuple[tuple[int, int | None], ...]
    grid_n: int
    n_seeds: int
    n_per_bin: tuple[int, ...]
    mape_mean: tuple[float | None, ...]
    mape_std: tuple[float | None, ...]
    gampe_mean: tuple[float | None, ...]
    gampe_std: tuple[float | None, ...]
    precision_mean: float
    precision_std: float
    recall_mean: float
    recall_std: float
    fscore_mean: float
    fscore_std: float
    degenerate_fscore: bool

    def to_document(self) -> str:
        """Stable-key-order JSON document suitable for diffing."""
        doc = {
            "bins": [bin_label(b) for b in self.bins],
            "grid_n": self.grid_n,
            "n_seeds": self.n_seeds,
            "per_bin": [
                {
                    "bin": bin_label(b),
                    "n": self.n_per_bin[i],
                    "mape_mean": self.mape_mean[i],
                    "mape_std": self.mape_std[i],
                    "gampe_mean": self.gampe_mean[i],
                    "gampe_std": self.gampe_std[i],
                }
                for i, b in enumerate(self.bins)
            ],
            "presence": {
                "precision_mean": self.precision_mean,
                "precision_std": self.precision_std,
                "recall_mean": self.recall_mean,
                "recall_std": self.recall_std,
                "fscore_mean": self.fscore_mean,
                "fscore_std": self.fscore_std,
                "degenerate": self.degenerate_fscore,
            },
        }
        return json.dumps(doc, indent=2)


def _mean_std(values: list[float]) -> tuple[float | None, float | None]:
    if not values:
        return None, None
    arr = np.asarray(values, dtype=np.float64)
    return float(arr.mean()), float(arr.std())


def binned_report(
    runs: list[SeedEval],
    bins: tuple[tuple[int, int | None], ...] = DEFAULT_BINS,
    decision_threshold: float = DEFAULT_PRESENCE_THRESHOLD,
) -> EvalReport:
    """Aggregate per-seed evaluations into the binned report.

    All runs must score the same evaluation set (identical ground-truth
    counts in identical order); bins partition images by ground-truth count.
    """
    if not runs:
        raise DataError("binned_report needs at least one seed run")
    y0 = [p.y for p in runs[0].pairs]
    for run in runs[1:]:
        if [p.y for p in run.pairs] != y0:
            raise DataError("seed runs disagree on the ground-truth counts")
    grid_n = runs[0].gt_cells.shape[1]

    membership = [bin_index(y, bins) for y in y0]
    n_per_bin = tuple(sum(1 for m in membership if m == i) for i in range(len(bins)))

    mape_means: list[float | None] = []
    mape_stds: list[float | None] = []
    gampe_means: list[float | None] = []
    gampe_stds: list[float | None] = []
    for i in range(len(bins)):
        idx = [j for j, m in enumerate(membership) if m == i]
        if not idx:
            mape_means.append(None)
            mape_stds.append(None)
            gampe_means.append(None)
            gampe_stds.append(None)
            continue
        mape_vals = [mape([run.pairs[j] for j in idx]) for run in runs]
        gampe_vals = [gampe(run.pred_cells[idx], run.gt_cells[idx]) for run in runs]
        mean, std = _mean_std(mape_vals)
        mape_means.append(mean)
        mape_stds.append(std)
        mean, std = _mean_std(gampe_vals)
        gampe_means.append(mean)
        gampe_stds.append(std)

    scores = [presence_fscore(list(run.pairs), decision_threshold) for run in runs]
    precision = np.array([s.precision for s in scores])
    recall = np.array([s.recall for s in scores])
    fscore = np.array([s.fscore for s in scores])

    return EvalReport(
        bins=tuple(bins),
        grid_n=grid_n,
        n_seeds=len(runs),
        n_per_bin=n_per_bin,
        mape_mean=tuple(mape_means),
        mape_std=tuple(mape_stds),
        gampe_mean=tuple(gampe_means),
        gampe_std=tuple(gampe_stds),
        precision_mean=float(precision.mean()),
        precision_std=float(precision.std()),
        recall_mean=float(recall.mean()),
        recall_std=float(recall.std()),
        fscore_mean=float(fscore.mean()),
        fscore_std=float(fscore.std()),
        degenerate_fscore=any(s.degenerate for s in scores),
    )
