"""Training loop: ADAM on the small fully convolutional net, early stopping.

Everything here is deterministic for a fixed config: weight init draws from
the run seed, epoch shuffles draw from (seed, epoch), and no wall-clock data
enters the log lines, so two identical runs produce byte-identical logs.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .density import DEFAULT_SIGMA, grid_cell_sums, points_cell_counts, render_density
from .errors import DataError, NumericError
from .fcn import ArchConfig, ModelParams, backward, forward, init_params
from .losses import BLOB_THRESHOLD, density_loss, lcfcn_loss
from .blobs import blob_count
from .manifest import DatasetManifest
from .metrics import DEFAULT_GRID_N, CountPair, SeedEval, mape
from .raster import Point

MODEL_TYPES = ("lcfcn", "density")
MONITORS = ("mape", "loss")
_HEAD_FOR_MODEL = {"lcfcn": "detection", "density": "density"}


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for one training run."""

    model: str = "lcfcn"
    epochs: int = 100
    batch_size: int = 8
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    patience: int = 10
    seed: int = 0
    sigma: float = DEFAULT_SIGMA
    monitor: str = "mape"  # early stopping watches count error, not raw loss

    def __post_init__(self) -> None:
        if self.model not in MODEL_TYPES:
            raise DataError(f"model must be one of {MODEL_TYPES}, got {self.model!r}")
        if self.monitor not in MONITORS:
            raise DataError(f"monitor must be one of {MONITORS}, got {self.monitor!r}")
        if self.epochs < 1 or self.batch_size < 1 or self.patience < 1:
            raise DataError("epochs, batch_size and patience must all be >= 1")
        if self.patience > self.epochs:
            raise DataError(
                f"patience {self.patience} exceeds the epoch limit {self.epochs}"
            )
        if self.lr <= 0 or self.sigma <= 0:
            raise DataError("lr and sigma must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1 and self.eps > 0):
            raise DataError("need 0 <= beta1, beta2 < 1 and eps > 0")

    def head(self) -> str:
        return _HEAD_FOR_MODEL[self.model]


# ---------------------------------------------------------------------------
# optimizer


@dataclass
class AdamState:
    """First/second moment accumulators plus the step counter."""

    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def zeros_like(cls, vector: np.ndarray) -> "AdamState":
        return cls(np.zeros_like(vector), np.zeros_like(vector))


def adam_step(
    theta: np.ndarray,
    grad: np.ndarray,
    state: AdamState,
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """One in-place ADAM update with bias correction.

    Raises:
        NumericError: If the gradient contains NaN or infinity.
    """
    if not np.all(np.isfinite(grad)):
        raise NumericError("non-finite gradient; aborting optimization")
    state.step += 1
    state.m = beta1 * state.m + (1.0 - beta1) * grad
    state.v = beta2 * state.v + (1.0 - beta2) * grad * grad
    m_hat = state.m / (1.0 - beta1**state.step)
    v_hat = state.v / (1.0 - beta2**state.step)
    theta -= lr * m_hat / (np.sqrt(v_hat) + eps)


class EarlyStopper:
    """Stop after `patience` consecutive epochs without improvement.

    Keeps a copy of the best-so-far parameters; improvement means a strictly
    lower monitored value.
    """

    def __init__(self, patience: int):
        if patience < 1:
            raise DataError(f"patience must be >= 1, got {patience}")
        self.patience = patience
        self.best_metric = np.inf
        self.best_epoch = 0
        self.best_params: ModelParams | None = None
        self.bad_epochs = 0

    def update(self, epoch: int, metric: float, params: ModelParams) -> bool:
        """Record an epoch result; returns True when it improved the best."""
        if metric < self.best_metric:
            self.best_metric = metric
            self.best_epoch = epoch
            self.best_params = params.copy()
            self.bad_epochs = 0
            return True
        self.bad_epochs += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.bad_epochs >= self.patience


# ---------------------------------------------------------------------------
# data plumbing


@dataclass
class SplitData:
    """One split loaded into memory, ready for batching."""

    ids: list[str]
    images: np.ndarray  # (N, H, W, C) float32 in [0, 1]
    points: list[tuple[Point, ...]]
    targets: np.ndarray | None = None  # (N, H, W) float32 density targets

    def __len__(self) -> int:
        return len(self.ids)


def load_split(
    manifest: DatasetManifest, split: str, model: str, sigma: float = DEFAULT_SIGMA
) -> SplitData:
    """Load every tile of a split; density models also get target maps."""
    tiles = manifest.split_tiles(split)
    if not tiles:
        raise DataError(f"manifest has no tiles in split {split!r}")
    images = []
    points = []
    ids = []
    shape = None
    for t in tiles:
        img = manifest.load_image(t).data.astype(np.float32)
        if shape is None:
            shape = img.shape
        elif img.shape != shape:
            raise DataError(
                f"mixed tile shapes in split {split!r}: {shape} vs {img.shape} ({t.id})"
            )
        images.append(img)
        points.append(t.points)
        ids.append(t.id)
    stack = np.stack(images)
    targets = None
    if model == "density":
        h, w = stack.shape[1:3]
        targets = np.stack(
            [render_density(list(p), w, h, sigma).values.astype(np.float32) for p in points]
        )
    return SplitData(ids, stack, points, targets)


def _pad_to_stride(batch: np.ndarray, stride: int = 8) -> tuple[np.ndarray, int, int]:
    """Reflect-pad (B, H, W, C) on the bottom/right up to a stride multiple."""
    h, w = batch.shape[1:3]
    ph = (-h) % stride
    pw = (-w) % stride
    if ph == 0 and pw == 0:
        return batch, h, w
    return np.pad(batch, ((0, 0), (0, ph), (0, pw), (0, 0)), mode="reflect"), h, w


def predict_maps(
    params: ModelParams, images: np.ndarray, batch_size: int = 8
) -> np.ndarray:
    """Inference only: (N, H, W, C) images to (N, H, W) output maps."""
    outs = []
    for start in range(0, len(images), batch_size):
        padded, h, w = _pad_to_stride(images[start : start + batch_size])
        out, _ = forward(params, padded)
        outs.append(out[:, :h, :w])
    return np.concatenate(outs)


# ---------------------------------------------------------------------------
# loss dispatch: both models share the batching/backward plumbing


def _batch_loss_and_grad(
    cfg: TrainConfig, data: SplitData, idx: np.ndarray, params: ModelParams
) -> tuple[float, np.ndarray]:
    """Mean per-image loss over a batch and the parameter gradient."""
    padded, h, w = _pad_to_stride(data.images[idx])
    out, cache = forward(params, padded)
    scale = 1.0 / len(idx)
    dout = np.zeros_like(out)
    total = 0.0
    for j, i in enumerate(idx):
        window = out[j, :h, :w]
        if cfg.model == "lcfcn":
            breakdown, g = lcfcn_loss(window, list(data.points[i]))
            total += breakdown.total
        else:
            loss, g = density_loss(window, data.targets[i])
            total += loss
        dout[j, :h, :w] = g * scale
    grad = backward(params, cache, dout)
    return total * scale, grad


def _split_loss(cfg: TrainConfig, data: SplitData, params: ModelParams) -> float:
    """Mean per-image loss over a whole split (no gradient)."""
    total = 0.0
    for start in range(0, len(data), cfg.batch_size):
        padded, h, w = _pad_to_stride(data.images[start : start + cfg.batch_size])
        out, _ = forward(params, padded)
        for j in range(out.shape[0]):
            window = out[j, :h, :w]
            i = start + j
            if cfg.model == "lcfcn":
                breakdown, _ = lcfcn_loss(window, list(data.points[i]))
                total += breakdown.total
            else:
                loss, _ = density_loss(window, data.targets[i])
                total += loss
    return total / len(data)


def predicted_count(model: str, out_map: np.ndarray, threshold: float = BLOB_THRESHOLD) -> float:
    """Count readout: thresholded blob count or the density integral."""
    if model == "lcfcn":
        count, _ = blob_count(out_map, threshold)
        return float(count)
    return float(out_map.sum())


def _val_metric(cfg: TrainConfig, data: SplitData, params: ModelParams) -> float:
    """The early-stopping signal: validation MAPE or validation loss."""
    if cfg.monitor == "loss":
        return _split_loss(cfg, data, params)
    maps = predict_maps(params, data.images, cfg.batch_size)
    pairs = [
        CountPair(len(data.points[i]), predicted_count(cfg.model, maps[i]))
        for i in range(len(data))
    ]
    return mape(pairs)


# ---------------------------------------------------------------------------
# the training loop


@dataclass(frozen=True)
class TrainResult:
    """Outcome of one run: best weights plus the full epoch history."""

    params: ModelParams
    best_epoch: int
    best_val_metric: float
    stopped_epoch: int
    history: tuple[tuple[int, float, float], ...]  # (epoch, train_loss, val_metric)
    log_lines: tuple[str, ...]


def train(
    manifest: DatasetManifest,
    cfg: TrainConfig,
    arch: ArchConfig | None = None,
    on_epoch: Callable[[str], None] | None = None,
) -> TrainResult:
    """Train one model on the manifest's train split, validating each epoch.

    The training log is one JSON record per epoch with keys epoch,
    train_loss, val_metric and best (whether this epoch improved the
    monitored metric).

    Args:
        manifest: Dataset with train and val splits populated.
        cfg: Run hyperparameters; cfg.model picks the head and the loss.
        arch: Optional architecture override; head is forced from cfg.model.
        on_epoch: Called with each finished epoch's log line.

    Returns:
        TrainResult carrying the parameters from the best epoch.
    """
    if arch is None:
        arch = ArchConfig(head=cfg.head())
    elif arch.head != cfg.head():
        arch = ArchConfig(arch.in_channels, arch.stage_channels, cfg.head())

    train_data = load_split(manifest, "train", cfg.model, cfg.sigma)
    val_data = load_split(manifest, "val", cfg.model, cfg.sigma)
    if train_data.images.shape[3] != arch.in_channels:
        arch = ArchConfig(train_data.images.shape[3], arch.stage_channels, arch.head)

    params = init_params(arch, cfg.seed)
    state = AdamState.zeros_like(params.vector)
    stopper = EarlyStopper(cfg.patience)

    history: list[tuple[int, float, float]] = []
    log_lines: list[str] = []
    stopped_epoch = cfg.epochs
    for epoch in range(1, cfg.epochs + 1):
        perm = np.random.default_rng([cfg.seed, epoch]).permutation(len(train_data))
        epoch_total = 0.0
        for start in range(0, len(perm), cfg.batch_size):
            idx = perm[start : start + cfg.batch_size]
            loss, grad = _batch_loss_and_grad(cfg, train_data, idx, params)
            if not np.isfinite(loss):
                raise NumericError(f"non-finite training loss at epoch {epoch}")
            epoch_total += loss * len(idx)
            adam_step(params.vector, grad, state, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
        train_loss = epoch_total / len(train_data)
        val_metric = _val_metric(cfg, val_data, params)
        if not np.isfinite(val_metric):
            raise NumericError(f"non-finite validation metric at epoch {epoch}")

        improved = stopper.update(epoch, val_metric, params)
        history.append((epoch, train_loss, val_metric))
        line = json.dumps(
            {
                "epoch": epoch,
                "train_loss": train_loss,
                "val_metric": val_metric,
                "best": improved,
            }
        )
        log_lines.append(line)
        if on_epoch is not None:
            on_epoch(line)
        if stopper.should_stop:
            stopped_epoch = epoch
            break

    best = stopper.best_params if stopper.best_params is not None else params
    return TrainResult(
        params=best,
        best_epoch=stopper.best_epoch,
        best_val_metric=float(stopper.best_metric),
        stopped_epoch=stopped_epoch,
        history=tuple(history),
        log_lines=tuple(log_lines),
    )


# ---------------------------------------------------------------------------
# evaluation


def evaluate(
    params: ModelParams,
    data: SplitData,
    model: str,
    grid_n: int = DEFAULT_GRID_N,
    batch_size: int = 8,
    threshold: float = BLOB_THRESHOLD,
) -> SeedEval:
    """Score one trained model on a split.

    Counts come from thresholded blobs (lcfcn) or the density integral
    (density); localization cells come from blob centroids or per-cell
    density mass against point-membership ground truth.
    """
    if model not in MODEL_TYPES:
        raise DataError(f"model must be one of {MODEL_TYPES}, got {model!r}")
    maps = predict_maps(params, data.images, batch_size)
    h, w = maps.shape[1:3]
    pairs = []
    pred_cells = []
    gt_cells = []
    for i in range(len(data)):
        gt_cells.append(points_cell_counts(list(data.points[i]), w, h, grid_n))
        if model == "lcfcn":
            count, centroids = blob_count(maps[i], threshold)
            pairs.append(CountPair(len(data.points[i]), float(count)))
            pred_cells.append(points_cell_counts(centroids, w, h, grid_n))
        else:
            count = float(maps[i].sum())
            pairs.append(CountPair(len(data.points[i]), count))
            pred_cells.append(grid_cell_sums(maps[i], grid_n))
    return SeedEval(tuple(pairs), np.stack(pred_cells), np.stack(gt_cells))
