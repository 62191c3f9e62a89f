"""Point-supervised cattle counting on overhead imagery, at desk scale.

The pipeline: slice scenes into tiles (or synthesize labeled tiles), train
either a blob-detection model (point-supervised segmentation loss) or a
density-regression model on a small fully convolutional network, then
evaluate counting, localization and presence/absence quality.
"""

from .blobs import BlobMap, blob_count, connected_components, points_per_blob, watershed_split
from .density import (
    DEFAULT_SIGMA,
    DensityMap,
    cell_bounds,
    cell_counts,
    count_from_density,
    density_peaks,
    grid_cell_sums,
    load_density,
    peak_threshold,
    points_cell_counts,
    render_density,
    save_density,
)
from .errors import CownterError, DataError, FormatError, NumericError
from .fcn import ArchConfig, ModelParams, backward, forward, init_params, load_params, save_params
from .losses import LcfcnLossBreakdown, density_loss, lcfcn_loss
from .manifest import DatasetManifest, ManifestTile, load_manifest, save_manifest
from .metrics import (
    CountPair,
    EvalReport,
    SeedEval,
    binned_report,
    gampe,
    mape,
    presence_fscore,
)
from .raster import Label, Point, Raster, TileRecord, load_png, save_png, validate_tile
from .synth import SceneConfig, generate_dataset, generate_tile
from .tiling import PadPolicy, TileGrid, assign_points, slice_scene
from .training import AdamState, EarlyStopper, TrainConfig, TrainResult, adam_step, evaluate, train

__version__ = "0.1.0"

__all__ = [
    "AdamState",
    "ArchConfig",
    "BlobMap",
    "CountPair",
    "CownterError",
    "DataError",
    "DatasetManifest",
    "DEFAULT_SIGMA",
    "DensityMap",
    "EarlyStopper",
    "EvalReport",
    "FormatError",
    "Label",
    "LcfcnLossBreakdown",
    "ManifestTile",
    "ModelParams",
    "NumericError",
    "PadPolicy",
    "Point",
    "Raster",
    "SceneConfig",
    "SeedEval",
    "TileGrid",
    "TileRecord",
    "TrainConfig",
    "TrainResult",
    "adam_step",
    "assign_points",
    "backward",
    "binned_report",
    "blob_count",
    "cell_bounds",
    "cell_counts",
    "connected_components",
    "count_from_density",
    "grid_cell_sums",
    "density_loss",
    "density_peaks",
    "evaluate",
    "forward",
    "gampe",
    "generate_dataset",
    "generate_tile",
    "init_params",
    "lcfcn_loss",
    "load_density",
    "load_manifest",
    "load_params",
    "load_png",
    "mape",
    "peak_threshold",
    "points_cell_counts",
    "points_per_blob",
    "presence_fscore",
    "render_density",
    "save_density",
    "save_manifest",
    "save_params",
    "save_png",
    "slice_scene",
    "train",
    "validate_tile",
    "watershed_split",
]
