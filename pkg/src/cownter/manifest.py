"""Dataset manifest: the single structured file that owns tile metadata,
point annotations and split assignment.

The manifest is a JSON document (version 1) next to an image directory:

    {"version": 1, "tiles": [{"id", "image", "width", "height",
     "points": [{"x", "y"}], "label": "cow"|"no cow",
     "split": "train"|"val"|"test"|null, "revision": int}]}

``revision`` is a per-tile optimistic-concurrency counter used by the
annotation service; it starts at 0 and bumps on every accepted write.
Saves are atomic (temp file + fsync + rename) so a crash mid-write leaves
the previous manifest intact.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field, replace
from pathlib import Path

from .errors import DataError
from .raster import Label, Point, Raster, TileRecord, load_png, validate_tile

MANIFEST_VERSION = 1
MANIFEST_NAME = "manifest.json"
SPLITS = ("train", "val", "test")


@dataclass(frozen=True)
class ManifestTile:
    """Metadata row for one tile; the image lives in a sibling PNG."""

    id: str
    image: str  # path relative to the manifest directory
    width: int
    height: int
    points: tuple[Point, ...] = ()
    label: Label = Label.NO_COW
    split: str | None = None
    revision: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "points", tuple(self.points))
        if self.split is not None and self.split not in SPLITS:
            raise DataError(f"tile {self.id}: unknown split {self.split!r}")

    @property
    def count(self) -> int:
        return len(self.points)

    def violations(self) -> list[str]:
        """Tile-level invariant check (bounds, label/points consistency)."""
        out = []
        for p in self.points:
            if not (0 <= p.x < self.width and 0 <= p.y < self.height):
                out.append(f"point out of bounds: ({p.x}, {p.y}) outside {self.width}x{self.height}")
        if self.label is Label.COW and not self.points:
            out.append("label/points mismatch: label 'cow' but no points")
        if self.label is Label.NO_COW and self.points:
            out.append(f"label/points mismatch: label 'no cow' but {len(self.points)} points")
        return out


@dataclass
class DatasetManifest:
    """In-memory manifest plus the directory it resolves image paths from."""

    root: Path
    tiles: list[ManifestTile] = field(default_factory=list)
    version: int = MANIFEST_VERSION

    def tile_by_id(self, tile_id: str) -> ManifestTile | None:
        for t in self.tiles:
            if t.id == tile_id:
                return t
        return None

    def replace_tile(self, updated: ManifestTile) -> None:
        for i, t in enumerate(self.tiles):
            if t.id == updated.id:
                self.tiles[i] = updated
                return
        raise DataError(f"unknown tile id {updated.id!r}")

    def split_tiles(self, split: str) -> list[ManifestTile]:
        return [t for t in self.tiles if t.split == split]

    def load_image(self, tile: ManifestTile) -> Raster:
        return load_png(self.root / tile.image)

    def load_record(self, tile: ManifestTile) -> TileRecord:
        return TileRecord(tile.id, self.load_image(tile), tile.points, tile.label)


def tile_to_dict(t: ManifestTile) -> dict:
    return {
        "id": t.id,
        "image": t.image,
        "width": t.width,
        "height": t.height,
        "points": [{"x": p.x, "y": p.y} for p in t.points],
        "label": t.label.value,
        "split": t.split,
        "revision": t.revision,
    }


def _tile_from_dict(d: dict) -> ManifestTile:
    try:
        label = Label(d["label"])
        points = tuple(Point(float(p["x"]), float(p["y"])) for p in d["points"])
        return ManifestTile(
            id=str(d["id"]),
            image=str(d["image"]),
            width=int(d["width"]),
            height=int(d["height"]),
            points=points,
            label=label,
            split=d.get("split"),
            revision=int(d.get("revision", 0)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed tile entry: {exc}") from exc


def save_manifest(m: DatasetManifest, path: str | Path | None = None) -> Path:
    """Write the manifest atomically; returns the path written.

    The document is serialized to a temp file in the same directory, fsynced,
    then renamed over the target, so readers never observe a partial file.
    """
    target = Path(path) if path is not None else m.root / MANIFEST_NAME
    doc = {"version": m.version, "tiles": [tile_to_dict(t) for t in m.tiles]}
    fd, tmp_name = tempfile.mkstemp(dir=target.parent, prefix=".manifest-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8") as f:
            json.dump(doc, f, indent=1)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmp_name, target)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
    return target


def load_manifest(path: str | Path, check_images: bool = True) -> DatasetManifest:
    """Read and validate a manifest.

    Raises DataError on version mismatch, duplicate ids, tile invariant
    violations, or (when check_images) missing image files.
    """
    path = Path(path)
    if path.is_dir():
        path = path / MANIFEST_NAME
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise DataError(f"manifest not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: invalid JSON: {exc}") from exc
    if doc.get("version") != MANIFEST_VERSION:
        raise DataError(f"{path}: unsupported manifest version {doc.get('version')!r}")
    tiles = [_tile_from_dict(d) for d in doc.get("tiles", [])]
    m = DatasetManifest(root=path.parent, tiles=tiles)

    ids = [t.id for t in tiles]
    problems: list[str] = []
    if len(set(ids)) != len(ids):
        dupes = sorted({i for i in ids if ids.count(i) > 1})
        problems.append(f"duplicate tile ids: {dupes}")
    for t in tiles:
        problems.extend(f"tile {t.id}: {v}" for v in t.violations())
        if check_images and not (m.root / t.image).is_file():
            problems.append(f"tile {t.id}: missing image {t.image}")
    if problems:
        raise DataError(f"{path}: " + "; ".join(problems))
    return m


def record_to_tile(
    record: TileRecord, image_rel: str, split: str | None = None, revision: int = 0
) -> ManifestTile:
    """Build a manifest row for an in-memory TileRecord."""
    bad = validate_tile(record)
    if bad:
        raise DataError(f"tile {record.id}: " + "; ".join(bad))
    return ManifestTile(
        id=record.id,
        image=image_rel,
        width=record.image.width,
        height=record.image.height,
        points=record.points,
        label=record.label,
        split=split,
        revision=revision,
    )


def updated_annotations(
    tile: ManifestTile, points: tuple[Point, ...], label: Label
) -> ManifestTile:
    """New tile row with replaced annotations and a bumped revision."""
    return replace(tile, points=points, label=label, revision=tile.revision + 1)
