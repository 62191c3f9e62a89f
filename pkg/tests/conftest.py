"""Shared fixtures: small deterministic datasets on disk."""

from __future__ import annotations

import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from cownter.manifest import DatasetManifest, record_to_tile, save_manifest
from cownter.raster import save_png
from cownter.synth import SceneConfig, generate_dataset


def build_dataset(root: Path, cfg: SceneConfig, n_tiles: int) -> Path:
    """Render a synthetic dataset with manifest under ``root``."""
    (root / "images").mkdir(parents=True, exist_ok=True)
    tiles = []
    for record, split in generate_dataset(cfg, n_tiles):
        rel = f"images/{record.id}.png"
        save_png(record.image, root / rel)
        tiles.append(record_to_tile(record, rel, split))
    save_manifest(DatasetManifest(root, tiles))
    return root


@pytest.fixture(scope="session")
def tiny_dataset(tmp_path_factory) -> Path:
    """16 small tiles, no crowded bin, splits populated."""
    root = tmp_path_factory.mktemp("tinyds")
    cfg = SceneConfig(tile_size=64, seed=11, bin_weights=(0.45, 0.55, 0.0, 0.0))
    return build_dataset(root, cfg, 16)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Print one PASS/FAIL line per acceptance criterion that ran."""
    import acceptance_ledger

    if acceptance_ledger.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in acceptance_ledger.lines():
            terminalreporter.write_line(line)
