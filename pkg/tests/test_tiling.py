"""Scene slicing, point distribution, conservation and round trips."""

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from cownter.errors import DataError
from cownter.raster import Point, Raster
from cownter.tiling import PadPolicy, TileGrid, assign_points, reassemble, slice_scene


def _scene(width: int, height: int, seed: int = 0) -> Raster:
    rng = np.random.default_rng(seed)
    return Raster(rng.uniform(0.0, 1.0, (height, width, 1)))


class TestSliceScene:
    def test_exact_tiling_emits_four_tiles_in_row_major_order(self):
        tiles = slice_scene(_scene(1000, 1000), TileGrid(500))
        assert [(t.origin_x, t.origin_y) for t in tiles] == [
            (0, 0), (500, 0), (0, 500), (500, 500),
        ]
        assert all(t.image.width == t.image.height == 500 for t in tiles)
        assert not any(t.padded for t in tiles)

    def test_drop_partial_drops_the_remainder(self):
        tiles = slice_scene(_scene(1200, 500), TileGrid(500))
        assert len(tiles) == 2

    def test_reflect_pad_emits_padded_border_tile(self):
        tiles = slice_scene(_scene(750, 500), TileGrid(500, pad_policy=PadPolicy.REFLECT_PAD))
        assert len(tiles) == 2
        assert not tiles[0].padded and tiles[1].padded
        assert tiles[1].image.width == 500
        scene = _scene(750, 500)
        # the 250 real columns are preserved verbatim
        assert np.array_equal(
            tiles[1].image.data[:, :250, :], scene.data[:, 500:, :]
        )

    def test_grid_validation(self):
        with pytest.raises(DataError):
            TileGrid(tile_size=16)
        with pytest.raises(DataError):
            TileGrid(tile_size=64, stride=0)

    def test_empty_scene_rejected(self):
        with pytest.raises(DataError):
            slice_scene(Raster(np.zeros((0, 5, 1))), TileGrid(64))


class TestAssignPoints:
    def test_half_open_interval_keeps_point_in_left_tile(self):
        tiles = slice_scene(_scene(1000, 1000), TileGrid(500))
        assigned, orphans = assign_points([Point(499.5, 0.0)], tiles, TileGrid(500))
        assert not orphans
        home = [i for i, pts in assigned.items() if pts]
        assert (tiles[home[0]].origin_x, tiles[home[0]].origin_y) == (0, 0)

    def test_boundary_point_moves_to_next_tile(self):
        tiles = slice_scene(_scene(1000, 1000), TileGrid(500))
        assigned, orphans = assign_points([Point(500.0, 0.0)], tiles, TileGrid(500))
        assert not orphans
        home = [i for i, pts in assigned.items() if pts]
        assert (tiles[home[0]].origin_x, tiles[home[0]].origin_y) == (500, 0)

    def test_local_coordinates_are_tile_relative(self):
        tiles = slice_scene(_scene(1000, 1000), TileGrid(500))
        assigned, _ = assign_points([Point(700.25, 510.5)], tiles, TileGrid(500))
        pts = [p for lst in assigned.values() for p in lst]
        assert pts == [Point(200.25, 10.5)]

    def test_dropped_region_points_become_orphans(self):
        grid = TileGrid(500)
        tiles = slice_scene(_scene(1200, 500), grid)
        assigned, orphans = assign_points([Point(1100.0, 10.0)], tiles, grid)
        assert orphans == [Point(1100.0, 10.0)]
        assert not any(assigned.values())

    @given(st.integers(0, 10_000))
    @settings(max_examples=30, deadline=None)
    def test_conservation_every_point_assigned_or_orphaned(self, seed):
        rng = np.random.default_rng(seed)
        grid = TileGrid(tile_size=64)
        scene = _scene(150, 130, seed=1)
        tiles = slice_scene(scene, grid)
        points = [
            Point(float(x), float(y))
            for x, y in zip(rng.uniform(0, 150, 10), rng.uniform(0, 130, 10))
        ]
        assigned, orphans = assign_points(points, tiles, grid)
        assert sum(len(v) for v in assigned.values()) + len(orphans) == 10
        # brute-force membership check per point
        for p in points:
            inside = any(
                t.origin_x <= p.x < t.origin_x + 64 and t.origin_y <= p.y < t.origin_y + 64
                for t in tiles
            )
            assert inside == (p not in orphans)


class TestReassemble:
    def test_round_trip_covers_scene_exactly_with_reflect_pad(self):
        scene = _scene(300, 260, seed=5)
        grid = TileGrid(tile_size=128, pad_policy=PadPolicy.REFLECT_PAD)
        tiles = slice_scene(scene, grid)
        back = reassemble(tiles, scene.width, scene.height, scene.channels)
        assert np.array_equal(back, scene.data)

    def test_round_trip_drop_partial_matches_on_covered_region(self):
        scene = _scene(300, 260, seed=6)
        grid = TileGrid(tile_size=128)
        tiles = slice_scene(scene, grid)
        back = reassemble(tiles, scene.width, scene.height, scene.channels)
        assert np.array_equal(back[:128, :256, :], scene.data[:128, :256, :])
        assert np.all(back[256:, :, :] == 0)
