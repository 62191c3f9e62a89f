"""Density map rendering, integration, peak extraction, and serialization."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cownter import (
    DataError,
    DensityMap,
    FormatError,
    Point,
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


def random_points(rng, n, width, height):
    return [
        Point(float(x), float(y))
        for x, y in zip(
            rng.uniform(0, width, n), rng.uniform(0, height, n)
        )
    ]


class TestRenderDensity:
    def test_no_points_gives_zero_map(self):
        m = render_density([], 64, 64)
        assert m.values.shape == (64, 64)
        assert np.all(m.values == 0.0)
        assert count_from_density(m) == 0.0

    def test_center_point_total_is_one(self):
        m = render_density([Point(32.0, 32.0)], 64, 64, sigma=2.0)
        assert abs(count_from_density(m) - 1.0) <= 1e-9

    def test_corner_point_total_is_one(self):
        # The kernel is clipped at the border; renormalization keeps mass 1.
        m = render_density([Point(0.0, 0.0)], 64, 64, sigma=2.0)
        assert abs(count_from_density(m) - 1.0) <= 1e-9

    def test_three_points_total_three(self):
        pts = [Point(10.0, 10.0), Point(40.0, 20.0), Point(25.5, 50.25)]
        m = render_density(pts, 64, 64)
        assert abs(count_from_density(m) - 3.0) <= 1e-8

    def test_values_nonnegative_and_peak_near_point(self):
        m = render_density([Point(20.5, 30.5)], 64, 64, sigma=2.0)
        assert m.values.min() >= 0.0
        peak = np.unravel_index(np.argmax(m.values), m.values.shape)
        assert peak == (30, 20)

    def test_permutation_invariant_within_tolerance(self):
        rng = np.random.default_rng(7)
        pts = random_points(rng, 40, 96, 80)
        base = render_density(pts, 96, 80).values
        for shuffle_seed in (1, 2, 3):
            order = np.random.default_rng(shuffle_seed).permutation(len(pts))
            shuffled = render_density([pts[i] for i in order], 96, 80).values
            assert np.max(np.abs(shuffled - base)) <= 1e-12

    def test_rejects_bad_sigma(self):
        with pytest.raises(DataError, match="sigma"):
            render_density([], 8, 8, sigma=0.0)
        with pytest.raises(DataError, match="sigma"):
            render_density([], 8, 8, sigma=-1.5)

    def test_rejects_out_of_bounds_point(self):
        with pytest.raises(DataError, match="outside"):
            render_density([Point(64.0, 1.0)], 64, 64)
        with pytest.raises(DataError, match="outside"):
            render_density([Point(1.0, -0.1)], 64, 64)

    @settings(max_examples=60, deadline=None)
    @given(
        seed=st.integers(0, 10_000),
        n=st.integers(0, 80),
        sigma=st.floats(0.5, 6.0),
    )
    def test_conservation_property(self, seed, n, sigma):
        rng = np.random.default_rng(seed)
        pts = random_points(rng, n, 48, 48)
        # Force some exact-border placements, the worst case for clipping.
        if n >= 2:
            pts[0] = Point(0.0, 0.0)
            pts[1] = Point(47.999, 47.999)
        m = render_density(pts, 48, 48, sigma=sigma)
        assert abs(count_from_density(m) - n) <= 1e-9 * max(n, 1)


class TestDensityMapType:
    def test_rejects_negative_values(self):
        with pytest.raises(DataError, match="negative"):
            DensityMap(np.full((4, 4), -0.25))

    def test_rejects_non_finite(self):
        bad = np.zeros((4, 4))
        bad[1, 2] = np.nan
        with pytest.raises(DataError, match="finite"):
            DensityMap(bad)

    def test_rejects_wrong_rank(self):
        with pytest.raises(DataError, match="2-D"):
            DensityMap(np.zeros((4, 4, 2)))

    def test_scaling_doubles_count(self):
        m = render_density([Point(8.0, 8.0), Point(20.0, 20.0)], 32, 32)
        doubled = DensityMap(m.values * 2.0, sigma=m.sigma)
        assert count_from_density(doubled) == pytest.approx(
            2.0 * count_from_density(m), rel=0, abs=1e-12
        )


class TestCellCounts:
    def test_grid_one_is_total(self):
        m = render_density([Point(3.0, 4.0), Point(10.0, 11.0)], 16, 16)
        cells = cell_counts(m, 1)
        assert cells.shape == (1, 1)
        assert cells[0, 0] == count_from_density(m)

    def test_uniform_map_quarters(self):
        total = 8.0
        m = DensityMap(np.full((10, 10), total / 100.0))
        cells = cell_counts(m, 2)
        assert cells.shape == (2, 2)
        assert np.all(np.abs(cells - total / 4.0) <= 1e-9)

    def test_cells_partition_the_image(self):
        # Every pixel lands in exactly one cell: summing indicator blocks
        # over the same bounds covers each pixel once.
        h, w, grid_n = 13, 17, 4
        cover = np.zeros((h, w), dtype=int)
        for i in range(grid_n):
            y0, y1 = cell_bounds(h, grid_n, i)
            for j in range(grid_n):
                x0, x1 = cell_bounds(w, grid_n, j)
                cover[y0:y1, x0:x1] += 1
        assert np.all(cover == 1)

    def test_cell_sum_matches_total(self):
        rng = np.random.default_rng(3)
        values = rng.uniform(0, 1, size=(37, 53))
        m = DensityMap(values)
        for grid_n in (1, 2, 3, 5, 7):
            cells = cell_counts(m, grid_n)
            total = count_from_density(m)
            assert abs(cells.sum() - total) <= 1e-12 * max(total, 1.0)

    def test_last_cell_absorbs_remainder(self):
        # 10 px over grid 3: cells cover [0,3), [3,6), [6,10).
        assert cell_bounds(10, 3, 0) == (0, 3)
        assert cell_bounds(10, 3, 1) == (3, 6)
        assert cell_bounds(10, 3, 2) == (6, 10)

    def test_rejects_bad_grid(self):
        m = DensityMap(np.zeros((8, 8)))
        with pytest.raises(DataError, match="grid_n"):
            cell_counts(m, 0)
        with pytest.raises(DataError, match="grid_n"):
            cell_counts(m, 9)

    def test_grid_cell_sums_matches_cell_counts(self):
        rng = np.random.default_rng(5)
        values = rng.uniform(0, 2, size=(24, 24))
        assert np.array_equal(
            grid_cell_sums(values, 4), cell_counts(DensityMap(values), 4)
        )


class TestPointsCellCounts:
    def test_counts_points_per_cell(self):
        pts = [Point(1.0, 1.0), Point(9.0, 1.0), Point(9.5, 9.5), Point(9.9, 9.9)]
        cells = points_cell_counts(pts, 10, 10, 2)
        assert cells.tolist() == [[1.0, 1.0], [0.0, 2.0]]

    def test_total_matches_point_count(self):
        rng = np.random.default_rng(11)
        pts = random_points(rng, 57, 40, 30)
        cells = points_cell_counts(pts, 40, 30, 4)
        assert cells.sum() == 57.0

    def test_agrees_with_density_cells_for_interior_points(self):
        # Points far from the cell boundaries put nearly all kernel mass in
        # their own cell, so the two cell-count routes agree closely.
        pts = [Point(16.0, 16.0), Point(48.0, 48.0), Point(16.0, 48.0)]
        m = render_density(pts, 64, 64, sigma=1.0)
        dens_cells = cell_counts(m, 2)
        point_cells = points_cell_counts(pts, 64, 64, 2)
        assert np.max(np.abs(dens_cells - point_cells)) < 1e-6

    def test_rejects_bad_grid(self):
        with pytest.raises(DataError, match="grid_n"):
            points_cell_counts([], 8, 8, 0)


class TestDensityPeaks:
    def test_recovers_isolated_points(self):
        pts = [Point(10.5, 10.5), Point(40.5, 12.5), Point(25.5, 50.5)]
        m = render_density(pts, 64, 64, sigma=2.0)
        found = density_peaks(m.values, sigma=2.0)
        assert len(found) == len(pts)
        got = sorted((p.x, p.y) for p in found)
        want = sorted((p.x, p.y) for p in pts)
        for (gx, gy), (wx, wy) in zip(got, want):
            assert abs(gx - wx) <= 0.5 and abs(gy - wy) <= 0.5

    def test_zero_map_has_no_peaks(self):
        assert density_peaks(np.zeros((16, 16))) == []

    def test_threshold_suppresses_faint_bumps(self):
        values = np.zeros((16, 16))
        values[8, 8] = peak_threshold(2.0) * 0.5
        assert density_peaks(values, sigma=2.0) == []
        values[8, 8] = peak_threshold(2.0) * 2.0
        assert len(density_peaks(values, sigma=2.0)) == 1

    def test_explicit_min_value_overrides_default(self):
        values = np.zeros((8, 8))
        values[4, 4] = 0.01
        assert density_peaks(values, min_value=0.1) == []
        assert len(density_peaks(values, min_value=0.001)) == 1

    def test_rejects_non_2d(self):
        with pytest.raises(DataError, match="2-D"):
            density_peaks(np.zeros((4, 4, 1)))


class TestDensityIO:
    def test_round_trip(self, tmp_path):
        m = render_density([Point(5.25, 7.75), Point(12.0, 3.0)], 20, 18)
        path = tmp_path / "map.dmap"
        save_density(m, path)
        loaded = load_density(path)
        assert loaded.width == 20 and loaded.height == 18
        # Storage is 32-bit; the round trip matches to float32 precision.
        assert np.array_equal(
            loaded.values, m.values.astype("<f4").astype(np.float64)
        )

    def test_header_layout(self, tmp_path):
        m = DensityMap(np.zeros((2, 3)))
        path = tmp_path / "map.dmap"
        save_density(m, path)
        blob = path.read_bytes()
        assert blob[:4] == b"DMAP"
        assert blob[4:6] == (3).to_bytes(2, "little")
        assert blob[6:8] == (2).to_bytes(2, "little")
        assert len(blob) == 8 + 4 * 6

    def test_rejects_bad_magic(self, tmp_path):
        path = tmp_path / "bad.dmap"
        path.write_bytes(b"JUNK" + bytes(12))
        with pytest.raises(FormatError, match="not a DMAP"):
            load_density(path)

    def test_rejects_truncation(self, tmp_path):
        m = DensityMap(np.zeros((4, 4)))
        path = tmp_path / "map.dmap"
        save_density(m, path)
        path.write_bytes(path.read_bytes()[:-3])
        with pytest.raises(FormatError, match="truncated"):
            load_density(path)

    def test_rejects_short_file(self, tmp_path):
        path = tmp_path / "tiny.dmap"
        path.write_bytes(b"DM")
        with pytest.raises(FormatError, match="not a DMAP"):
            load_density(path)
