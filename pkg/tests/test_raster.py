import datetime

import numpy as np
import pytest

from mdmap import (
    AlignmentError,
    ArgumentError,
    Band,
    EmptyRasterError,
    GeoGrid,
    SceneRaster,
    align_stack,
    stitch,
    tile,
)

from support import make_grid, make_scene


class TestGeoGrid:
    def test_shape_and_centers(self):
        g = make_grid(width=4, height=3)
        assert g.shape == (3, 4)
        x, y = g.pixel_center(0, 0)
        assert x == pytest.approx(24.0005)
        assert y == pytest.approx(35.0095)

    def test_locate_inverts_pixel_center(self):
        g = make_grid(width=7, height=5)
        for row in range(5):
            for col in range(7):
                assert g.locate(*g.pixel_center(row, col)) == (row, col)

    def test_bounds_north_up(self):
        g = make_grid(width=10, height=4, pixel=0.01)
        xmin, ymin, xmax, ymax = g.bounds()
        assert (xmin, xmax) == (24.0, 24.1)
        assert ymax == pytest.approx(35.01)
        assert ymin == pytest.approx(34.97)

    def test_rejects_bad_sizes(self):
        with pytest.raises(ArgumentError):
            GeoGrid(width=0, height=3, origin_x=0, origin_y=0,
                    pixel_size_x=1.0, pixel_size_y=-1.0)
        with pytest.raises(ArgumentError):
            GeoGrid(width=3, height=3, origin_x=0, origin_y=0,
                    pixel_size_x=-1.0, pixel_size_y=-1.0)
        with pytest.raises(ArgumentError):
            GeoGrid(width=3, height=3, origin_x=0, origin_y=0,
                    pixel_size_x=1.0, pixel_size_y=0.0)


class TestSceneRaster:
    def test_empty_bands_rejected(self, small_grid):
        with pytest.raises(EmptyRasterError):
            SceneRaster(small_grid, [], datetime.date(2021, 6, 1))

    def test_duplicate_band_names_rejected(self, small_grid):
        plane = np.zeros(small_grid.shape, np.float32)
        with pytest.raises(ArgumentError):
            SceneRaster(small_grid, [Band("a", plane), Band("a", plane)],
                        datetime.date(2021, 6, 1))

    def test_shape_mismatch_rejected(self, small_grid):
        with pytest.raises(ArgumentError):
            SceneRaster(small_grid, [Band("a", np.zeros((2, 2), np.float32))],
                        datetime.date(2021, 6, 1))

    def test_infinite_values_rejected(self, small_grid):
        plane = np.zeros(small_grid.shape, np.float32)
        plane[0, 0] = np.inf
        with pytest.raises(ArgumentError):
            SceneRaster(small_grid, [Band("a", plane)], datetime.date(2021, 6, 1))

    def test_nan_allowed_as_default_nodata(self, small_grid):
        plane = np.zeros(small_grid.shape, np.float32)
        plane[1, 2] = np.nan
        raster = SceneRaster(small_grid, [Band("a", plane)], datetime.date(2021, 6, 1))
        assert not raster.valid_mask()[1, 2]
        assert raster.valid_mask()[0, 0]

    def test_sentinel_nodata(self, small_grid):
        plane = np.zeros(small_grid.shape, np.float32)
        plane[1, 2] = -9999.0
        raster = SceneRaster(small_grid, [Band("a", plane)],
                             datetime.date(2021, 6, 1), nodata=-9999.0)
        assert not raster.valid_mask()[1, 2]

    def test_equality_is_content_based(self, small_grid):
        a = make_scene(small_grid, seed=3)
        b = make_scene(small_grid, seed=3)
        c = make_scene(small_grid, seed=4)
        assert a == b
        assert a != c

    def test_values_coerced_float32(self, small_grid):
        raster = SceneRaster(
            small_grid,
            [Band("a", np.zeros(small_grid.shape, np.float64))],
            datetime.date(2021, 6, 1),
        )
        assert raster.bands[0].values.dtype == np.float32


class TestTiling:
    def test_exact_cover_no_overlap(self):
        g = make_grid(width=8, height=8)
        scene = make_scene(g, seed=1)
        ps = tile(scene, 4)
        assert len(ps.patches) == 4
        offsets = {(p.row_off, p.col_off) for p in ps.patches}
        assert offsets == {(0, 0), (0, 4), (4, 0), (4, 4)}

    def test_ragged_edge_clamps_last_patch(self):
        g = make_grid(width=10, height=6)
        scene = make_scene(g, seed=2)
        ps = tile(scene, 4)
        rows = sorted({p.row_off for p in ps.patches})
        cols = sorted({p.col_off for p in ps.patches})
        assert rows == [0, 2]      # clamped from 4
        assert cols == [0, 4, 6]   # clamped from 8
        for p in ps.patches:
            assert p.values.shape[-2:] == (4, 4)

    def test_patch_values_match_source(self):
        g = make_grid(width=9, height=7)
        scene = make_scene(g, seed=5)
        stackv = scene.stack_values()
        ps = tile(scene, 3, overlap=1)
        for p in ps.patches:
            expected = stackv[:, p.row_off:p.row_off + 3, p.col_off:p.col_off + 3]
            np.testing.assert_array_equal(p.values, expected)

    def test_small_raster_single_patch(self):
        g = make_grid(width=3, height=2)
        scene = make_scene(g, seed=6)
        ps = tile(scene, 8)
        assert len(ps.patches) == 1
        assert ps.patches[0].values.shape[-2:] == (2, 3)

    def test_bad_arguments(self):
        g = make_grid()
        scene = make_scene(g)
        with pytest.raises(ArgumentError):
            tile(scene, 0)
        with pytest.raises(ArgumentError):
            tile(scene, 4, overlap=4)
        with pytest.raises(ArgumentError):
            tile(scene, 4, overlap=-1)

    def test_stitch_roundtrip_identity(self):
        # Stitching each patch's own plane back must reproduce the source.
        g = make_grid(width=11, height=9)
        scene = make_scene(g, seed=7, names=["only"])
        ps = tile(scene, 4, overlap=2)
        planes = [p.values[0] for p in ps.patches]
        out = stitch(ps, planes)
        np.testing.assert_allclose(out, scene.bands[0].values, rtol=0, atol=1e-6)

    def test_stitch_averages_overlaps(self):
        # Two constant planes 0 and 1 over overlapping patches: overlap = 0.5.
        g = make_grid(width=6, height=4)
        scene = make_scene(g, seed=8, names=["only"])
        ps = tile(scene, 4, overlap=2)
        assert len(ps.patches) == 2
        planes = [np.zeros((4, 4), np.float32), np.ones((4, 4), np.float32)]
        out = stitch(ps, planes)
        np.testing.assert_allclose(out[:, 2:4], 0.5)
        np.testing.assert_allclose(out[:, :2], 0.0)
        np.testing.assert_allclose(out[:, 4:], 1.0)

    def test_stitch_count_mismatch(self):
        g = make_grid(width=6, height=4)
        ps = tile(make_scene(g, seed=9), 4, overlap=2)
        with pytest.raises(ArgumentError):
            stitch(ps, [np.zeros((4, 4), np.float32)])


def _prob_scene(grid, date, value, seed=None):
    if seed is None:
        plane = np.full(grid.shape, value, np.float32)
    else:
        plane = np.random.default_rng(seed).uniform(0, 1, grid.shape).astype(np.float32)
    return SceneRaster(grid, [Band("prob", plane)], date)


class TestAlignStack:
    def test_identical_grids_stack_in_date_order(self):
        g = make_grid(width=5, height=4)
        dates = [datetime.date(2021, 6, d) for d in (11, 1, 21)]
        rasters = [_prob_scene(g, d, 0.1 * i) for i, d in enumerate(dates)]
        stack = align_stack(rasters)
        assert list(stack.dates) == sorted(dates)
        assert stack.layers.shape == (3, 4, 5)
        assert stack.valid.all()

    def test_duplicate_dates_rejected(self):
        g = make_grid()
        d = datetime.date(2021, 6, 1)
        with pytest.raises(ArgumentError):
            align_stack([_prob_scene(g, d, 0.1), _prob_scene(g, d, 0.2)])

    def test_multiband_rejected(self):
        g = make_grid()
        with pytest.raises(ArgumentError):
            align_stack([make_scene(g)])

    def test_disjoint_grids_rejected(self):
        a = make_grid(origin_x=24.0)
        b = make_grid(origin_x=90.0)
        with pytest.raises(AlignmentError):
            align_stack([
                _prob_scene(a, datetime.date(2021, 6, 1), 0.1),
                _prob_scene(b, datetime.date(2021, 6, 2), 0.2),
            ])

    def test_offset_grids_intersect(self):
        # Second raster shifted 2 pixels east: intersection is 10 wide.
        a = make_grid(width=12, height=10, origin_x=24.0)
        b = make_grid(width=12, height=10, origin_x=24.002)
        stack = align_stack([
            _prob_scene(a, datetime.date(2021, 6, 1), 0.25),
            _prob_scene(b, datetime.date(2021, 6, 2), 0.75),
        ])
        assert stack.grid.width == 10
        assert stack.grid.height == 10
        assert stack.grid.origin_x == pytest.approx(24.002)
        assert stack.valid.all()
        np.testing.assert_allclose(stack.layers[0], 0.25)
        np.testing.assert_allclose(stack.layers[1], 0.75)

    def test_reference_grid_is_earliest_scene(self):
        # Half-pixel offset: grid snaps to the earliest date's pixel lattice.
        a = make_grid(width=8, height=8, origin_x=24.0)
        b = make_grid(width=8, height=8, origin_x=24.0005)
        early = _prob_scene(a, datetime.date(2021, 6, 1), 0.2)
        late = _prob_scene(b, datetime.date(2021, 6, 5), 0.8)
        stack = align_stack([late, early])  # order must not matter
        frac = (stack.grid.origin_x - 24.0) / stack.grid.pixel_size_x
        assert frac == pytest.approx(round(frac), abs=1e-6)

    def test_order_permutation_invariance(self, rng):
        g = make_grid(width=6, height=6)
        dates = [datetime.date(2021, 6, d) for d in (3, 9, 15, 27)]
        rasters = [_prob_scene(g, d, 0, seed=i) for i, d in enumerate(dates)]
        ref = align_stack(rasters)
        for _ in range(5):
            perm = rng.permutation(len(rasters))
            shuffled = [rasters[i] for i in perm]
            out = align_stack(shuffled)
            assert out.dates == ref.dates
            np.testing.assert_array_equal(out.layers, ref.layers)
            np.testing.assert_array_equal(out.valid, ref.valid)

    def test_nodata_pixels_invalid(self):
        g = make_grid(width=4, height=4)
        plane = np.full(g.shape, 0.5, np.float32)
        plane[1, 1] = np.nan
        raster = SceneRaster(g, [Band("prob", plane)], datetime.date(2021, 6, 1))
        stack = align_stack([raster, _prob_scene(g, datetime.date(2021, 6, 2), 0.5)])
        assert not stack.valid[0, 1, 1]
        assert np.isnan(stack.layers[0, 1, 1])
        assert stack.valid[1, 1, 1]

    def test_restrict_limits_valid_pixels(self):
        g = make_grid(width=4, height=4)
        stack = align_stack([
            _prob_scene(g, datetime.date(2021, 6, 1), 0.1),
            _prob_scene(g, datetime.date(2021, 6, 2), 0.2),
        ])
        keep = np.zeros(g.shape, dtype=bool)
        keep[0, :] = True
        out = stack.restrict(keep)
        assert len(out) == 2
        assert out.valid[:, 0, :].all()
        assert not out.valid[:, 1:, :].any()
        with pytest.raises(ArgumentError):
            stack.restrict(np.ones((2, 2), dtype=bool))
