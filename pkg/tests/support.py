"""Builders shared across the test modules."""

import datetime

import numpy as np

from mdmap import Band, GeoGrid, SceneRaster


def make_grid(width=12, height=10, origin_x=24.0, origin_y=35.01, pixel=0.001):
    return GeoGrid(width=width, height=height, origin_x=origin_x,
                   origin_y=origin_y, pixel_size_x=pixel, pixel_size_y=-pixel)


def make_scene(grid, date=datetime.date(2021, 6, 1), *, seed=0, names=None,
               wavelengths=None, nodata=float("nan")):
    """Random multiband scene with reflectance-like values in [0, 0.5]."""
    names = names or ["red", "re2", "nir", "swir1"]
    gen = np.random.default_rng(seed)
    bands = []
    for i, name in enumerate(names):
        values = gen.uniform(0.0, 0.5, grid.shape).astype(np.float32)
        wl = wavelengths[i] if wavelengths else None
        bands.append(Band(name, values, wl))
    return SceneRaster(grid, bands, date, nodata=nodata)
