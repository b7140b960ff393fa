"""NDVI and FDI planes from the four-band reflectance subset.

Only four Sentinel-2 bands feed the whole detection path: red (B4),
red-edge 2 (B6), NIR (B8) and SWIR-1 (B11).  NDVI contrasts NIR against
red; FDI contrasts NIR against a baseline interpolated between red-edge
and SWIR-1, which makes sub-pixel floating material stand out.  Both are
computed on corrected surface reflectance exactly as ingested.
"""

from __future__ import annotations

import dataclasses
import datetime

import numpy as np

from .raster import ArgumentError, GeoGrid

# Central wavelengths (nm) of the band subset.  The FDI baseline slope is
# derived from these; kept in one table so a different sensor calibration
# can be substituted in a single place.
WAVELENGTH_NM = {
    "red": 665.0,
    "re2": 740.0,
    "nir": 842.0,
    "swir1": 1610.4,
}

# Baseline interpolation factor: fractional position of NIR between red
# and SWIR-1, times the conventional scaling of 10.
FDI_FACTOR = 10.0 * (WAVELENGTH_NM["nir"] - WAVELENGTH_NM["red"]) / (
    WAVELENGTH_NM["swir1"] - WAVELENGTH_NM["red"]
)

BAND_NAMES = ("red", "re2", "nir", "swir1")


@dataclasses.dataclass(frozen=True)
class BandQuad:
    """The four aligned reflectance planes every predictor input needs."""

    red: np.ndarray
    re2: np.ndarray
    nir: np.ndarray
    swir1: np.ndarray
    grid: GeoGrid
    date: datetime.date | None = None

    def __post_init__(self):
        for name in BAND_NAMES:
            plane = getattr(self, name)
            if plane.shape != self.grid.shape:
                raise ArgumentError(
                    f"band {name!r} shape {plane.shape} does not match grid {self.grid.shape}"
                )

    def planes(self) -> np.ndarray:
        """Band-major ``(4, height, width)`` view in red/re2/nir/swir1 order."""
        return np.stack([self.red, self.re2, self.nir, self.swir1])

    def invalid_mask(self) -> np.ndarray:
        """True where any of the four bands is NaN (nodata)."""
        return np.isnan(self.planes()).any(axis=0)


@dataclasses.dataclass(frozen=True)
class IndexRaster:
    grid: GeoGrid
    values: np.ndarray  # dimensionless, NaN where undefined
    index_name: str  # "NDVI" or "FDI"


def band_quad(raster, band_map: dict[str, str] | None = None) -> BandQuad:
    """Pull the four-band subset out of a :class:`SceneRaster`.

    ``band_map`` maps the canonical names red/re2/nir/swir1 to the raster's
    band names; by default the canonical names themselves are expected.
    Nodata pixels become NaN so downstream math propagates them.
    """
    band_map = band_map or {name: name for name in BAND_NAMES}
    planes = {}
    nodata = raster.nodata
    for canonical in BAND_NAMES:
        values = raster.band(band_map[canonical]).values.astype(np.float32)
        if not np.isnan(nodata):
            values = np.where(values == nodata, np.nan, values)
        planes[canonical] = values
    return BandQuad(grid=raster.grid, date=raster.acquisition_date, **planes)


def ndvi(q: BandQuad) -> IndexRaster:
    """Normalised difference of NIR against red.

    ``(nir - red) / (nir + red)``; pixels with a zero denominator or any
    nodata input are NaN.
    """
    denom = q.nir + q.red
    with np.errstate(divide="ignore", invalid="ignore"):
        values = (q.nir - q.red) / denom
    values = np.where(denom == 0, np.nan, values)
    values[q.invalid_mask()] = np.nan
    return IndexRaster(q.grid, values.astype(np.float32), "NDVI")


def fdi(q: BandQuad) -> IndexRaster:
    """NIR excess over the red-edge/SWIR interpolated baseline.

    ``nir - (re2 + (swir1 - re2) * FDI_FACTOR)``; nodata propagates.
    """
    baseline = q.re2 + (q.swir1 - q.re2) * FDI_FACTOR
    values = (q.nir - baseline).astype(np.float32)
    values[q.invalid_mask()] = np.nan
    return IndexRaster(q.grid, values, "FDI")
