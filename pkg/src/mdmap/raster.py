"""Grid model and raster containers shared by every processing stage.

Conventions used throughout the package:

- CRS space uses ``(x, y)``; array space uses ``(row, col)``.
- ``pixel_size_y`` is negative for north-up rasters (row index grows
  southward), positive otherwise.  ``origin_x/origin_y`` locate the outer
  corner of pixel ``(0, 0)``.
- Band payloads are float32, shaped ``(height, width)``; band-major stacks
  are ``(bands, height, width)``.
- Rasters and stacks are immutable once constructed and safe to share
  across threads; :func:`tile`, :func:`stitch` and :func:`align_stack` are
  pure functions.
"""

from __future__ import annotations

import dataclasses
import datetime
import math

import numpy as np

from .errors import AlignmentError, EmptyRasterError, MdmapError


class ArgumentError(MdmapError, ValueError):
    """An operation received arguments violating its contract."""


@dataclasses.dataclass(frozen=True)
class GeoGrid:
    """Georeferenced pixel grid: dimensions plus an affine (scale + offset) map.

    The pixel ``(row, col)`` <-> geo ``(x, y)`` mapping is bijective over the
    grid: :meth:`pixel_center` goes one way, :meth:`locate` inverts it.
    """

    width: int
    height: int
    origin_x: float
    origin_y: float
    pixel_size_x: float
    pixel_size_y: float
    crs_id: str = "EPSG:4326"

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ArgumentError(f"grid dimensions must be positive, got {self.width}x{self.height}")
        if self.pixel_size_x <= 0:
            raise ArgumentError(f"pixel_size_x must be positive, got {self.pixel_size_x}")
        if self.pixel_size_y == 0:
            raise ArgumentError("pixel_size_y must be nonzero")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    def pixel_center(self, row: int, col: int) -> tuple[float, float]:
        """Geo coordinates of the centre of pixel ``(row, col)``."""
        x = self.origin_x + (col + 0.5) * self.pixel_size_x
        y = self.origin_y + (row + 0.5) * self.pixel_size_y
        return (x, y)

    def locate(self, x: float, y: float) -> tuple[int, int]:
        """Pixel ``(row, col)`` containing geo point ``(x, y)``."""
        col = math.floor((x - self.origin_x) / self.pixel_size_x)
        row = math.floor((y - self.origin_y) / self.pixel_size_y)
        return (row, col)

    def col_centers(self) -> np.ndarray:
        """x coordinates of all pixel-column centres, length ``width``."""
        return self.origin_x + (np.arange(self.width) + 0.5) * self.pixel_size_x

    def row_centers(self) -> np.ndarray:
        """y coordinates of all pixel-row centres, length ``height``."""
        return self.origin_y + (np.arange(self.height) + 0.5) * self.pixel_size_y

    def bounds(self) -> tuple[float, float, float, float]:
        """Outer extent ``(xmin, ymin, xmax, ymax)`` in CRS units."""
        x0 = self.origin_x
        x1 = self.origin_x + self.width * self.pixel_size_x
        y0 = self.origin_y
        y1 = self.origin_y + self.height * self.pixel_size_y
        return (min(x0, x1), min(y0, y1), max(x0, x1), max(y0, y1))


@dataclasses.dataclass(frozen=True)
class Band:
    name: str
    values: np.ndarray  # (height, width) float32
    wavelength_nm: float | None = None


def _values_ok(plane: np.ndarray, nodata: float) -> bool:
    # Finite everywhere, except that NaN is fine when NaN is the sentinel.
    bad = ~np.isfinite(plane)
    if math.isnan(nodata):
        bad &= ~np.isnan(plane)
    return not bad.any()


@dataclasses.dataclass(eq=False)
class SceneRaster:
    """One acquisition: a georeferenced multi-band reflectance grid."""

    grid: GeoGrid
    bands: list[Band]
    acquisition_date: datetime.date
    nodata: float = float("nan")

    def __post_init__(self):
        if not self.bands:
            raise EmptyRasterError("raster has no bands")
        names = [b.name for b in self.bands]
        if len(set(names)) != len(names):
            raise ArgumentError(f"duplicate band names: {names}")
        coerced = []
        for b in self.bands:
            plane = np.asarray(b.values, dtype=np.float32)
            if plane.shape != self.grid.shape:
                raise ArgumentError(
                    f"band {b.name!r} shape {plane.shape} does not match grid {self.grid.shape}"
                )
            if not _values_ok(plane, self.nodata):
                raise ArgumentError(f"band {b.name!r} holds non-finite values besides nodata")
            coerced.append(Band(b.name, plane, b.wavelength_nm))
        self.bands = coerced

    @property
    def band_names(self) -> list[str]:
        return [b.name for b in self.bands]

    def band(self, name: str) -> Band:
        for b in self.bands:
            if b.name == name:
                return b
        raise KeyError(f"no band named {name!r}; have {self.band_names}")

    def stack_values(self) -> np.ndarray:
        """Band-major ``(bands, height, width)`` float32 array (copy)."""
        return np.stack([b.values for b in self.bands])

    def valid_mask(self) -> np.ndarray:
        """Boolean plane, true where every band holds usable data."""
        stack = self.stack_values()
        if math.isnan(self.nodata):
            good = ~np.isnan(stack)
        else:
            good = stack != self.nodata
        return good.all(axis=0)

    def __eq__(self, other) -> bool:
        if not isinstance(other, SceneRaster):
            return NotImplemented
        if self.grid != other.grid or self.acquisition_date != other.acquisition_date:
            return False
        if not (self.nodata == other.nodata or (math.isnan(self.nodata) and math.isnan(other.nodata))):
            return False
        if self.band_names != other.band_names:
            return False
        for a, b in zip(self.bands, other.bands):
            if a.wavelength_nm != b.wavelength_nm:
                return False
            if not np.array_equal(a.values, b.values, equal_nan=True):
                return False
        return True


@dataclasses.dataclass(frozen=True)
class Patch:
    row_off: int
    col_off: int
    values: np.ndarray  # (bands, rows, cols), band-major copy


@dataclasses.dataclass(frozen=True)
class PatchSet:
    patch_size: int
    overlap: int
    patches: list[Patch]
    source_grid: GeoGrid


def _tile_offsets(dim: int, patch: int, stride: int) -> list[int]:
    if dim <= patch:
        return [0]
    offsets = list(range(0, dim - patch + 1, stride))
    last = dim - patch
    if offsets[-1] != last:
        offsets.append(last)  # edge-clamped, stays in-bounds
    return offsets


def tile(raster: SceneRaster, patch_size: int, overlap: int = 0) -> PatchSet:
    """Cut a raster into band-major patches on a regular stride.

    Patch offsets advance by ``patch_size - overlap``; the final row/column
    of patches is clamped so patches never leave the raster (no padding).
    Rasters smaller than ``patch_size`` yield a single clipped patch.
    """
    if patch_size <= 0:
        raise ArgumentError(f"patch_size must be positive, got {patch_size}")
    if overlap < 0 or overlap >= patch_size:
        raise ArgumentError(f"overlap must satisfy 0 <= overlap < patch_size, got {overlap}")
    stride = patch_size - overlap
    stack = raster.stack_values()
    h, w = raster.grid.shape
    patches = []
    for r in _tile_offsets(h, patch_size, stride):
        for c in _tile_offsets(w, patch_size, stride):
            sub = stack[:, r : r + patch_size, c : c + patch_size].copy()
            patches.append(Patch(r, c, sub))
    return PatchSet(patch_size, overlap, patches, raster.grid)


def stitch(patch_set: PatchSet, planes: list[np.ndarray]) -> np.ndarray:
    """Reassemble single-band per-patch planes onto the source grid.

    Pixels covered by several patches take the arithmetic mean of all
    contributions, which avoids seams from edge-clamped overlapping patches.
    """
    if len(planes) != len(patch_set.patches):
        raise ArgumentError(
            f"got {len(planes)} planes for {len(patch_set.patches)} patches"
        )
    h, w = patch_set.source_grid.shape
    acc = np.zeros((h, w), dtype=np.float64)
    cnt = np.zeros((h, w), dtype=np.int32)
    for patch, plane in zip(patch_set.patches, planes):
        plane = np.asarray(plane, dtype=np.float64)
        ph, pw = patch.values.shape[1:]
        if plane.shape != (ph, pw):
            raise ArgumentError(
                f"plane shape {plane.shape} does not match patch extent {(ph, pw)}"
            )
        acc[patch.row_off : patch.row_off + ph, patch.col_off : patch.col_off + pw] += plane
        cnt[patch.row_off : patch.row_off + ph, patch.col_off : patch.col_off + pw] += 1
    out = np.full((h, w), np.nan, dtype=np.float64)
    covered = cnt > 0
    out[covered] = acc[covered] / cnt[covered]
    return out.astype(np.float32)


@dataclasses.dataclass(frozen=True)
class DateStack:
    """Date-aligned single-band planes with per-observation validity.

    ``valid[k, i, j]`` is false where date ``k`` holds no usable value at
    pixel ``(i, j)``; consumers must ignore ``layers`` there.
    """

    grid: GeoGrid
    dates: list[datetime.date]
    layers: np.ndarray  # (n_dates, height, width) float32
    valid: np.ndarray  # (n_dates, height, width) bool

    def __post_init__(self):
        n = len(self.dates)
        expect = (n, self.grid.height, self.grid.width)
        if self.layers.shape != expect or self.valid.shape != expect:
            raise ArgumentError(
                f"stack arrays must be shaped {expect}, got {self.layers.shape}/{self.valid.shape}"
            )
        if any(b <= a for a, b in zip(self.dates, self.dates[1:])):
            raise ArgumentError(f"dates must be strictly increasing, got {self.dates}")

    def __len__(self) -> int:
        return len(self.dates)

    def restrict(self, keep: np.ndarray) -> "DateStack":
        """Copy of the stack with ``valid`` further restricted to ``keep``."""
        if keep.shape != self.grid.shape:
            raise ArgumentError(
                f"mask shape {keep.shape} does not match grid {self.grid.shape}"
            )
        return DateStack(self.grid, list(self.dates), self.layers, self.valid & keep[None, :, :])


def _intersection_grid(rasters: list[SceneRaster]) -> GeoGrid:
    ref = rasters[0].grid
    xmin = max(r.grid.bounds()[0] for r in rasters)
    ymin = max(r.grid.bounds()[1] for r in rasters)
    xmax = min(r.grid.bounds()[2] for r in rasters)
    ymax = min(r.grid.bounds()[3] for r in rasters)
    if xmin >= xmax or ymin >= ymax:
        raise AlignmentError("raster footprints do not intersect")
    eps = 1e-9
    psx, psy = ref.pixel_size_x, ref.pixel_size_y
    c0 = math.ceil((xmin - ref.origin_x) / psx - eps)
    c1 = math.floor((xmax - ref.origin_x) / psx + eps)
    if psy < 0:
        r0 = math.ceil((ymax - ref.origin_y) / psy - eps)
        r1 = math.floor((ymin - ref.origin_y) / psy + eps)
    else:
        r0 = math.ceil((ymin - ref.origin_y) / psy - eps)
        r1 = math.floor((ymax - ref.origin_y) / psy + eps)
    width, height = c1 - c0, r1 - r0
    if width <= 0 or height <= 0:
        raise AlignmentError("raster grid intersection is empty")
    return GeoGrid(
        width=width,
        height=height,
        origin_x=ref.origin_x + c0 * psx,
        origin_y=ref.origin_y + r0 * psy,
        pixel_size_x=psx,
        pixel_size_y=psy,
        crs_id=ref.crs_id,
    )


def align_stack(rasters: list[SceneRaster]) -> DateStack:
    """Resample single-band rasters onto their common grid, sorted by date.

    The target grid is the intersection of all footprints, pixel-aligned to
    the earliest-dated raster (so the result does not depend on input
    order).  Sampling is nearest-neighbour: debris pixels are spectrally
    sharp and interpolation would smear class evidence.  Pixels that fall
    outside a source footprint or hold its nodata sentinel are invalid.
    """
    if not rasters:
        raise ArgumentError("align_stack needs at least one raster")
    for r in rasters:
        if len(r.bands) != 1:
            raise ArgumentError(
                f"align_stack expects single-band rasters, got {len(r.bands)} bands"
            )
    crs_ids = {r.grid.crs_id for r in rasters}
    if len(crs_ids) > 1:
        raise AlignmentError(f"rasters span multiple CRSs: {sorted(crs_ids)}")
    dates = [r.acquisition_date for r in rasters]
    if len(set(dates)) != len(dates):
        raise ArgumentError("acquisition dates must be distinct")

    ordered = sorted(rasters, key=lambda r: r.acquisition_date)
    grid = _intersection_grid(ordered)
    xs = grid.col_centers()
    ys = grid.row_centers()

    layers = np.empty((len(ordered), grid.height, grid.width), dtype=np.float32)
    valid = np.empty((len(ordered), grid.height, grid.width), dtype=bool)
    for k, r in enumerate(ordered):
        src = r.grid
        cols = np.floor((xs - src.origin_x) / src.pixel_size_x).astype(np.int64)
        rows = np.floor((ys - src.origin_y) / src.pixel_size_y).astype(np.int64)
        in_x = (cols >= 0) & (cols < src.width)
        in_y = (rows >= 0) & (rows < src.height)
        cols_c = np.clip(cols, 0, src.width - 1)
        rows_c = np.clip(rows, 0, src.height - 1)
        plane = r.bands[0].values[np.ix_(rows_c, cols_c)]
        ok = in_y[:, None] & in_x[None, :]
        if math.isnan(r.nodata):
            ok &= ~np.isnan(plane)
        else:
            ok &= plane != r.nodata
        layers[k] = plane
        valid[k] = ok
        layers[k][~ok] = np.nan
    return DateStack(grid, [r.acquisition_date for r in ordered], layers, valid)
