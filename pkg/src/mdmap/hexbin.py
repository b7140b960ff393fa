"""Fixed-area hexagonal aggregation of per-pixel metric values.

Pixels are projected into a local metric frame, assigned to pointy-top
hexagons of a configurable flat-to-flat width, and summarised per cell by
a left-trimmed mean: after sorting ascending, the lowest
``floor(n * trim_fraction)`` values are dropped before averaging.  Most
ocean pixels carry zero or near-zero metric values, so an untrimmed mean
would wash out genuinely dense cells; trimming keeps the signal.

Geometry: a regular hexagon of flat-to-flat width ``w`` has area
``(sqrt(3) / 2) * w**2`` (21.65 km^2 for the default 5 km width) and its
centre-to-corner size is ``w / sqrt(3)``.
"""

from __future__ import annotations

import csv
import dataclasses
import math
import warnings
from pathlib import Path

import numpy as np

from .errors import ProjectionError
from .mdm import MdmRaster
from .raster import ArgumentError

EARTH_RADIUS_M = 6378137.0

DEFAULT_HEX_WIDTH_M = 5000.0
DEFAULT_TRIM_FRACTION = 0.5
DEFAULT_TOP_K = 10

#: Latitude beyond which the equirectangular local frame degenerates.
MAX_LATITUDE_DEG = 89.0


@dataclasses.dataclass(frozen=True)
class LocalProjection:
    """Equirectangular frame about a local origin.

    Accurate to well under a hexagon width for extents up to ~150 km away
    from the origin, which covers any sensible region of interest without
    pulling in a projection library.
    """

    origin_lat: float
    origin_lon: float
    earth_radius: float = EARTH_RADIUS_M

    def __post_init__(self):
        if abs(self.origin_lat) >= MAX_LATITUDE_DEG:
            raise ProjectionError(
                f"projection origin latitude {self.origin_lat} too close to a pole"
            )


def project_local(lat, lon, proj: LocalProjection):
    """Degrees to local metres: x east, y north, origin at (0, 0).

    Accepts scalars or arrays; raises for latitudes beyond +-89 degrees.
    """
    lat = np.asarray(lat, dtype=np.float64)
    lon = np.asarray(lon, dtype=np.float64)
    if np.any(np.abs(lat) > MAX_LATITUDE_DEG):
        raise ProjectionError("latitude beyond +-89 degrees is outside the projection domain")
    scale = math.cos(math.radians(proj.origin_lat))
    x = proj.earth_radius * np.radians(lon - proj.origin_lon) * scale
    y = proj.earth_radius * np.radians(lat - proj.origin_lat)
    if x.ndim == 0:
        return (float(x), float(y))
    return (x, y)


def unproject_local(x, y, proj: LocalProjection):
    """Inverse of :func:`project_local`."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    scale = math.cos(math.radians(proj.origin_lat))
    lon = proj.origin_lon + np.degrees(x / (proj.earth_radius * scale))
    lat = proj.origin_lat + np.degrees(y / proj.earth_radius)
    if lat.ndim == 0:
        return (float(lat), float(lon))
    return (lat, lon)


def hexagon_area(width_m: float) -> float:
    """Area of a regular hexagon of flat-to-flat ``width_m``."""
    return math.sqrt(3.0) / 2.0 * width_m * width_m


def hex_center(q, r, width_m: float):
    """Local-frame centre of the pointy-top cell at axial ``(q, r)``."""
    q = np.asarray(q, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64)
    size = width_m / math.sqrt(3.0)
    x = size * math.sqrt(3.0) * (q + r / 2.0)
    y = size * 1.5 * r
    if x.ndim == 0:
        return (float(x), float(y))
    return (x, y)


def assign_hex(xy, width_m: float):
    """Axial coordinates of the hexagon containing a local-frame point.

    Cube rounding: round the fractional axial coordinates and re-derive
    the one with the largest rounding error from the other two, which
    settles boundary points consistently.
    """
    if width_m <= 0:
        raise ArgumentError(f"hexagon width must be positive, got {width_m}")
    x, y = xy
    scalar = np.ndim(x) == 0
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    size = width_m / math.sqrt(3.0)
    qf = (math.sqrt(3.0) / 3.0 * x - y / 3.0) / size
    rf = (2.0 / 3.0 * y) / size
    sf = -qf - rf

    q = np.round(qf)
    r = np.round(rf)
    s = np.round(sf)
    dq = np.abs(q - qf)
    dr = np.abs(r - rf)
    ds = np.abs(s - sf)
    fix_q = (dq > dr) & (dq > ds)
    fix_r = ~fix_q & (dr > ds)
    q = np.where(fix_q, -r - s, q)
    r = np.where(fix_r, -q - s, r)
    if scalar:
        return (int(q), int(r))
    return (q.astype(np.int64), r.astype(np.int64))


@dataclasses.dataclass(frozen=True)
class HexCell:
    axial_q: int
    axial_r: int
    centre_xy: tuple[float, float]  # local-frame metres
    trimmed_mean_mdm: float
    pixel_count: int
    kept_count: int


@dataclasses.dataclass
class HexBinMap:
    """Aggregated cells plus the highest-valued raw pixels."""

    width_m: float
    cells: list[HexCell]
    top_pixels: list[tuple[float, float, float]] = dataclasses.field(default_factory=list)
    projection: LocalProjection | None = None


def trimmed_mean(values: np.ndarray, trim_fraction: float) -> float:
    """Mean after dropping the ``floor(n * trim_fraction)`` smallest values."""
    if not 0.0 <= trim_fraction < 1.0:
        raise ArgumentError(f"trim_fraction must lie in [0, 1), got {trim_fraction}")
    ordered = np.sort(np.asarray(values, dtype=np.float64))
    drop = math.floor(ordered.size * trim_fraction)
    kept = ordered[drop:]
    return float(kept.mean())


def aggregate(
    m: MdmRaster,
    proj: LocalProjection,
    width_m: float = DEFAULT_HEX_WIDTH_M,
    trim_fraction: float = DEFAULT_TRIM_FRACTION,
) -> HexBinMap:
    """Bin valid metric pixels into hexagons with left-trimmed means.

    Assumes a geographic grid (x = longitude, y = latitude).  Cells that
    contain no valid pixel are omitted, so empty ocean renders blank.
    The result does not depend on pixel iteration order.
    """
    if not 0.0 <= trim_fraction < 1.0:
        raise ArgumentError(f"trim_fraction must lie in [0, 1), got {trim_fraction}")
    if width_m <= 0:
        raise ArgumentError(f"hexagon width must be positive, got {width_m}")
    keep = m.valid_mask()
    rows, cols = np.nonzero(keep)
    cells: list[HexCell] = []
    if rows.size:
        lats = m.grid.row_centers()[rows]
        lons = m.grid.col_centers()[cols]
        x, y = project_local(lats, lons, proj)
        q, r = assign_hex((x, y), width_m)
        values = m.mdm[rows, cols].astype(np.float64)

        # Group per cell: sort by (cell, value) so each segment arrives
        # pre-sorted for the trim.
        keys = (q - q.min()) * np.int64(r.max() - r.min() + 1) + (r - r.min())
        order = np.lexsort((values, keys))
        sorted_keys = keys[order]
        sorted_vals = values[order]
        sorted_q = q[order]
        sorted_r = r[order]
        boundaries = np.nonzero(np.diff(sorted_keys))[0] + 1
        starts = np.concatenate([[0], boundaries])
        groups = np.split(sorted_vals, boundaries)
        for start, group in zip(starts, groups):
            n = group.size
            drop = math.floor(n * trim_fraction)
            kept = group[drop:]
            cq, cr = int(sorted_q[start]), int(sorted_r[start])
            cells.append(
                HexCell(
                    axial_q=cq,
                    axial_r=cr,
                    centre_xy=hex_center(cq, cr, width_m),
                    trimmed_mean_mdm=float(kept.mean()),
                    pixel_count=int(n),
                    kept_count=int(n - drop),
                )
            )
    cells.sort(key=lambda c: (c.axial_q, c.axial_r))
    return HexBinMap(width_m=width_m, cells=cells, projection=proj)


def top_k(m: MdmRaster, k: int = DEFAULT_TOP_K) -> list[tuple[float, float, float]]:
    """The ``k`` highest-valued pixels as (lat, lon, mdm), descending.

    Ties break by (row, col) ascending so output is deterministic.  When
    fewer than ``k`` valid pixels exist, all are returned and a warning
    flags the short list.
    """
    if k < 1:
        raise ArgumentError(f"k must be >= 1, got {k}")
    keep = m.valid_mask()
    rows, cols = np.nonzero(keep)
    if rows.size < k:
        warnings.warn(
            f"only {rows.size} valid pixels for top-{k} request; returning all",
            stacklevel=2,
        )
    values = m.mdm[rows, cols].astype(np.float64)
    order = np.lexsort((cols, rows, -values))[:k]
    lats = m.grid.row_centers()
    lons = m.grid.col_centers()
    return [
        (float(lats[rows[i]]), float(lons[cols[i]]), float(values[i])) for i in order
    ]


def write_cells_csv(hex_map: HexBinMap, path: str | Path) -> None:
    """Cell table: axial coords, centre lat/lon, trimmed mean, counts."""
    proj = hex_map.projection
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["axial_q", "axial_r", "centre_lat", "centre_lon", "trimmed_mean_mdm",
             "pixel_count", "kept_count"]
        )
        for cell in hex_map.cells:
            if proj is not None:
                lat, lon = unproject_local(*cell.centre_xy, proj)
            else:
                lat, lon = float("nan"), float("nan")
            writer.writerow(
                [cell.axial_q, cell.axial_r, repr(float(lat)), repr(float(lon)),
                 repr(cell.trimmed_mean_mdm), cell.pixel_count, cell.kept_count]
            )


def write_top_csv(points: list[tuple[float, float, float]], path: str | Path) -> None:
    """Top-pixel table: lat, lon, mdm, descending."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["lat", "lon", "mdm"])
        for lat, lon, value in points:
            writer.writerow([repr(float(lat)), repr(float(lon)), repr(float(value))])
