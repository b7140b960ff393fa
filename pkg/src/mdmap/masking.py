"""Keep water, mask everything else.

Two independent mask sources combine here: per-date scene-classification
rasters (land / water / shadow / snow / cloud codes) and a land polygon
file cropped to the region of interest.  Only pixels that are water by
classification and outside every land polygon survive into the metric.
"""

from __future__ import annotations

import dataclasses
import json
from pathlib import Path

import numpy as np

from .errors import FormatError, GeometryError
from .predict import ProbabilityRaster
from .raster import ArgumentError, DateStack, GeoGrid

# Scene-classification codes, following the Fmask 4 convention.  Kept in
# one table so a different classifier's encoding can be swapped in.
CLASS_CLEAR_LAND = 0
CLASS_WATER = 1
CLASS_CLOUD_SHADOW = 2
CLASS_SNOW = 3
CLASS_CLOUD = 4
CLASS_NODATA = 255

SCENE_CLASS_CODES = frozenset(
    {CLASS_CLEAR_LAND, CLASS_WATER, CLASS_CLOUD_SHADOW, CLASS_SNOW, CLASS_CLOUD, CLASS_NODATA}
)


@dataclasses.dataclass(frozen=True)
class SceneClassMask:
    """Integer class plane for one date."""

    grid: GeoGrid
    classes: np.ndarray  # integer plane of SCENE_CLASS_CODES

    def __post_init__(self):
        if self.classes.shape != self.grid.shape:
            raise ArgumentError(
                f"class plane shape {self.classes.shape} does not match grid {self.grid.shape}"
            )
        present = set(np.unique(self.classes).tolist())
        unknown = present - SCENE_CLASS_CODES
        if unknown:
            raise ArgumentError(f"unknown scene-class codes {sorted(unknown)}")

    def water(self) -> np.ndarray:
        return self.classes == CLASS_WATER


@dataclasses.dataclass(frozen=True)
class LandPolygons:
    """Closed rings in geographic coordinates; outer rings plus holes.

    Ring vertices are ``(lon, lat)`` pairs, i.e. grid ``(x, y)`` order.
    Containment uses the even-odd rule, so holes need no special flag: a
    point inside an outer ring and inside a hole crosses an even number of
    edges and counts as outside.
    """

    rings: list[np.ndarray]  # each (n, 2), first vertex == last
    source_name: str = ""

    def __post_init__(self):
        for ring in self.rings:
            if ring.ndim != 2 or ring.shape[1] != 2 or ring.shape[0] < 4:
                raise GeometryError(f"ring needs >= 3 distinct closed vertices, got shape {ring.shape}")
            if not np.array_equal(ring[0], ring[-1]):
                raise GeometryError(
                    f"ring is not closed: first {ring[0].tolist()} != last {ring[-1].tolist()}"
                )
            if len({tuple(v) for v in ring[:-1].tolist()}) < 3:
                raise GeometryError("ring has fewer than 3 distinct vertices")


@dataclasses.dataclass(frozen=True)
class ValidityMask:
    """Boolean keep/drop plane with a record of which mask sources fed it."""

    grid: GeoGrid
    valid: np.ndarray
    provenance: frozenset[str] = frozenset()

    def __post_init__(self):
        if self.valid.shape != self.grid.shape:
            raise ArgumentError(
                f"mask shape {self.valid.shape} does not match grid {self.grid.shape}"
            )


def load_land_polygons(path: str | Path) -> LandPolygons:
    """Read a GeoJSON Polygon/MultiPolygon subset into rings."""
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path} is not valid JSON: {exc}") from exc
    rings: list[np.ndarray] = []
    for geom in _iter_geometries(doc, path):
        gtype = geom.get("type")
        if gtype == "Polygon":
            polys = [geom["coordinates"]]
        elif gtype == "MultiPolygon":
            polys = geom["coordinates"]
        else:
            raise FormatError(f"{path}: unsupported geometry type {gtype!r}")
        for poly in polys:
            for ring in poly:
                rings.append(np.asarray(ring, dtype=np.float64))
    return LandPolygons(rings, source_name=path.name)


def _iter_geometries(doc, path):
    t = doc.get("type") if isinstance(doc, dict) else None
    if t == "FeatureCollection":
        for feature in doc.get("features", []):
            yield feature["geometry"]
    elif t == "Feature":
        yield doc["geometry"]
    elif t in ("Polygon", "MultiPolygon"):
        yield doc
    else:
        raise FormatError(f"{path}: not a GeoJSON Polygon/MultiPolygon document")


def crop_polygons(polys: LandPolygons, bounds: tuple[float, float, float, float]) -> LandPolygons:
    """Drop rings whose bounding box misses ``(xmin, ymin, xmax, ymax)``.

    A ring disjoint from the box cannot contain any point inside it, so
    discarding whole rings never changes containment over the box.
    """
    xmin, ymin, xmax, ymax = bounds
    kept = []
    for ring in polys.rings:
        rx0, ry0 = ring.min(axis=0)
        rx1, ry1 = ring.max(axis=0)
        if rx1 >= xmin and rx0 <= xmax and ry1 >= ymin and ry0 <= ymax:
            kept.append(ring)
    return LandPolygons(kept, polys.source_name)


def points_in_rings(x: np.ndarray, y: np.ndarray, rings: list[np.ndarray]) -> np.ndarray:
    """Even-odd containment of points against the union of all ring edges."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    inside = np.zeros(x.shape, dtype=bool)
    for ring in rings:
        vx, vy = ring[:, 0], ring[:, 1]
        for (x0, y0), (x1, y1) in zip(zip(vx[:-1], vy[:-1]), zip(vx[1:], vy[1:])):
            if y0 == y1:
                continue  # horizontal edge never crosses a scanline strictly
            crosses = ((y0 > y) != (y1 > y)) & (
                x < x0 + (y - y0) * (x1 - x0) / (y1 - y0)
            )
            inside ^= crosses
    return inside


def rasterize_land(polys: LandPolygons, grid: GeoGrid) -> ValidityMask:
    """Mark pixels whose centre falls on land as invalid.

    Containment is sampled at pixel centres with the even-odd rule; cheaper
    than area-fraction rasterisation and unambiguous to test.
    """
    cropped = crop_polygons(polys, grid.bounds())
    xs = grid.col_centers()
    ys = grid.row_centers()
    xg, yg = np.meshgrid(xs, ys)
    on_land = points_in_rings(xg, yg, cropped.rings)
    return ValidityMask(grid, ~on_land, frozenset({"land"}))


def scene_class_validity(m: SceneClassMask) -> ValidityMask:
    """Water keeps, every other class masks."""
    return ValidityMask(m.grid, m.water(), frozenset({"scene-class"}))


def apply_scene_mask(p: ProbabilityRaster, m: SceneClassMask) -> ProbabilityRaster:
    """Invalidate probability pixels that are not water by classification."""
    if p.grid != m.grid:
        raise ArgumentError("probability raster and scene-class mask grids differ")
    probs = p.probs.copy()
    probs[~m.water()] = np.nan
    return ProbabilityRaster(p.grid, probs, p.date, p.source)


def combine_masks(a: ValidityMask, b: ValidityMask) -> ValidityMask:
    """Conjunction of two masks; provenance is unioned."""
    if a.grid != b.grid:
        raise ArgumentError("mask grids differ")
    return ValidityMask(a.grid, a.valid & b.valid, a.provenance | b.provenance)


def mask_stack(stack: DateStack, mask: ValidityMask) -> DateStack:
    """Apply one validity mask to every date of a stack."""
    if stack.grid != mask.grid:
        raise ArgumentError("stack and mask grids differ")
    return stack.restrict(mask.valid)
