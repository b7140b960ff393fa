"""Raster file readers and writers.

Two formats are supported and auto-detected by extension:

``.tif`` / ``.tiff``
    Tagged georeferenced raster (GeoTIFF baseline tags via tifffile):
    float32 planar samples, ModelPixelScale + ModelTiepoint for the
    geotransform, a minimal GeoKey directory for the CRS, the GDAL nodata
    and metadata tags for the sentinel, band names, wavelengths and the
    acquisition date.  Payload survives a write/read cycle float32-exact.

``.f32`` / ``.json``
    Sidecar pair: ``<stem>.f32`` holds the raw little-endian float32
    payload, band-major, C order; ``<stem>.json`` holds
    ``{width, height, origin, pixel_size, crs, bands, date, nodata}``.
    Roundtrip is bit-exact.  Either file of the pair may be passed.
"""

from __future__ import annotations

import datetime
import json
import math
import re
import xml.etree.ElementTree as ET
from pathlib import Path

import numpy as np
import tifffile

from .errors import EmptyRasterError, FormatError, MetadataError, WriteError
from .raster import ArgumentError, Band, GeoGrid, SceneRaster

SIDECAR_SUFFIX = ".f32"

# TIFF tag codes used for georeferencing and metadata.
_TAG_PIXEL_SCALE = 33550
_TAG_TIEPOINT = 33922
_TAG_GEO_KEYS = 34735
_TAG_GEO_ASCII = 34737
_TAG_GDAL_METADATA = 42112
_TAG_GDAL_NODATA = 42113

# GeoKey ids (subset).
_KEY_MODEL_TYPE = 1024
_KEY_RASTER_TYPE = 1025
_KEY_CITATION = 1026
_KEY_GEOGRAPHIC_CRS = 2048
_KEY_PROJECTED_CRS = 3072

_GEOGRAPHIC_EPSG = {4326, 4258, 4269, 4283, 4617}


def read_raster(path: str | Path, *, default_date: datetime.date | None = None) -> SceneRaster:
    """Load a raster in any supported format.

    ``default_date`` fills in the acquisition date for files that carry no
    date metadata of their own; without it such files raise
    :class:`MetadataError`.
    """
    path = Path(path)
    suffix = path.suffix.lower()
    if suffix in (".tif", ".tiff"):
        return _read_geotiff(path, default_date)
    if suffix in (SIDECAR_SUFFIX, ".json"):
        return _read_sidecar(path, default_date)
    raise FormatError(f"unsupported raster extension {suffix!r} on {path}")


def write_raster(raster: SceneRaster, path: str | Path) -> None:
    """Write a raster; the format follows the path extension."""
    path = Path(path)
    suffix = path.suffix.lower()
    try:
        if suffix in (".tif", ".tiff"):
            _write_geotiff(raster, path)
        elif suffix in (SIDECAR_SUFFIX, ".json"):
            _write_sidecar(raster, path)
        else:
            raise FormatError(f"unsupported raster extension {suffix!r} on {path}")
    except OSError as exc:
        raise WriteError(f"cannot write {path}: {exc}") from exc


def probability_path(directory: str | Path, scene_id: str, date: datetime.date,
                     tagged: bool = False) -> Path:
    """Interop path for a per-scene probability raster."""
    ext = ".tif" if tagged else SIDECAR_SUFFIX
    return Path(directory) / f"probs_{scene_id}_{date.isoformat()}{ext}"


_PROB_NAME = re.compile(r"^probs_(?P<scene_id>.+)_(?P<date>\d{4}-\d{2}-\d{2})$")


def parse_probability_name(path: str | Path) -> tuple[str, datetime.date] | None:
    """Extract ``(scene_id, date)`` from a probability raster filename."""
    m = _PROB_NAME.match(Path(path).stem)
    if m is None:
        return None
    return m.group("scene_id"), datetime.date.fromisoformat(m.group("date"))


# ---------------------------------------------------------------------------
# sidecar format


def _sidecar_pair(path: Path) -> tuple[Path, Path]:
    if path.suffix.lower() == ".json":
        return path.with_suffix(SIDECAR_SUFFIX), path
    return path, path.with_suffix(".json")


def _write_sidecar(raster: SceneRaster, path: Path) -> None:
    payload_path, header_path = _sidecar_pair(path)
    if not payload_path.parent.is_dir():
        raise WriteError(f"destination directory {payload_path.parent} does not exist")
    header = {
        "width": raster.grid.width,
        "height": raster.grid.height,
        "origin": [raster.grid.origin_x, raster.grid.origin_y],
        "pixel_size": [raster.grid.pixel_size_x, raster.grid.pixel_size_y],
        "crs": raster.grid.crs_id,
        "bands": [
            {"name": b.name, "wavelength_nm": b.wavelength_nm} for b in raster.bands
        ],
        "date": raster.acquisition_date.isoformat(),
        "nodata": None if math.isnan(raster.nodata) else raster.nodata,
    }
    stack = np.ascontiguousarray(raster.stack_values(), dtype="<f4")
    stack.tofile(payload_path)
    header_path.write_text(json.dumps(header, indent=2) + "\n")


def _read_sidecar(path: Path, default_date: datetime.date | None) -> SceneRaster:
    payload_path, header_path = _sidecar_pair(path)
    if not header_path.exists():
        raise FormatError(f"sidecar header {header_path} not found")
    if not payload_path.exists():
        raise FormatError(f"sidecar payload {payload_path} not found")
    try:
        header = json.loads(header_path.read_text())
    except json.JSONDecodeError as exc:
        raise FormatError(f"bad sidecar header {header_path}: {exc}") from exc
    try:
        width = int(header["width"])
        height = int(header["height"])
        origin = header["origin"]
        pixel_size = header["pixel_size"]
        crs = header["crs"]
        band_meta = header["bands"]
    except (KeyError, TypeError) as exc:
        raise MetadataError(f"sidecar header {header_path} misses field: {exc}") from exc
    if not band_meta:
        raise EmptyRasterError(f"{header_path} declares zero bands")
    grid = GeoGrid(width, height, float(origin[0]), float(origin[1]),
                   float(pixel_size[0]), float(pixel_size[1]), str(crs))
    raw = np.fromfile(payload_path, dtype="<f4")
    expected = len(band_meta) * height * width
    if raw.size != expected:
        raise FormatError(
            f"{payload_path} holds {raw.size} float32 values, header implies {expected}"
        )
    planes = raw.reshape(len(band_meta), height, width)
    bands = [
        Band(str(m["name"]), planes[i], m.get("wavelength_nm"))
        for i, m in enumerate(band_meta)
    ]
    date = _parse_date(header.get("date"), default_date, header_path)
    nodata = header.get("nodata")
    nodata = float("nan") if nodata is None else float(nodata)
    return SceneRaster(grid, bands, date, nodata)


def _parse_date(raw, default_date, source) -> datetime.date:
    if raw:
        return datetime.date.fromisoformat(str(raw)[:10])
    if default_date is not None:
        return default_date
    raise MetadataError(f"{source} carries no acquisition date")


# ---------------------------------------------------------------------------
# tagged (GeoTIFF) format


def _epsg_code(crs_id: str) -> int | None:
    m = re.fullmatch(r"(?i)epsg:(\d+)", crs_id.strip())
    return int(m.group(1)) if m else None


def _geo_keys(crs_id: str) -> tuple[tuple[int, ...], str]:
    ascii_params = crs_id + "|"
    keys = [
        (_KEY_MODEL_TYPE, 0, 1, 2),
        (_KEY_RASTER_TYPE, 0, 1, 1),  # PixelIsArea
        (_KEY_CITATION, _TAG_GEO_ASCII, len(crs_id) + 1, 0),
    ]
    code = _epsg_code(crs_id)
    if code is not None:
        if code in _GEOGRAPHIC_EPSG:
            keys.append((_KEY_GEOGRAPHIC_CRS, 0, 1, code))
        else:
            keys[0] = (_KEY_MODEL_TYPE, 0, 1, 1)
            keys.append((_KEY_PROJECTED_CRS, 0, 1, code))
    keys.sort()
    flat = [1, 1, 0, len(keys)]
    for k in keys:
        flat.extend(k)
    return tuple(flat), ascii_params


def _gdal_metadata_xml(raster: SceneRaster) -> str:
    root = ET.Element("GDALMetadata")
    item = ET.SubElement(root, "Item", name="ACQUISITIONDATETIME")
    item.text = raster.acquisition_date.isoformat()
    for i, b in enumerate(raster.bands):
        d = ET.SubElement(root, "Item", name="DESCRIPTION", sample=str(i), role="description")
        d.text = b.name
        if b.wavelength_nm is not None:
            w = ET.SubElement(root, "Item", name="WAVELENGTH_NM", sample=str(i))
            w.text = repr(float(b.wavelength_nm))
    return ET.tostring(root, encoding="unicode")


def _write_geotiff(raster: SceneRaster, path: Path) -> None:
    if not path.parent.is_dir():
        raise WriteError(f"destination directory {path.parent} does not exist")
    grid = raster.grid
    scale_y = -grid.pixel_size_y  # positive for north-up rasters
    keys, ascii_params = _geo_keys(grid.crs_id)
    nodata = "nan" if math.isnan(raster.nodata) else repr(raster.nodata)
    extratags = [
        (_TAG_PIXEL_SCALE, "d", 3, (grid.pixel_size_x, scale_y, 0.0)),
        (_TAG_TIEPOINT, "d", 6, (0.0, 0.0, 0.0, grid.origin_x, grid.origin_y, 0.0)),
        (_TAG_GEO_KEYS, "H", len(keys), keys),
        (_TAG_GEO_ASCII, "s", 0, ascii_params),
        (_TAG_GDAL_METADATA, "s", 0, _gdal_metadata_xml(raster)),
        (_TAG_GDAL_NODATA, "s", 0, nodata),
    ]
    stack = raster.stack_values()
    if stack.shape[0] == 1:
        # single grayscale plane; SEPARATE only applies to multisample data
        tifffile.imwrite(path, stack[0], photometric="minisblack", extratags=extratags)
    else:
        tifffile.imwrite(
            path,
            stack,
            photometric="minisblack",
            planarconfig="separate",
            extratags=extratags,
        )


def _tag(page, code):
    entry = page.tags.get(code)
    return None if entry is None else entry.value


def _crs_from_tags(page) -> str:
    keys = _tag(page, _TAG_GEO_KEYS)
    ascii_params = _tag(page, _TAG_GEO_ASCII) or ""
    if keys is not None:
        entries = {}
        n = keys[3]
        for i in range(n):
            key_id, location, count, value = keys[4 + 4 * i : 8 + 4 * i]
            entries[key_id] = (location, count, value)
        for key_id in (_KEY_GEOGRAPHIC_CRS, _KEY_PROJECTED_CRS):
            if key_id in entries and entries[key_id][0] == 0:
                return f"EPSG:{entries[key_id][2]}"
        if _KEY_CITATION in entries:
            location, count, offset = entries[_KEY_CITATION]
            if location == _TAG_GEO_ASCII:
                return ascii_params[offset : offset + count].rstrip("|")
    if ascii_params:
        return ascii_params.split("|")[0]
    raise MetadataError("no CRS information in geokeys")


def _read_geotiff(path: Path, default_date: datetime.date | None) -> SceneRaster:
    try:
        tf = tifffile.TiffFile(path)
    except (tifffile.TiffFileError, ValueError, OSError) as exc:
        raise FormatError(f"cannot read {path} as tagged raster: {exc}") from exc
    with tf:
        page = tf.pages[0]
        scale = _tag(page, _TAG_PIXEL_SCALE)
        tiepoint = _tag(page, _TAG_TIEPOINT)
        if scale is None or tiepoint is None:
            raise MetadataError(f"{path} carries no geotransform tags")
        data = np.asarray(tf.asarray())
        if data.ndim == 2:
            data = data[None, :, :]
        elif data.ndim == 3 and page.planarconfig != 2:
            data = np.moveaxis(data, -1, 0)  # chunky (H, W, S) -> band-major
        data = data.astype(np.float32, copy=False)
        n_bands, height, width = data.shape
        if n_bands == 0:
            raise EmptyRasterError(f"{path} holds zero samples")
        grid = GeoGrid(
            width=width,
            height=height,
            origin_x=float(tiepoint[3]),
            origin_y=float(tiepoint[4]),
            pixel_size_x=float(scale[0]),
            pixel_size_y=-float(scale[1]),
            crs_id=_crs_from_tags(page),
        )
        nodata_raw = _tag(page, _TAG_GDAL_NODATA)
        nodata = float(nodata_raw) if nodata_raw is not None else float("nan")

        names = [f"band_{i + 1}" for i in range(n_bands)]
        wavelengths: list[float | None] = [None] * n_bands
        date_raw = None
        md = _tag(page, _TAG_GDAL_METADATA)
        if md:
            try:
                root = ET.fromstring(md)
            except ET.ParseError:
                root = None
            if root is not None:
                for item in root.iter("Item"):
                    name = item.get("name", "")
                    sample = item.get("sample")
                    if name == "ACQUISITIONDATETIME":
                        date_raw = item.text
                    elif sample is not None and int(sample) < n_bands:
                        if name == "DESCRIPTION":
                            names[int(sample)] = item.text or names[int(sample)]
                        elif name == "WAVELENGTH_NM" and item.text:
                            wavelengths[int(sample)] = float(item.text)
        if date_raw is None:
            dt = _tag(page, 306)  # classic TIFF DateTime
            if dt:
                date_raw = str(dt)[:10].replace(":", "-")
        date = _parse_date(date_raw, default_date, path)
        bands = [Band(names[i], data[i], wavelengths[i]) for i in range(n_bands)]
        return SceneRaster(grid, bands, date, nodata)
