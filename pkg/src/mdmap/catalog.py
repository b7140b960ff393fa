"""Scene-catalog queries, downloads, and local scene manifests.

The catalog wire contract is an OpenSearch-style paginated JSON feed
(``rows``/``start`` parameters, ``feed.entry`` records).  ``file://``
endpoints serve a fixture page directly, so everything here runs with
zero network access.  Credentials come only from environment variables,
never from config files.
"""

from __future__ import annotations

import dataclasses
import datetime as _dt
import hashlib
import json
import re
import os
import shutil
import warnings
from pathlib import Path
from urllib.parse import urlparse
from urllib.request import url2pathname

from .errors import CatalogParseError, IntegrityError, TransportError
from .raster import ArgumentError

ENV_USER = "DDE_CATALOG_USER"
ENV_PASS = "DDE_CATALOG_PASS"
ENV_ENDPOINT = "DDE_CATALOG_ENDPOINT"

PAGE_ROWS = 100

#: Files and folders named ``<scene_id>_<YYYY-MM-DD>`` are pipeline scenes.
_SCENE_NAME = re.compile(r"^(?P<scene_id>.+)_(?P<date>\d{4}-\d{2}-\d{2})$")
_RASTER_SUFFIXES = (".f32", ".tif", ".tiff")

_WKT_PAIR = re.compile(r"(-?\d+(?:\.\d+)?(?:[eE][-+]?\d+)?)\s+(-?\d+(?:\.\d+)?(?:[eE][-+]?\d+)?)")


@dataclasses.dataclass(frozen=True)
class RoiSpec:
    """Rectangle of interest: two opposite corners plus a date interval."""

    corner_a: tuple[float, float]
    corner_b: tuple[float, float]
    date_start: _dt.date
    date_end: _dt.date

    def __post_init__(self):
        for lat, lon in (self.corner_a, self.corner_b):
            if not (-90.0 <= lat <= 90.0):
                raise ArgumentError(f"latitude {lat} outside [-90, 90]")
            if not (-180.0 <= lon <= 180.0):
                raise ArgumentError(f"longitude {lon} outside [-180, 180]")
        if self.date_start > self.date_end:
            raise ArgumentError("date_start must not exceed date_end")
        if self.corner_a[0] == self.corner_b[0] or self.corner_a[1] == self.corner_b[1]:
            raise ArgumentError("corners must span a nonempty rectangle")

    @property
    def lat_range(self) -> tuple[float, float]:
        lats = sorted((self.corner_a[0], self.corner_b[0]))
        return (lats[0], lats[1])

    @property
    def lon_range(self) -> tuple[float, float]:
        lons = sorted((self.corner_a[1], self.corner_b[1]))
        return (lons[0], lons[1])

    def wkt_rectangle(self) -> str:
        (lat0, lat1), (lon0, lon1) = self.lat_range, self.lon_range
        ring = [(lon0, lat0), (lon1, lat0), (lon1, lat1), (lon0, lat1), (lon0, lat0)]
        inner = ", ".join(f"{lon:.6f} {lat:.6f}" for lon, lat in ring)
        return f"POLYGON(({inner}))"

    def as_dict(self) -> dict:
        return {
            "corner_a": list(self.corner_a),
            "corner_b": list(self.corner_b),
            "date_start": self.date_start.isoformat(),
            "date_end": self.date_end.isoformat(),
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "RoiSpec":
        return cls(
            corner_a=(float(raw["corner_a"][0]), float(raw["corner_a"][1])),
            corner_b=(float(raw["corner_b"][0]), float(raw["corner_b"][1])),
            date_start=_dt.date.fromisoformat(raw["date_start"]),
            date_end=_dt.date.fromisoformat(raw["date_end"]),
        )


@dataclasses.dataclass
class SceneRecord:
    scene_id: str
    sensing_date: _dt.date
    footprint: list
    cloud_cover_pct: float
    download_uri: str
    checksum: str | None = None
    local_path: Path | None = None

    def as_dict(self) -> dict:
        return {
            "scene_id": self.scene_id,
            "sensing_date": self.sensing_date.isoformat(),
            "footprint": [list(p) for p in self.footprint],
            "cloud_cover_pct": self.cloud_cover_pct,
            "download_uri": self.download_uri,
            "checksum": self.checksum,
            "local_path": str(self.local_path) if self.local_path else None,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "SceneRecord":
        return cls(
            scene_id=raw["scene_id"],
            sensing_date=_dt.date.fromisoformat(raw["sensing_date"]),
            footprint=[(float(a), float(b)) for a, b in raw.get("footprint", [])],
            cloud_cover_pct=float(raw.get("cloud_cover_pct", 0.0)),
            download_uri=raw.get("download_uri", ""),
            checksum=raw.get("checksum"),
            local_path=Path(raw["local_path"]) if raw.get("local_path") else None,
        )


@dataclasses.dataclass
class Manifest:
    roi: RoiSpec
    scenes: list
    created_at: str
    skipped_count: int = 0

    def __post_init__(self):
        ids = [s.scene_id for s in self.scenes]
        if len(set(ids)) != len(ids):
            raise ArgumentError("manifest scene_ids must be unique")
        self.scenes = sorted(self.scenes, key=lambda s: (s.sensing_date, s.scene_id))

    def save(self, path) -> None:
        payload = {
            "roi": self.roi.as_dict(),
            "scenes": [s.as_dict() for s in self.scenes],
            "created_at": self.created_at,
            "skipped_count": self.skipped_count,
        }
        Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True))

    @classmethod
    def load(cls, path) -> "Manifest":
        try:
            raw = json.loads(Path(path).read_text())
            return cls(
                roi=RoiSpec.from_dict(raw["roi"]),
                scenes=[SceneRecord.from_dict(s) for s in raw["scenes"]],
                created_at=raw["created_at"],
                skipped_count=int(raw.get("skipped_count", 0)),
            )
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise CatalogParseError(f"bad manifest file {path}: {exc}") from exc


def _fetch_page(endpoint: str, params: dict, session) -> bytes:
    parsed = urlparse(endpoint)
    if parsed.scheme == "file":
        path = Path(url2pathname(parsed.path))
        try:
            return path.read_bytes()
        except OSError as exc:
            raise TransportError(f"cannot read fixture {path}: {exc}") from exc
    import requests

    if session is None:
        session = requests.Session()
    auth = None
    user, password = os.environ.get(ENV_USER), os.environ.get(ENV_PASS)
    if user and password:
        auth = (user, password)
    try:
        resp = session.get(endpoint, params=params, auth=auth, timeout=60)
    except requests.RequestException as exc:
        raise TransportError(f"catalog request failed: {exc}", retryable=True) from exc
    if resp.status_code in (401, 403):
        raise TransportError(f"catalog auth failure ({resp.status_code})", retryable=False)
    if resp.status_code >= 500:
        raise TransportError(f"catalog server error ({resp.status_code})", retryable=True)
    if resp.status_code != 200:
        raise TransportError(f"catalog HTTP {resp.status_code}", retryable=False)
    return resp.content


def _parse_wkt_polygon(text: str) -> list:
    pairs = _WKT_PAIR.findall(text)
    if len(pairs) < 4:
        raise CatalogParseError(f"unparseable footprint: {text[:80]!r}")
    # WKT order is lon lat; store (lat, lon).
    return [(float(lat), float(lon)) for lon, lat in pairs]


def _entry_field(entry: dict, kind: str, name: str):
    block = entry.get(kind, [])
    if isinstance(block, dict):
        block = [block]
    for item in block:
        if item.get("name") == name:
            return item.get("content")
    return None


def _parse_entry(entry: dict) -> SceneRecord:
    title = entry.get("title")
    if not title:
        raise CatalogParseError("catalog entry without a title")
    begin = _entry_field(entry, "date", "beginposition")
    if begin is None:
        raise CatalogParseError(f"entry {title!r} lacks a sensing date")
    try:
        sensing = _dt.date.fromisoformat(str(begin)[:10])
    except ValueError as exc:
        raise CatalogParseError(f"entry {title!r} has bad date {begin!r}") from exc
    footprint_wkt = _entry_field(entry, "str", "footprint")
    footprint = _parse_wkt_polygon(footprint_wkt) if footprint_wkt else []
    cloud = _entry_field(entry, "double", "cloudcoverpercentage")
    try:
        cloud_pct = float(cloud) if cloud is not None else 0.0
    except ValueError as exc:
        raise CatalogParseError(f"entry {title!r} has bad cloud cover {cloud!r}") from exc
    link = entry.get("link", [])
    if isinstance(link, dict):
        link = [link]
    uri = ""
    for item in link:
        if "href" in item and not item.get("rel"):
            uri = item["href"]
            break
    checksum = _entry_field(entry, "str", "checksum")
    return SceneRecord(title, sensing, footprint, cloud_pct, uri, checksum=checksum)


def _intersects(roi: RoiSpec, footprint: list) -> bool:
    """Bounding-box overlap test between the ROI and a footprint polygon."""
    if not footprint:
        return True
    lats = [p[0] for p in footprint]
    lons = [p[1] for p in footprint]
    (lat0, lat1), (lon0, lon1) = roi.lat_range, roi.lon_range
    return not (max(lats) < lat0 or min(lats) > lat1
                or max(lons) < lon0 or min(lons) > lon1)


def query_catalog(roi: RoiSpec, product_type: str, endpoint: str | None = None,
                  session=None) -> list:
    """List catalog scenes intersecting the ROI rectangle and date range."""
    endpoint = endpoint or os.environ.get(ENV_ENDPOINT)
    if not endpoint:
        raise ArgumentError(f"no catalog endpoint given and {ENV_ENDPOINT} unset")
    query = (
        f'footprint:"Intersects({roi.wkt_rectangle()})" '
        f"AND beginposition:[{roi.date_start.isoformat()}T00:00:00Z TO "
        f"{roi.date_end.isoformat()}T23:59:59Z] "
        f"AND producttype:{product_type}"
    )
    records = []
    start = 0
    while True:
        params = {"q": query, "rows": PAGE_ROWS, "start": start, "format": "json"}
        payload = _fetch_page(endpoint, params, session)
        try:
            doc = json.loads(payload)
        except json.JSONDecodeError as exc:
            raise CatalogParseError(f"catalog response is not JSON: {exc}") from exc
        if "feed" not in doc:
            raise CatalogParseError("catalog response lacks a feed element")
        feed = doc["feed"]
        entries = feed.get("entry", [])
        if isinstance(entries, dict):
            entries = [entries]
        for entry in entries:
            rec = _parse_entry(entry)
            if not (roi.date_start <= rec.sensing_date <= roi.date_end):
                continue
            if not _intersects(roi, rec.footprint):
                continue
            records.append(rec)
        total = feed.get("opensearch:totalResults")
        start += len(entries)
        if not entries or total is None or start >= int(total):
            break
        if urlparse(endpoint).scheme == "file":
            break  # fixture pages do not paginate
    return records


def _digest(path: Path, algorithm: str) -> str:
    h = hashlib.new(algorithm)
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _checksum_parts(checksum: str) -> tuple[str, str]:
    if ":" in checksum:
        algorithm, _, value = checksum.partition(":")
        return algorithm.lower(), value.lower()
    return ("md5" if len(checksum) == 32 else "sha256"), checksum.lower()


def fetch_scene(record: SceneRecord, dest_dir, session=None) -> Path:
    """Download a scene archive, verify its checksum, register the path."""
    dest_dir = Path(dest_dir)
    parsed = urlparse(record.download_uri)
    suffix = Path(parsed.path).suffix or ".dat"
    dest = dest_dir / f"{record.scene_id}{suffix}"
    if parsed.scheme == "file":
        src = Path(url2pathname(parsed.path))
        try:
            shutil.copyfile(src, dest)
        except FileNotFoundError as exc:
            raise TransportError(f"scene source missing: {src}", retryable=False) from exc
    elif parsed.scheme in ("http", "https"):
        import requests

        if session is None:
            session = requests.Session()
        auth = None
        user, password = os.environ.get(ENV_USER), os.environ.get(ENV_PASS)
        if user and password:
            auth = (user, password)
        try:
            with session.get(record.download_uri, auth=auth, stream=True, timeout=300) as resp:
                if resp.status_code != 200:
                    raise TransportError(
                        f"download HTTP {resp.status_code}",
                        retryable=resp.status_code >= 500,
                    )
                with open(dest, "wb") as fh:
                    for chunk in resp.iter_content(1 << 16):
                        fh.write(chunk)
        except requests.RequestException as exc:
            dest.unlink(missing_ok=True)
            raise TransportError(f"download failed: {exc}", retryable=True) from exc
    else:
        raise ArgumentError(f"unsupported download scheme: {parsed.scheme!r}")

    if record.checksum:
        algorithm, expected = _checksum_parts(record.checksum)
        try:
            actual = _digest(dest, algorithm)
        except ValueError as exc:
            dest.unlink(missing_ok=True)
            raise IntegrityError(f"unknown checksum algorithm: {algorithm}") from exc
        if actual != expected:
            dest.unlink(missing_ok=True)
            raise IntegrityError(
                f"checksum mismatch for {record.scene_id}: got {actual}, want {expected}"
            )
    record.local_path = dest
    return dest


def _recognise_scene(path: Path) -> tuple[str, _dt.date] | None:
    name = path.name
    if path.is_file():
        if path.suffix.lower() not in _RASTER_SUFFIXES:
            return None
        name = path.stem
    m = _SCENE_NAME.match(name)
    if m is None:
        return None
    try:
        date = _dt.date.fromisoformat(m.group("date"))
    except ValueError:
        return None
    return m.group("scene_id"), date


def build_manifest(roi: RoiSpec, scene_dir, created_at: str | None = None) -> Manifest:
    """Index local scenes named ``<scene_id>_<YYYY-MM-DD>`` into a manifest.

    Sidecar payloads (``.f32``), tagged rasters (``.tif``/``.tiff``) and
    scene folders all count; anything else is skipped with a warning.
    """
    scene_dir = Path(scene_dir)
    if not scene_dir.is_dir():
        raise FileNotFoundError(f"scene directory missing: {scene_dir}")
    scenes = []
    skipped = 0
    seen = set()
    for path in sorted(scene_dir.iterdir()):
        if path.is_file() and path.suffix.lower() == ".json":
            continue  # sidecar headers ride along with their payload
        parsed = _recognise_scene(path)
        if parsed is None:
            skipped += 1
            continue
        scene_id, date = parsed
        if scene_id in seen:
            skipped += 1
            continue
        seen.add(scene_id)
        scenes.append(SceneRecord(
            scene_id=scene_id,
            sensing_date=date,
            footprint=[],
            cloud_cover_pct=0.0,
            download_uri=path.as_uri(),
            local_path=path,
        ))
    if skipped:
        warnings.warn(f"ignored {skipped} unrecognised entries under {scene_dir}",
                      stacklevel=2)
    if created_at is None:
        created_at = _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")
    return Manifest(roi=roi, scenes=scenes, created_at=created_at, skipped_count=skipped)
