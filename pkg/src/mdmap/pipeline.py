"""Config-driven pipeline: scenes in, density maps out.

Eight sequential stages (acquire, ingest, indices, predict, mask, mdm,
hexbin, render) write their artifacts under ``output_dir/<run_id>/<stage>/``
and are skipped on rerun when both the recorded input signature and the
artifact hashes still match.  Signatures chain stage to stage, so editing
an input or deleting a stage directory reruns exactly the affected suffix
of the pipeline.
"""

from __future__ import annotations

import dataclasses
import datetime as _dt
import hashlib
import json
import time
import warnings
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .catalog import Manifest, RoiSpec, build_manifest, fetch_scene, query_catalog
from .errors import ConfigError, IntegrityError, ValidationError
from .hexbin import (
    DEFAULT_HEX_WIDTH_M,
    DEFAULT_TOP_K,
    DEFAULT_TRIM_FRACTION,
    HexBinMap,
    HexCell,
    LocalProjection,
    aggregate,
    hex_center,
    top_k,
    write_cells_csv,
    write_top_csv,
)
from .indices import BAND_NAMES, band_quad, fdi, ndvi
from .io import parse_probability_name, probability_path, read_raster, write_raster
from .masking import (
    SceneClassMask,
    apply_scene_mask,
    crop_polygons,
    load_land_polygons,
    rasterize_land,
)
from .mdm import DEFAULT_MIN_OBS, MdmRaster, mdm as compute_mdm, write_mdm_csv
from .predict import (
    ThresholdPreset,
    default_weights,
    ingest_probability,
    load_weights,
    predict_baseline,
)
from .raster import ArgumentError, Band as RasterBand, SceneRaster, align_stack
from .render import render_map

PIPELINE_STAGES = ("acquire", "ingest", "indices", "predict", "mask", "mdm",
                   "hexbin", "render")

DEFAULT_PRODUCT_TYPE = "S2MSI2A"

_SCHEMA = {
    "roi": {"corner_a", "corner_b", "date_start", "date_end"},
    "scenes": {"local_dir", "catalog", "product_type", "endpoint", "band_map"},
    "predictor": {"weights", "prob_dir"},
    "mdm": {"threshold", "min_obs"},
    "hexbin": {"width_m", "trim_fraction", "top_k"},
    "masks": {"scene_class_dir", "land_polygons"},
    "run": {"output_dir", "workers"},
}
_BAND_MAP_KEYS = set(BAND_NAMES)


@dataclasses.dataclass(frozen=True)
class PipelineConfig:
    """Fully resolved run description; all paths absolute and checked."""

    roi: RoiSpec
    scene_dir: Path | None
    use_catalog: bool
    product_type: str
    catalog_endpoint: str | None
    band_map: dict | None
    weights_path: Path | None
    prob_dir: Path | None
    threshold: ThresholdPreset
    min_obs: int
    hex_width_m: float
    trim_fraction: float
    top_k: int
    scene_class_dir: Path | None
    land_polygons: Path | None
    output_dir: Path
    workers: int

    def as_dict(self) -> dict:
        def s(p):
            return str(p) if p is not None else None

        return {
            "roi": self.roi.as_dict(),
            "scene_dir": s(self.scene_dir),
            "use_catalog": self.use_catalog,
            "product_type": self.product_type,
            "catalog_endpoint": self.catalog_endpoint,
            "band_map": self.band_map,
            "weights_path": s(self.weights_path),
            "prob_dir": s(self.prob_dir),
            "threshold": {"name": self.threshold.name, "value": self.threshold.value},
            "min_obs": self.min_obs,
            "hex_width_m": self.hex_width_m,
            "trim_fraction": self.trim_fraction,
            "top_k": self.top_k,
            "scene_class_dir": s(self.scene_class_dir),
            "land_polygons": s(self.land_polygons),
            "output_dir": s(self.output_dir),
            "workers": self.workers,
        }

    def config_hash(self) -> str:
        return _sha256_text(_canon(self.as_dict()))


@dataclasses.dataclass
class StageRecord:
    name: str
    status: str  # "succeeded" | "skipped" | "failed"
    wall_time_s: float
    artifacts: dict
    message: str = ""


@dataclasses.dataclass
class RunLedger:
    run_id: str
    config_hash: str
    stages: list = dataclasses.field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "config_hash": self.config_hash,
            "stages": [dataclasses.asdict(s) for s in self.stages],
        }

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.as_dict(), indent=2, sort_keys=True))


def _canon(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def _sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode()).hexdigest()


def _sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _hash_tree(path: Path) -> str:
    """Digest of a file, or of a directory's relative names and contents."""
    path = Path(path)
    if path.is_file():
        return _sha256_file(path)
    entries = []
    for sub in sorted(path.rglob("*")):
        if sub.is_file():
            entries.append((str(sub.relative_to(path)), _sha256_file(sub)))
    return _sha256_text(_canon(entries))


def _date_of(raw, key: str) -> _dt.date:
    if isinstance(raw, _dt.datetime):
        return raw.date()
    if isinstance(raw, _dt.date):
        return raw
    try:
        return _dt.date.fromisoformat(str(raw))
    except ValueError as exc:
        raise ConfigError(f"{key} is not a calendar date: {raw!r}") from exc


def _check_keys(doc: dict) -> None:
    for section, body in doc.items():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        if not isinstance(body, dict):
            raise ConfigError(f"[{section}] must be a table")
        for key in body:
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key {section}.{key}")
    band_map = doc.get("scenes", {}).get("band_map")
    if band_map is not None:
        unknown = set(band_map) - _BAND_MAP_KEYS
        if unknown:
            raise ConfigError(f"unknown band_map keys {sorted(unknown)}; "
                              f"expected a subset of {sorted(_BAND_MAP_KEYS)}")


def _resolve(base: Path, raw) -> Path:
    p = Path(str(raw)).expanduser()
    return p if p.is_absolute() else (base / p).resolve()


def validate_config(path) -> PipelineConfig:
    """Parse, strictly check, and resolve a TOML pipeline config."""
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config {path} is not valid TOML: {exc}") from exc
    _check_keys(doc)
    base = path.parent.resolve()

    roi_tbl = doc.get("roi")
    if not roi_tbl:
        raise ValidationError("config lacks the [roi] section")
    missing = {"corner_a", "corner_b", "date_start", "date_end"} - set(roi_tbl)
    if missing:
        raise ValidationError(f"[roi] lacks keys: {sorted(missing)}")
    try:
        roi = RoiSpec(
            corner_a=tuple(float(v) for v in roi_tbl["corner_a"]),
            corner_b=tuple(float(v) for v in roi_tbl["corner_b"]),
            date_start=_date_of(roi_tbl["date_start"], "roi.date_start"),
            date_end=_date_of(roi_tbl["date_end"], "roi.date_end"),
        )
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"bad [roi] section: {exc}") from exc

    scenes = doc.get("scenes", {})
    local_dir = scenes.get("local_dir")
    use_catalog = bool(scenes.get("catalog", False))
    if (local_dir is not None) == use_catalog:
        raise ValidationError(
            "configure exactly one scene source: scenes.local_dir or scenes.catalog"
        )
    scene_dir = _resolve(base, local_dir) if local_dir is not None else None
    if scene_dir is not None and not scene_dir.is_dir():
        raise ValidationError(f"scenes.local_dir does not exist: {scene_dir}")
    band_map = scenes.get("band_map")
    if band_map is not None:
        band_map = {k: str(v) for k, v in band_map.items()}

    predictor = doc.get("predictor", {})
    weights = predictor.get("weights")
    prob_dir = predictor.get("prob_dir")
    if (weights is None) == (prob_dir is None):
        raise ValidationError(
            "configure exactly one predictor source: predictor.weights or predictor.prob_dir"
        )
    weights_path = _resolve(base, weights) if weights is not None else None
    if weights_path is not None and not weights_path.is_file():
        raise ValidationError(f"predictor.weights does not exist: {weights_path}")
    prob_path = _resolve(base, prob_dir) if prob_dir is not None else None
    if prob_path is not None and not prob_path.is_dir():
        raise ValidationError(f"predictor.prob_dir does not exist: {prob_path}")

    mdm_tbl = doc.get("mdm", {})
    raw_t = mdm_tbl.get("threshold", "opt")
    try:
        if isinstance(raw_t, str):
            preset = ThresholdPreset.from_name(raw_t)
        else:
            preset = ThresholdPreset.custom(float(raw_t))
    except ArgumentError as exc:
        raise ValidationError(f"bad mdm.threshold: {exc}") from exc
    min_obs = int(mdm_tbl.get("min_obs", DEFAULT_MIN_OBS))
    if min_obs < 1:
        raise ValidationError(f"mdm.min_obs must be >= 1, got {min_obs}")

    hex_tbl = doc.get("hexbin", {})
    width_m = float(hex_tbl.get("width_m", DEFAULT_HEX_WIDTH_M))
    trim = float(hex_tbl.get("trim_fraction", DEFAULT_TRIM_FRACTION))
    top_k = int(hex_tbl.get("top_k", DEFAULT_TOP_K))
    if width_m <= 0:
        raise ValidationError(f"hexbin.width_m must be positive, got {width_m}")
    if not 0.0 <= trim < 1.0:
        raise ValidationError(f"hexbin.trim_fraction must lie in [0, 1), got {trim}")
    if top_k < 1:
        raise ValidationError(f"hexbin.top_k must be >= 1, got {top_k}")

    masks = doc.get("masks", {})
    scene_class_dir = masks.get("scene_class_dir")
    scene_class_dir = _resolve(base, scene_class_dir) if scene_class_dir else None
    if scene_class_dir is not None and not scene_class_dir.is_dir():
        raise ValidationError(f"masks.scene_class_dir does not exist: {scene_class_dir}")
    land = masks.get("land_polygons")
    land = _resolve(base, land) if land else None
    if land is not None and not land.is_file():
        raise ValidationError(f"masks.land_polygons does not exist: {land}")

    run_tbl = doc.get("run", {})
    output_dir = _resolve(base, run_tbl.get("output_dir", "mdmap_out"))
    workers = int(run_tbl.get("workers", 1))
    if workers < 1:
        raise ValidationError(f"run.workers must be >= 1, got {workers}")

    return PipelineConfig(
        roi=roi,
        scene_dir=scene_dir,
        use_catalog=use_catalog,
        product_type=str(scenes.get("product_type", DEFAULT_PRODUCT_TYPE)),
        catalog_endpoint=scenes.get("endpoint"),
        band_map=band_map,
        weights_path=weights_path,
        prob_dir=prob_path,
        threshold=preset,
        min_obs=min_obs,
        hex_width_m=width_m,
        trim_fraction=trim,
        top_k=top_k,
        scene_class_dir=scene_class_dir,
        land_polygons=land,
        output_dir=output_dir,
        workers=workers,
    )


def _map_bounded(fn, items, workers: int) -> list:
    """Apply ``fn`` over ``items`` with bounded parallelism, order kept."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    from concurrent.futures import ThreadPoolExecutor

    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# stage state bookkeeping

_STATE_NAME = "_stage.json"


def _load_state(stage_dir: Path) -> dict | None:
    state_path = stage_dir / _STATE_NAME
    if not state_path.is_file():
        return None
    try:
        return json.loads(state_path.read_text())
    except (OSError, json.JSONDecodeError):
        return None


def _artifact_hashes(stage_dir: Path) -> dict:
    out = {}
    for sub in sorted(stage_dir.rglob("*")):
        if sub.is_file() and sub.name != _STATE_NAME:
            out[str(sub.relative_to(stage_dir))] = _sha256_file(sub)
    return out


def _intact(stage_dir: Path, state: dict) -> bool:
    for rel, digest in state.get("artifacts", {}).items():
        target = stage_dir / rel
        if not target.is_file() or _sha256_file(target) != digest:
            return False
    return True


@dataclasses.dataclass
class _Ctx:
    config: PipelineConfig
    run_dir: Path
    payloads: dict = dataclasses.field(default_factory=dict)


def _execute_stage(ledger: RunLedger, ctx: _Ctx, name: str, input_sig: str,
                   run_fn, load_fn) -> str:
    stage_dir = ctx.run_dir / name
    started = time.perf_counter()
    state = _load_state(stage_dir)
    if state and state.get("input_sig") == input_sig and _intact(stage_dir, state):
        ctx.payloads[name] = load_fn(ctx, stage_dir)
        ledger.stages.append(StageRecord(
            name, "skipped", round(time.perf_counter() - started, 6),
            dict(state["artifacts"]),
        ))
        return state["content_sig"]
    stage_dir.mkdir(parents=True, exist_ok=True)
    ctx.payloads[name] = run_fn(ctx, stage_dir)
    artifacts = _artifact_hashes(stage_dir)
    content_sig = _sha256_text(_canon([input_sig, sorted(artifacts.values())]))
    (stage_dir / _STATE_NAME).write_text(json.dumps(
        {"input_sig": input_sig, "content_sig": content_sig, "artifacts": artifacts},
        indent=2, sort_keys=True,
    ))
    ledger.stages.append(StageRecord(
        name, "succeeded", round(time.perf_counter() - started, 6), artifacts,
    ))
    return content_sig


# ---------------------------------------------------------------------------
# stages


def _stage_acquire(ctx: _Ctx, stage_dir: Path) -> Manifest:
    cfg = ctx.config
    # A fixed timestamp keeps rerun artifacts byte-identical.
    stamp = f"{cfg.roi.date_end.isoformat()}T00:00:00+00:00"
    if cfg.scene_dir is not None:
        manifest = build_manifest(cfg.roi, cfg.scene_dir, created_at=stamp)
    else:
        records = query_catalog(cfg.roi, cfg.product_type, cfg.catalog_endpoint)
        scene_store = stage_dir / "scenes"
        scene_store.mkdir(exist_ok=True)
        _map_bounded(lambda r: fetch_scene(r, scene_store), records, cfg.workers)
        manifest = Manifest(roi=cfg.roi, scenes=records, created_at=stamp)
    if not manifest.scenes:
        raise ValidationError("no scenes found for the configured ROI and interval")
    manifest.save(stage_dir / "manifest.json")
    return manifest


def _load_acquire(ctx: _Ctx, stage_dir: Path) -> Manifest:
    return Manifest.load(stage_dir / "manifest.json")


def _stage_ingest(ctx: _Ctx, stage_dir: Path) -> list:
    manifest: Manifest = ctx.payloads["acquire"]
    entries = []

    def check(scene):
        if scene.local_path is None or not Path(scene.local_path).exists():
            raise ValidationError(f"scene {scene.scene_id} has no local file")
        raster = read_raster(scene.local_path, default_date=scene.sensing_date)
        band_quad(raster, ctx.config.band_map)  # proves the four bands exist
        return {
            "scene_id": scene.scene_id,
            "date": scene.sensing_date.isoformat(),
            "path": str(scene.local_path),
            "width": raster.grid.width,
            "height": raster.grid.height,
        }

    entries = _map_bounded(check, manifest.scenes, ctx.config.workers)
    (stage_dir / "index.json").write_text(json.dumps(entries, indent=2, sort_keys=True))
    return entries


def _load_ingest(ctx: _Ctx, stage_dir: Path) -> list:
    return json.loads((stage_dir / "index.json").read_text())


def _stage_indices(ctx: _Ctx, stage_dir: Path) -> None:
    def run(entry):
        date = _dt.date.fromisoformat(entry["date"])
        raster = read_raster(entry["path"], default_date=date)
        q = band_quad(raster, ctx.config.band_map)
        for index in (ndvi(q), fdi(q)):
            name = index.index_name.lower()
            out = SceneRaster(q.grid, [RasterBand(name, index.values)], date)
            write_raster(out, stage_dir / f"{name}_{entry['scene_id']}_{entry['date']}.f32")

    _map_bounded(run, ctx.payloads["ingest"], ctx.config.workers)
    return None


def _load_indices(ctx: _Ctx, stage_dir: Path) -> None:
    return None


def _find_scene_file(directory: Path, scene_id: str, date: _dt.date) -> Path | None:
    for suffix in (".f32", ".tif", ".tiff"):
        candidate = directory / f"{scene_id}_{date.isoformat()}{suffix}"
        if candidate.exists():
            return candidate
    return None


def _stage_predict(ctx: _Ctx, stage_dir: Path) -> list:
    cfg = ctx.config
    weights = load_weights(cfg.weights_path) if cfg.weights_path else None

    def run(entry):
        date = _dt.date.fromisoformat(entry["date"])
        if weights is not None:
            raster = read_raster(entry["path"], default_date=date)
            prob = predict_baseline(band_quad(raster, cfg.band_map), weights)
        else:
            source = probability_path(cfg.prob_dir, entry["scene_id"], date)
            if not source.exists():
                source = probability_path(cfg.prob_dir, entry["scene_id"], date, tagged=True)
            if not source.exists():
                raise IntegrityError(
                    f"no probability raster for scene {entry['scene_id']} on {date} "
                    f"under {cfg.prob_dir}"
                )
            prob = ingest_probability(source, date)
        out = probability_path(stage_dir, entry["scene_id"], date)
        write_raster(prob.to_scene(), out)
        return (entry["scene_id"], date, out)

    return _map_bounded(run, ctx.payloads["ingest"], cfg.workers)


def _probability_listing(stage_dir: Path) -> list:
    out = []
    for path in sorted(stage_dir.glob("probs_*.f32")):
        parsed = parse_probability_name(path)
        if parsed is not None:
            out.append((parsed[0], parsed[1], path))
    return out


def _load_predict(ctx: _Ctx, stage_dir: Path) -> list:
    return _probability_listing(stage_dir)


def _stage_mask(ctx: _Ctx, stage_dir: Path) -> list:
    cfg = ctx.config
    land = load_land_polygons(cfg.land_polygons) if cfg.land_polygons else None
    land_cache: dict = {}

    def run(item):
        scene_id, date, path = item
        prob = ingest_probability(path, date)
        if cfg.scene_class_dir is not None:
            mask_file = _find_scene_file(cfg.scene_class_dir, scene_id, date)
            if mask_file is not None:
                mask_raster = read_raster(mask_file, default_date=date)
                codes = np.nan_to_num(
                    mask_raster.bands[0].values, nan=255.0
                ).astype(np.int32)
                prob = apply_scene_mask(prob, SceneClassMask(mask_raster.grid, codes))
        if land is not None:
            key = prob.grid
            if key not in land_cache:
                cropped = crop_polygons(land, prob.grid.bounds())
                land_cache[key] = rasterize_land(cropped, prob.grid)
            keep = land_cache[key].valid
            probs = np.where(keep, prob.probs, np.float32(np.nan))
            prob = dataclasses.replace(prob, probs=probs)
        out = probability_path(stage_dir, scene_id, date)
        write_raster(prob.to_scene(), out)
        return (scene_id, date, out)

    return _map_bounded(run, ctx.payloads["predict"], cfg.workers)


def _load_mask(ctx: _Ctx, stage_dir: Path) -> list:
    return _probability_listing(stage_dir)


def _stage_mdm(ctx: _Ctx, stage_dir: Path) -> MdmRaster:
    cfg = ctx.config
    rasters = [read_raster(path) for _, _, path in ctx.payloads["mask"]]
    stack = align_stack(rasters)
    result = compute_mdm(stack, cfg.threshold, cfg.min_obs)
    write_mdm_csv(result, stage_dir / "mdm.csv")
    write_raster(result.to_scene(cfg.roi.date_end), stage_dir / "mdm.f32")
    # Hand downstream the file-backed planes so resumed and fresh runs
    # aggregate identical float32 values.
    return _load_mdm_raster(stage_dir)


def _load_mdm_raster(stage_dir: Path) -> MdmRaster:
    scene = read_raster(stage_dir / "mdm.f32")
    return MdmRaster(
        scene.grid,
        scene.band("detection_pct").values.astype(np.float64),
        scene.band("mean_prob").values.astype(np.float64),
        scene.band("mdm").values.astype(np.float64),
        np.nan_to_num(scene.band("obs_count").values, nan=0.0).astype(np.int32),
    )


def _load_mdm(ctx: _Ctx, stage_dir: Path) -> MdmRaster:
    return _load_mdm_raster(stage_dir)


def _hexmap_to_json(hex_map: HexBinMap) -> dict:
    proj = hex_map.projection
    return {
        "width_m": hex_map.width_m,
        "origin_lat": proj.origin_lat if proj else None,
        "origin_lon": proj.origin_lon if proj else None,
        "cells": [
            {
                "q": c.axial_q,
                "r": c.axial_r,
                "trimmed_mean_mdm": c.trimmed_mean_mdm,
                "pixel_count": c.pixel_count,
                "kept_count": c.kept_count,
            }
            for c in hex_map.cells
        ],
        "top_pixels": [list(p) for p in hex_map.top_pixels],
    }


def _hexmap_from_json(doc: dict) -> HexBinMap:
    proj = None
    if doc.get("origin_lat") is not None:
        proj = LocalProjection(doc["origin_lat"], doc["origin_lon"])
    width = doc["width_m"]
    cells = [
        HexCell(
            axial_q=c["q"],
            axial_r=c["r"],
            centre_xy=hex_center(c["q"], c["r"], width),
            trimmed_mean_mdm=c["trimmed_mean_mdm"],
            pixel_count=c["pixel_count"],
            kept_count=c["kept_count"],
        )
        for c in doc["cells"]
    ]
    return HexBinMap(
        width_m=width,
        cells=cells,
        top_pixels=[tuple(p) for p in doc.get("top_pixels", [])],
        projection=proj,
    )


def _stage_hexbin(ctx: _Ctx, stage_dir: Path) -> HexBinMap:
    cfg = ctx.config
    m: MdmRaster = ctx.payloads["mdm"]
    xmin, ymin, xmax, ymax = m.grid.bounds()
    proj = LocalProjection(origin_lat=(ymin + ymax) / 2.0,
                           origin_lon=(xmin + xmax) / 2.0)
    hex_map = aggregate(m, proj, cfg.hex_width_m, cfg.trim_fraction)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")  # short top list is fine here
        hex_map.top_pixels = top_k(m, cfg.top_k)
    write_cells_csv(hex_map, stage_dir / "cells.csv")
    write_top_csv(hex_map.top_pixels, stage_dir / "top_pixels.csv")
    (stage_dir / "hexmap.json").write_text(
        json.dumps(_hexmap_to_json(hex_map), indent=2, sort_keys=True)
    )
    return hex_map


def _load_hexbin(ctx: _Ctx, stage_dir: Path) -> HexBinMap:
    return _hexmap_from_json(json.loads((stage_dir / "hexmap.json").read_text()))


def _stage_render(ctx: _Ctx, stage_dir: Path) -> Path:
    svg = render_map(ctx.payloads["hexbin"])
    out = stage_dir / "density_map.svg"
    out.write_text(svg)
    return out


def _load_render(ctx: _Ctx, stage_dir: Path) -> Path:
    return stage_dir / "density_map.svg"


# ---------------------------------------------------------------------------
# orchestration


def _input_signature(name: str, params: dict, upstream: str | None) -> str:
    return _sha256_text(_canon({"stage": name, "params": params, "upstream": upstream}))


def run_pipeline(config: PipelineConfig, until: str | None = None) -> RunLedger:
    """Execute all stages, reusing cached stage outputs where still valid.

    ``until`` truncates the run after the named stage, so subcommands can
    stop partway while sharing one cache layout.  On stage failure the
    ledger (with the failure recorded) is saved next to whatever
    artifacts were produced, and the error propagates.
    """
    if until is not None and until not in PIPELINE_STAGES:
        raise ArgumentError(f"unknown stage {until!r}; stages are {PIPELINE_STAGES}")
    config_hash = config.config_hash()
    run_id = f"run-{config_hash[:12]}"
    run_dir = config.output_dir / run_id
    run_dir.mkdir(parents=True, exist_ok=True)
    ledger = RunLedger(run_id=run_id, config_hash=config_hash)
    ctx = _Ctx(config=config, run_dir=run_dir)

    if config.scene_dir is not None:
        source_params = {"scene_dir": str(config.scene_dir),
                         "tree": _hash_tree(config.scene_dir)}
    else:
        source_params = {"catalog": True,
                         "product_type": config.product_type,
                         "endpoint": config.catalog_endpoint}

    plan = [
        ("acquire", {"roi": config.roi.as_dict(), **source_params},
         _stage_acquire, _load_acquire),
        ("ingest", {"band_map": config.band_map}, _stage_ingest, _load_ingest),
        ("indices", {}, _stage_indices, _load_indices),
        ("predict",
         {"weights": _sha256_file(config.weights_path) if config.weights_path else None,
          "prob_dir": _hash_tree(config.prob_dir) if config.prob_dir else None},
         _stage_predict, _load_predict),
        ("mask",
         {"scene_class": _hash_tree(config.scene_class_dir)
          if config.scene_class_dir else None,
          "land": _sha256_file(config.land_polygons)
          if config.land_polygons else None},
         _stage_mask, _load_mask),
        ("mdm", {"threshold": config.threshold.value, "min_obs": config.min_obs},
         _stage_mdm, _load_mdm),
        ("hexbin", {"width_m": config.hex_width_m,
                    "trim_fraction": config.trim_fraction,
                    "top_k": config.top_k},
         _stage_hexbin, _load_hexbin),
        ("render", {}, _stage_render, _load_render),
    ]

    if until is not None:
        plan = plan[: PIPELINE_STAGES.index(until) + 1]

    upstream_sig: str | None = None
    try:
        for name, params, run_fn, load_fn in plan:
            input_sig = _input_signature(name, params, upstream_sig)
            upstream_sig = _execute_stage(ledger, ctx, name, input_sig, run_fn, load_fn)
    except Exception as exc:
        ledger.stages.append(StageRecord(
            name, "failed", 0.0, {}, message=f"{type(exc).__name__}: {exc}",
        ))
        ledger.save(run_dir / "ledger.json")
        raise
    ledger.save(run_dir / "ledger.json")
    return ledger
