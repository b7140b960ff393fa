"""Trained-network inference over whole scenes, in the pipeline's formats.

Scenes are cut into overlapping windows, scored, and stitched back with
mean blending; output files follow the ``probs_<sceneid>_<date>`` naming
the downstream pipeline expects.  Pixels lacking any configured band
stay NaN so they count as invalid observations there.
"""

import datetime
import re
from pathlib import Path

import numpy as np
import torch

from mdmap import Band, ProbabilityRaster, SceneRaster, probability_path, read_raster, tile, stitch, write_raster

from .errors import ExportError
from .train import TrainedModel

DEFAULT_OVERLAP = 8

# interop names of the usual four-band subset
BAND_NAME_BY_NUMBER = {4: "red", 6: "re2", 8: "nir", 11: "swir1"}

_SCENE_STEM = re.compile(r"^(?P<scene_id>.+)_(?P<date>\d{4}-\d{2}-\d{2})$")


def _resolve(item):
    if isinstance(item, (str, Path)):
        path = Path(item)
        match = _SCENE_STEM.match(path.stem)
        if match is None:
            raise ExportError(
                f"cannot parse scene id and date from file name {path.name!r}"
            )
        date = datetime.date.fromisoformat(match.group("date"))
        return match.group("scene_id"), read_raster(path, default_date=date)
    scene_id, raster = item
    return scene_id, raster


def _scene_planes(raster: SceneRaster, bands) -> np.ndarray:
    """Configured bands as a (4, h, w) float32 stack, NaN where nodata."""
    planes = []
    for number in bands:
        name = BAND_NAME_BY_NUMBER.get(number)
        if name is None:
            raise ExportError(f"no interop band name for band {number}")
        try:
            values = raster.band(name).values.astype(np.float32)
        except KeyError:
            raise ExportError(
                f"scene is missing band {name!r} (band {number}); "
                f"have {raster.band_names}"
            ) from None
        if not np.isnan(raster.nodata):
            values = np.where(values == raster.nodata, np.nan, values)
        planes.append(values)
    return np.stack(planes)


def export_probabilities(
    trained: TrainedModel,
    scenes,
    out_dir,
    overlap: int = DEFAULT_OVERLAP,
) -> list[Path]:
    """Write one probability raster per scene; returns the paths.

    ``scenes`` holds file paths named ``<sceneid>_<date>`` or
    ``(scene_id, SceneRaster)`` pairs.  Windows advance by
    ``patch_size - overlap``; overlapping predictions average.
    """
    patch = trained.config.patch_size
    if not 0 <= overlap < patch:
        raise ExportError(f"overlap must satisfy 0 <= overlap < {patch}, got {overlap}")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stats = trained.normalization
    model = trained.model
    model.eval()

    written = []
    for item in scenes:
        scene_id, raster = _resolve(item)
        h, w = raster.grid.shape
        if h < patch or w < patch:
            raise ExportError(
                f"scene {scene_id} is {h}x{w} px, smaller than the {patch} px window"
            )
        planes = _scene_planes(raster, trained.config.bands)
        invalid = np.isnan(planes).any(axis=0)
        norm = (planes.astype(np.float64) - stats.mean[:, None, None]) / stats.std[:, None, None]
        norm = np.where(np.isfinite(norm), norm, 0.0).astype(np.float32)
        four = SceneRaster(
            raster.grid,
            [Band(f"c{i}", norm[i]) for i in range(norm.shape[0])],
            raster.acquisition_date,
        )
        pset = tile(four, patch, overlap)
        scored = []
        with torch.no_grad():
            for p in pset.patches:
                t = torch.from_numpy(p.values[None])
                scored.append(model.predict_proba(t)[0, 0].numpy())
        blended = stitch(pset, scored)
        blended = np.where(invalid, np.float32(np.nan), blended)
        prob = ProbabilityRaster(raster.grid, blended, raster.acquisition_date, "external")
        path = probability_path(out_dir, scene_id, raster.acquisition_date)
        write_raster(prob.to_scene(), path)
        written.append(path)
    return written
