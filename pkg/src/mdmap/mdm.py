"""The marine-debris mapping metric over a probability time stack.

For each pixel ``(i, j)`` with per-date detection probabilities
``p[i, j, k]`` and threshold ``T``::

    D[i, j]   = 100 / N[i, j] * sum_k 1{p[i, j, k] >= T}   (detection percentage)
    Pbar[i, j] =   1 / N[i, j] * sum_k p[i, j, k]          (mean probability)
    MDM[i, j] = D[i, j] * Pbar[i, j]

so MDM lies in [0, 100]: zero means no detections at all, and the value
grows both with how often a pixel crosses the threshold and with how
confident the detections are.  Pixels masked on a date (cloud, land,
outside footprint) contribute to neither sum on that date.

``N`` is the per-pixel count of valid observations by default.  A global
count mode instead uses the full number of dates for every pixel, with
masked observations contributing probability zero; this penalises pixels
that were often cloud-covered but matches a reading of ``N`` as "number
of images".  Both are exposed because aggregate statistics differ between
them.

Sums run in date order with numpy's pairwise reduction, so results are
bit-reproducible for a given stack shape.
"""

from __future__ import annotations

import csv
import dataclasses
from pathlib import Path

import numpy as np

from .predict import ThresholdPreset
from .raster import ArgumentError, Band, DateStack, GeoGrid, SceneRaster

DEFAULT_MIN_OBS = 3


@dataclasses.dataclass(frozen=True)
class MdmRaster:
    """Detection percentage, mean probability, their product, and counts."""

    grid: GeoGrid
    detection_pct: np.ndarray  # D, percent 0-100, NaN below min_obs
    mean_prob: np.ndarray  # Pbar, 0-1, NaN below min_obs
    mdm: np.ndarray  # D * Pbar, 0-100, NaN below min_obs
    obs_count: np.ndarray  # N, valid observations per pixel (int)

    def __post_init__(self):
        for name in ("detection_pct", "mean_prob", "mdm", "obs_count"):
            plane = getattr(self, name)
            if plane.shape != self.grid.shape:
                raise ArgumentError(
                    f"{name} shape {plane.shape} does not match grid {self.grid.shape}"
                )

    def valid_mask(self) -> np.ndarray:
        return ~np.isnan(self.mdm)

    def to_scene(self, date) -> SceneRaster:
        """Four-band raster view (D, Pbar, MDM, N) for file export."""
        bands = [
            Band("detection_pct", self.detection_pct),
            Band("mean_prob", self.mean_prob),
            Band("mdm", self.mdm),
            Band("obs_count", self.obs_count.astype(np.float32)),
        ]
        return SceneRaster(self.grid, bands, date)


def _prepare(stack: DateStack, min_obs: int):
    if len(stack) == 0:
        raise ArgumentError("stack holds no dates")
    if min_obs < 1:
        raise ArgumentError(f"min_obs must be >= 1, got {min_obs}")
    finite = stack.layers[stack.valid]
    if finite.size and (finite.min() < 0.0 or finite.max() > 1.0):
        raise ArgumentError("stack probabilities must lie in [0, 1] on valid entries")
    n_valid = stack.valid.sum(axis=0)
    return n_valid


def detection_rate(
    stack: DateStack,
    t: ThresholdPreset,
    min_obs: int = DEFAULT_MIN_OBS,
    global_count: bool = False,
) -> np.ndarray:
    """Percentage of observations meeting the threshold, per pixel.

    The boundary is inclusive: ``p >= T`` counts as a detection.  Pixels
    with fewer than ``min_obs`` valid observations are NaN.
    """
    n_valid = _prepare(stack, min_obs)
    with np.errstate(invalid="ignore"):  # NaN layers compare False
        hits = ((stack.layers >= t.value) & stack.valid).sum(axis=0)
    denom = float(len(stack)) if global_count else n_valid
    with np.errstate(divide="ignore", invalid="ignore"):
        d = 100.0 * hits / denom
    d = np.where(n_valid >= min_obs, d, np.nan)
    return d.astype(np.float64)


def mean_probability(
    stack: DateStack,
    min_obs: int = DEFAULT_MIN_OBS,
    global_count: bool = False,
) -> np.ndarray:
    """Average probability over valid observations, per pixel."""
    n_valid = _prepare(stack, min_obs)
    total = np.where(stack.valid, stack.layers, 0.0).astype(np.float64).sum(axis=0)
    denom = float(len(stack)) if global_count else n_valid
    with np.errstate(divide="ignore", invalid="ignore"):
        p = total / denom
    p = np.where(n_valid >= min_obs, p, np.nan)
    return p


def mdm(
    stack: DateStack,
    t: ThresholdPreset,
    min_obs: int = DEFAULT_MIN_OBS,
    global_count: bool = False,
) -> MdmRaster:
    """Full metric raster: D, Pbar, their product, and observation counts."""
    d = detection_rate(stack, t, min_obs, global_count)
    p = mean_probability(stack, min_obs, global_count)
    return MdmRaster(stack.grid, d, p, d * p, stack.valid.sum(axis=0).astype(np.int32))


def write_mdm_csv(m: MdmRaster, path: str | Path) -> None:
    """Per-pixel CSV (lat, lon, D, Pbar, MDM, N) over valid pixels.

    Assumes a geographic grid (x = longitude, y = latitude).  Rows march
    row-major for deterministic output; floats are written with repr so
    reruns are bit-identical.
    """
    lons = m.grid.col_centers()
    lats = m.grid.row_centers()
    keep = m.valid_mask()
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["lat", "lon", "detection_pct", "mean_prob", "mdm", "obs_count"])
        for row, col in zip(*np.nonzero(keep)):
            writer.writerow(
                [
                    repr(float(lats[row])),
                    repr(float(lons[col])),
                    repr(float(m.detection_pct[row, col])),
                    repr(float(m.mean_prob[row, col])),
                    repr(float(m.mdm[row, col])),
                    int(m.obs_count[row, col]),
                ]
            )
