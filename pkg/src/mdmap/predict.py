"""Per-scene detection probabilities and thresholding.

Probabilities arrive from one of two routes: a built-in logistic baseline
over the spectral features (good enough to exercise the pipeline on
synthetic data, never a scientific model) or externally produced
probability rasters dropped into the interop format.  Invalid pixels are
NaN throughout this module.
"""

from __future__ import annotations

import dataclasses
import datetime
import json
import math
from pathlib import Path

import numpy as np

from . import io as raster_io
from .errors import ConfigError, FormatError, IntegrityError
from .indices import BandQuad, fdi, ndvi
from .raster import ArgumentError, Band, GeoGrid, SceneRaster

#: Threshold maximising F1 on the validation precision-recall curve.
OPT_THRESHOLD = 0.815
#: Stricter threshold trading recall for 0.95 precision.
HP_THRESHOLD = 0.99

#: Feature names a baseline weight set must cover.
BASELINE_FEATURES = ("red", "re2", "nir", "swir1", "ndvi", "fdi")

INGEST_TOLERANCE = 1e-6


@dataclasses.dataclass(frozen=True)
class ThresholdPreset:
    """A named detection threshold; ``opt`` and ``hp`` are fixed values."""

    name: str  # "opt" | "hp" | "custom"
    value: float

    def __post_init__(self):
        if not 0.0 < self.value < 1.0:
            raise ArgumentError(f"threshold must lie in (0, 1), got {self.value}")
        expected = {"opt": OPT_THRESHOLD, "hp": HP_THRESHOLD}
        if self.name in expected and self.value != expected[self.name]:
            raise ArgumentError(
                f"preset {self.name!r} is pinned to {expected[self.name]}, got {self.value}"
            )
        if self.name not in ("opt", "hp", "custom"):
            raise ArgumentError(f"unknown preset name {self.name!r}")

    @classmethod
    def opt(cls) -> "ThresholdPreset":
        return cls("opt", OPT_THRESHOLD)

    @classmethod
    def hp(cls) -> "ThresholdPreset":
        return cls("hp", HP_THRESHOLD)

    @classmethod
    def custom(cls, value: float) -> "ThresholdPreset":
        return cls("custom", float(value))

    @classmethod
    def from_name(cls, name: str) -> "ThresholdPreset":
        if name == "opt":
            return cls.opt()
        if name == "hp":
            return cls.hp()
        raise ArgumentError(f"unknown threshold preset {name!r} (expected 'opt' or 'hp')")


@dataclasses.dataclass(frozen=True)
class BaselineWeights:
    """Logistic-regression weights over the six spectral features."""

    bias: float
    coefficients: dict[str, float]

    def __post_init__(self):
        missing = [f for f in BASELINE_FEATURES if f not in self.coefficients]
        if missing:
            raise ConfigError(f"weights miss coefficients for {missing}")
        unknown = [f for f in self.coefficients if f not in BASELINE_FEATURES]
        if unknown:
            raise ConfigError(f"weights name unknown features {unknown}")
        values = [self.bias, *self.coefficients.values()]
        if not all(math.isfinite(v) for v in values):
            raise ConfigError("weights must be finite")


def load_weights(path: str | Path) -> BaselineWeights:
    """Read a ``{bias, coefficients{...}}`` JSON weights file."""
    try:
        raw = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"weights file {path} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict) or "bias" not in raw or "coefficients" not in raw:
        raise ConfigError(f"weights file {path} must hold 'bias' and 'coefficients'")
    return BaselineWeights(float(raw["bias"]),
                           {k: float(v) for k, v in raw["coefficients"].items()})


def default_weights() -> BaselineWeights:
    """Hand-tuned weights shipped for synthetic tests and demos."""
    from importlib.resources import files

    raw = files("mdmap").joinpath("data/baseline_weights.json").read_text()
    data = json.loads(raw)
    return BaselineWeights(float(data["bias"]),
                           {k: float(v) for k, v in data["coefficients"].items()})


@dataclasses.dataclass(frozen=True)
class ProbabilityRaster:
    """Per-pixel detection probabilities for one acquisition date."""

    grid: GeoGrid
    probs: np.ndarray  # float32, NaN where invalid
    date: datetime.date
    source: str  # "baseline" | "external"

    def __post_init__(self):
        if self.probs.shape != self.grid.shape:
            raise ArgumentError(
                f"probs shape {self.probs.shape} does not match grid {self.grid.shape}"
            )
        finite = self.probs[~np.isnan(self.probs)]
        if finite.size and (finite.min() < 0.0 or finite.max() > 1.0):
            raise ArgumentError("probabilities must lie in [0, 1] on valid pixels")

    def valid_mask(self) -> np.ndarray:
        return ~np.isnan(self.probs)

    def to_scene(self) -> SceneRaster:
        """Single-band raster view, for file export and date stacking."""
        return SceneRaster(self.grid, [Band("prob", self.probs)], self.date)


@dataclasses.dataclass(frozen=True)
class DetectionRaster:
    """Binary detections after thresholding."""

    grid: GeoGrid
    detected: np.ndarray  # bool plane
    threshold_used: float
    valid: np.ndarray  # bool plane; False where the source pixel was nodata


def predict_baseline(q: BandQuad, w: BaselineWeights) -> ProbabilityRaster:
    """Logistic score over bands plus NDVI/FDI; NaN inputs stay NaN."""
    if q.date is None:
        raise ArgumentError("band quad carries no acquisition date")
    features = {
        "red": q.red,
        "re2": q.re2,
        "nir": q.nir,
        "swir1": q.swir1,
        "ndvi": ndvi(q).values,
        "fdi": fdi(q).values,
    }
    z = np.full(q.grid.shape, w.bias, dtype=np.float64)
    for name in BASELINE_FEATURES:
        z += w.coefficients[name] * features[name].astype(np.float64)
    with np.errstate(over="ignore"):
        p = 1.0 / (1.0 + np.exp(-z))
    return ProbabilityRaster(q.grid, p.astype(np.float32), q.date, "baseline")


def ingest_probability(path: str | Path, date: datetime.date) -> ProbabilityRaster:
    """Load an externally produced single-band probability raster.

    Values straying from [0, 1] by more than ``INGEST_TOLERANCE`` are a
    data fault; smaller excursions (float noise) are clamped.
    """
    raster = raster_io.read_raster(path, default_date=date)
    if len(raster.bands) != 1:
        raise FormatError(
            f"{path} holds {len(raster.bands)} bands; probability rasters have exactly one"
        )
    probs = raster.bands[0].values.astype(np.float32)
    if not math.isnan(raster.nodata):
        probs = np.where(probs == raster.nodata, np.nan, probs)
    finite = probs[~np.isnan(probs)]
    if finite.size:
        low, high = float(finite.min()), float(finite.max())
        if low < -INGEST_TOLERANCE or high > 1.0 + INGEST_TOLERANCE:
            raise IntegrityError(
                f"{path} holds probabilities outside [0, 1]: range [{low}, {high}]"
            )
    probs = np.clip(probs, 0.0, 1.0)
    return ProbabilityRaster(raster.grid, probs, date, "external")


def threshold(p: ProbabilityRaster, t: ThresholdPreset) -> DetectionRaster:
    """Mark pixels with probability >= the preset value as detections.

    The boundary counts as a detection, so the strict preset still fires on
    pixels sitting exactly at its value.  Nodata pixels are invalid and
    never detected.
    """
    valid = p.valid_mask()
    detected = np.zeros(p.grid.shape, dtype=bool)
    detected[valid] = p.probs[valid] >= t.value
    return DetectionRaster(p.grid, detected, t.value, valid)
