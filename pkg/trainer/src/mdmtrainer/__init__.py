"""Segmentation-network training for the debris-mapping pipeline.

Trains a four-band encoder-decoder on the annotated patch corpus,
selects operating thresholds off the validation PR curve with the same
rules the pipeline's evaluation module applies, and exports whole-scene
probability rasters in the pipeline's interop format.
"""

from .config import DEFAULT_BANDS, DEFAULT_FEATURES, TrainConfig
from .dataset import BandStats, MaridaPatches, band_stats, load_marida, stack_index
from .errors import ConfigError, DatasetError, ExportError, TrainerError, TrainingError
from .export import BAND_NAME_BY_NUMBER, DEFAULT_OVERLAP, export_probabilities
from .model import UNet, stage_widths
from .train import TrainedModel, build_model, load_archive, train

__version__ = "0.1.0"
