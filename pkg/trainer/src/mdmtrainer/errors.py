"""Exception hierarchy for the trainer package."""


class TrainerError(Exception):
    """Base class for every error this package raises on purpose."""


class ConfigError(TrainerError):
    """Training configuration violates an invariant."""


class DatasetError(TrainerError):
    """Dataset layout, split list, or patch file is unusable."""


class TrainingError(TrainerError):
    """Training diverged or could not produce a usable model."""


class ExportError(TrainerError):
    """Scene cannot be turned into a probability raster."""
