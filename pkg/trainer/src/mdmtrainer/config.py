"""Training configuration.

One frozen dataclass carries everything a run needs; its canonical JSON
hash names the artifact set so reruns with identical settings are
recognisable.
"""

import dataclasses
import hashlib
import json
from pathlib import Path

from .errors import ConfigError

DEFAULT_BANDS = (4, 6, 8, 11)
DEFAULT_FEATURES = (64, 128, 256, 512)


@dataclasses.dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters and paths for one training run.

    ``bands`` are satellite band numbers (red, red-edge 2, NIR, SWIR 1 by
    default); ``encoder_features`` are the channel widths of the four
    encoder stages, last one the bottleneck.
    """

    dataset_root: Path
    output_dir: Path
    bands: tuple = DEFAULT_BANDS
    encoder_features: tuple = DEFAULT_FEATURES
    batch_size: int = 64
    patch_size: int = 32
    epochs: int = 10
    learning_rate: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "dataset_root", Path(self.dataset_root))
        object.__setattr__(self, "output_dir", Path(self.output_dir))
        object.__setattr__(self, "bands", tuple(int(b) for b in self.bands))
        object.__setattr__(
            self, "encoder_features", tuple(int(f) for f in self.encoder_features)
        )
        if len(self.bands) != 4:
            raise ConfigError(f"exactly 4 input bands required, got {list(self.bands)}")
        if len(set(self.bands)) != 4:
            raise ConfigError(f"duplicate band numbers: {list(self.bands)}")
        for b in self.bands:
            if not 1 <= b <= 12:
                raise ConfigError(f"band number {b} outside 1..12")
        feats = self.encoder_features
        if len(feats) < 2 or any(b <= a for a, b in zip(feats, feats[1:])):
            raise ConfigError(
                f"encoder_features must be strictly increasing, got {list(feats)}"
            )
        if any(f < 1 for f in feats):
            raise ConfigError(f"encoder widths must be positive, got {list(feats)}")
        for name in ("batch_size", "patch_size", "epochs", "seed"):
            if int(getattr(self, name)) < (0 if name == "seed" else 1):
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.patch_size % 8 != 0:
            # three pooling stages each halve the window
            raise ConfigError(f"patch_size must be divisible by 8, got {self.patch_size}")
        if not self.learning_rate > 0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")

    def as_dict(self) -> dict:
        return {
            "dataset_root": str(self.dataset_root),
            "output_dir": str(self.output_dir),
            "bands": list(self.bands),
            "encoder_features": list(self.encoder_features),
            "batch_size": self.batch_size,
            "patch_size": self.patch_size,
            "epochs": self.epochs,
            "learning_rate": self.learning_rate,
            "seed": self.seed,
        }

    def config_hash(self) -> str:
        canon = json.dumps(self.as_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canon.encode()).hexdigest()
