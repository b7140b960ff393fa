"""Annotated-patch dataset reader.

Layout on disk, as published: ``patches/<scene>/<scene>_<k>.tif`` holds a
13-band reflectance stack (B1-B8, B8A, B9-B12), ``<scene>_<k>_cl.tif``
the integer class labels, and ``splits/{train,val,test}_X.txt`` list the
patch names belonging to each split.

Labels collapse to a binary target: class 1, the debris annotation, is
positive; every other class, including unannotated 0, is background.
Per-band normalisation statistics always come from the train split, no
matter which split is being loaded.
"""

import dataclasses
from pathlib import Path

import numpy as np
import tifffile
import torch

from .config import DEFAULT_BANDS
from .errors import DatasetError

S2_STACK_BANDS = 13
POSITIVE_CLASSES = (1,)
STD_FLOOR = 1e-6  # constant bands divide by this instead of zero


def stack_index(band: int) -> int:
    """Position of satellite band ``band`` in the 13-band patch stack.

    The stack interleaves B8A between B8 and B9, so bands 9-12 sit one
    slot later than their number suggests.  B8A itself has no integer
    name and is not addressable here.
    """
    if not 1 <= band <= 12:
        raise DatasetError(f"band number {band} outside 1..12")
    return band - 1 if band <= 8 else band


@dataclasses.dataclass(frozen=True)
class BandStats:
    """Per-channel normalisation constants, in configured band order."""

    mean: np.ndarray  # (channels,)
    std: np.ndarray  # (channels,), floored away from zero

    def as_dict(self) -> dict:
        return {"mean": [float(v) for v in self.mean],
                "std": [float(v) for v in self.std]}

    @classmethod
    def from_dict(cls, doc: dict) -> "BandStats":
        return cls(np.asarray(doc["mean"], dtype=np.float64),
                   np.asarray(doc["std"], dtype=np.float64))


def _read_split(root: Path, split: str) -> list[str]:
    if split not in ("train", "val", "test"):
        raise DatasetError(f"unknown split {split!r} (expected train, val, or test)")
    path = root / "splits" / f"{split}_X.txt"
    if not path.is_file():
        raise DatasetError(f"split file not found: {path}")
    names = [line.strip() for line in path.read_text().splitlines() if line.strip()]
    if not names:
        raise DatasetError(f"split file {path} lists no patches")
    return names


def _patch_paths(root: Path, name: str) -> tuple[Path, Path]:
    scene = name.rsplit("_", 1)[0]
    folder = root / "patches" / scene
    return folder / f"{name}.tif", folder / f"{name}_cl.tif"


def _read_bands(path: Path, channels: list[int]) -> np.ndarray:
    try:
        stack = tifffile.imread(path)
    except (OSError, ValueError, tifffile.TiffFileError) as exc:
        raise DatasetError(f"unreadable patch file {path}: {exc}") from exc
    stack = np.asarray(stack)
    if stack.ndim != 3:
        raise DatasetError(f"patch file {path} is not a band stack (shape {stack.shape})")
    if stack.shape[0] != S2_STACK_BANDS:
        if stack.shape[-1] == S2_STACK_BANDS:  # pixel-interleaved variant
            stack = np.moveaxis(stack, -1, 0)
        else:
            raise DatasetError(
                f"patch file {path} has {stack.shape[0]} bands, expected {S2_STACK_BANDS}"
            )
    return stack[channels].astype(np.float32)


def _read_labels(path: Path) -> np.ndarray:
    try:
        labels = tifffile.imread(path)
    except (OSError, ValueError, tifffile.TiffFileError) as exc:
        raise DatasetError(f"unreadable label file {path}: {exc}") from exc
    labels = np.asarray(labels)
    if labels.ndim == 3 and labels.shape[0] == 1:
        labels = labels[0]
    if labels.ndim != 2:
        raise DatasetError(f"label file {path} is not a single plane (shape {labels.shape})")
    return labels.astype(np.int64)


def band_stats(root, bands=DEFAULT_BANDS) -> BandStats:
    """Mean and standard deviation per configured band over the train split."""
    root = Path(root)
    channels = [stack_index(b) for b in bands]
    n = np.zeros(len(channels))
    total = np.zeros(len(channels))
    total_sq = np.zeros(len(channels))
    for name in _read_split(root, "train"):
        img_path, _ = _patch_paths(root, name)
        planes = _read_bands(img_path, channels).astype(np.float64)
        finite = np.isfinite(planes)
        planes = np.where(finite, planes, 0.0)
        n += finite.sum(axis=(1, 2))
        total += planes.sum(axis=(1, 2))
        total_sq += (planes * planes).sum(axis=(1, 2))
    if not n.all():
        raise DatasetError("a configured band holds no finite train pixels")
    mean = total / n
    var = np.maximum(total_sq / n - mean * mean, 0.0)
    return BandStats(mean, np.maximum(np.sqrt(var), STD_FLOOR))


class MaridaPatches(torch.utils.data.Dataset):
    """Patches of one split as (4-channel image, binary label) tensors.

    Images are normalised with train-split statistics; non-finite pixels
    become zero afterwards, which is the band mean.
    """

    def __init__(self, root, split, bands=DEFAULT_BANDS, stats=None,
                 positive_classes=POSITIVE_CLASSES):
        self.root = Path(root)
        self.split = split
        self.bands = tuple(bands)
        self.channels = [stack_index(b) for b in self.bands]
        self.positive_classes = tuple(positive_classes)
        self.names = _read_split(self.root, split)
        self.stats = stats if stats is not None else band_stats(self.root, self.bands)

    def __len__(self) -> int:
        return len(self.names)

    def __getitem__(self, index: int):
        img_path, lbl_path = _patch_paths(self.root, self.names[index])
        planes = _read_bands(img_path, self.channels).astype(np.float64)
        planes = (planes - self.stats.mean[:, None, None]) / self.stats.std[:, None, None]
        planes = np.where(np.isfinite(planes), planes, 0.0)
        labels = _read_labels(lbl_path)
        if labels.shape != planes.shape[1:]:
            raise DatasetError(
                f"label plane {lbl_path} shape {labels.shape} does not match "
                f"patch shape {planes.shape[1:]}"
            )
        target = np.isin(labels, self.positive_classes).astype(np.float32)
        return (torch.from_numpy(planes.astype(np.float32)),
                torch.from_numpy(target))


def load_marida(root, split, bands=DEFAULT_BANDS, stats=None) -> MaridaPatches:
    """Open one split of the annotated-patch corpus."""
    return MaridaPatches(root, split, bands=bands, stats=stats)
