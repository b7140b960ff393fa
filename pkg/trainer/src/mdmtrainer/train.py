"""Training loop, validation-curve threshold selection, artifact layout.

Loss, optimiser, and augmentation are not pinned by the methodology this
reproduces, so the choices here (class-weighted binary cross-entropy,
adaptive-moment updates, window/flip/rotation augmentation) are recorded
in the exported metadata rather than hidden in code.
"""

import dataclasses
import json
import math
from pathlib import Path

import numpy as np
import torch
from torch import nn

from mdmap import (
    DegenerateCurveError,
    NoSolutionError,
    PRCurve,
    PRPoint,
    confusion,
    metrics,
    pr_curve,
    report_json,
    select_threshold,
)

from .config import TrainConfig
from .dataset import BandStats, band_stats, load_marida
from .errors import TrainingError
from .model import UNet

HP_MIN_PRECISION = 0.95
MAX_POS_WEIGHT = 1e4

ASSUMPTIONS = {
    "loss": "binary cross-entropy on logits, positive class weighted by inverse frequency",
    "optimizer": "adaptive moment estimation at the configured learning rate",
    "augmentation": "random windows plus flips and quarter rotations",
    "split_handling": "published split lists taken as-is; normalisation from the train split only",
    "target": "class 1 against everything else, unannotated pixels counted as background",
}


@dataclasses.dataclass
class TrainedModel:
    """A trained network plus everything needed to apply it elsewhere."""

    model: UNet
    config: TrainConfig
    config_hash: str
    normalization: BandStats
    pr_curve: PRCurve
    thresholds: dict  # {"opt": float, "hp": float | None}
    archive_path: Path


def build_model(config: TrainConfig) -> UNet:
    """Seeded network construction: one seed, one set of initial weights."""
    torch.manual_seed(config.seed)
    return UNet(in_channels=len(config.bands), features=config.encoder_features)


def _ensure_finite(value: float, context: str) -> None:
    if not math.isfinite(value):
        raise TrainingError(f"loss became non-finite {context}")


def _augmented_windows(images, labels, window, gen):
    """One random window and dihedral op per sample in the batch."""
    n, _, h, w = images.shape
    if h < window or w < window:
        raise TrainingError(f"patches of {(h, w)} are smaller than the {window} px window")
    out_img, out_lbl = [], []
    for k in range(n):
        r = int(torch.randint(0, h - window + 1, (1,), generator=gen))
        c = int(torch.randint(0, w - window + 1, (1,), generator=gen))
        img = images[k, :, r : r + window, c : c + window]
        lbl = labels[k, r : r + window, c : c + window]
        quarter = int(torch.randint(0, 4, (1,), generator=gen))
        img = torch.rot90(img, quarter, (-2, -1))
        lbl = torch.rot90(lbl, quarter, (-2, -1))
        if int(torch.randint(0, 2, (1,), generator=gen)):
            img = torch.flip(img, (-1,))
            lbl = torch.flip(lbl, (-1,))
        out_img.append(img)
        out_lbl.append(lbl)
    return torch.stack(out_img), torch.stack(out_lbl)


def _positive_weight(train_ds) -> float:
    pos = 0.0
    total = 0
    for _, lbl in train_ds:
        pos += float(lbl.sum())
        total += lbl.numel()
    if pos == 0.0:
        return 1.0
    return float(min(max((total - pos) / pos, 1.0), MAX_POS_WEIGHT))


def _validation_scores(model: UNet, val_ds):
    model.eval()
    probs, refs = [], []
    with torch.no_grad():
        for image, label in val_ds:
            p = model.predict_proba(image[None])[0, 0]
            probs.append(p.numpy().ravel().astype(np.float64))
            refs.append(label.numpy().ravel().astype(np.int64))
    return np.concatenate(probs), np.concatenate(refs)


def train(config: TrainConfig) -> TrainedModel:
    """Fit the network and select operating thresholds on the val split."""
    stats = band_stats(config.dataset_root, config.bands)
    train_ds = load_marida(config.dataset_root, "train", config.bands, stats)
    val_ds = load_marida(config.dataset_root, "val", config.bands, stats)

    model = build_model(config)
    gen = torch.Generator().manual_seed(config.seed)
    loader = torch.utils.data.DataLoader(
        train_ds,
        batch_size=min(config.batch_size, len(train_ds)),
        shuffle=True,
        generator=gen,
    )
    loss_fn = nn.BCEWithLogitsLoss(
        pos_weight=torch.tensor(_positive_weight(train_ds), dtype=torch.float32)
    )
    optimiser = torch.optim.Adam(model.parameters(), lr=config.learning_rate)

    model.train()
    for epoch in range(config.epochs):
        for images, labels in loader:
            images, labels = _augmented_windows(images, labels, config.patch_size, gen)
            loss = loss_fn(model(images)[:, 0], labels)
            _ensure_finite(float(loss.detach()), f"in epoch {epoch + 1}")
            optimiser.zero_grad()
            loss.backward()
            optimiser.step()

    probs, refs = _validation_scores(model, val_ds)
    try:
        curve = pr_curve(probs, refs)
    except DegenerateCurveError as exc:
        raise TrainingError(f"validation split unusable for threshold selection: {exc}") from exc
    opt = select_threshold(curve)
    try:
        hp = select_threshold(curve, "min_precision", min_precision=HP_MIN_PRECISION).value
    except NoSolutionError:
        hp = None  # recorded as such; the strict preset is data-dependent
    thresholds = {"opt": opt.value, "hp": hp}

    archive = _write_artifacts(model, config, stats, curve, thresholds, probs, refs, opt)
    return TrainedModel(
        model=model,
        config=config,
        config_hash=config.config_hash(),
        normalization=stats,
        pr_curve=curve,
        thresholds=thresholds,
        archive_path=archive,
    )


def _write_artifacts(model, config, stats, curve, thresholds, probs, refs, opt):
    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    archive = out / "model.pt"
    torch.save(model.state_dict(), archive)
    (out / "thresholds.json").write_text(json.dumps(
        {
            "config_hash": config.config_hash(),
            "opt": thresholds["opt"],
            "hp": thresholds["hp"],
            "hp_min_precision": HP_MIN_PRECISION,
            "pr_curve": [list(pt) for pt in curve.points],
        },
        indent=2, sort_keys=True,
    ))
    pred = (probs >= opt.value).astype(np.int64)
    (out / "metrics.json").write_text(report_json(metrics(confusion(pred, refs, (0, 1)))))
    (out / "train_config.json").write_text(json.dumps(
        {
            "config": config.as_dict(),
            "config_hash": config.config_hash(),
            "normalization": stats.as_dict(),
            "assumptions": ASSUMPTIONS,
        },
        indent=2, sort_keys=True,
    ))
    return archive


def load_archive(output_dir) -> TrainedModel:
    """Rebuild a trained model from its artifact directory."""
    out = Path(output_dir)
    doc = json.loads((out / "train_config.json").read_text())
    config = TrainConfig(**doc["config"])
    model = UNet(in_channels=len(config.bands), features=config.encoder_features)
    model.load_state_dict(torch.load(out / "model.pt", weights_only=True))
    tdoc = json.loads((out / "thresholds.json").read_text())
    curve = PRCurve(tuple(PRPoint(*pt) for pt in tdoc["pr_curve"]))
    return TrainedModel(
        model=model,
        config=config,
        config_hash=doc["config_hash"],
        normalization=BandStats.from_dict(doc["normalization"]),
        pr_curve=curve,
        thresholds={"opt": tdoc["opt"], "hp": tdoc["hp"]},
        archive_path=out / "model.pt",
    )
