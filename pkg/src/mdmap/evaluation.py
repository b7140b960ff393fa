"""Segmentation metrics, precision-recall curves and threshold selection.

Conventions, chosen once and used everywhere:

* any 0/0 metric ratio is 0, never 1 — conservative under heavy class
  imbalance, where the negative class dominates;
* mean IoU and the macro averages run over classes that actually occur
  in the reference, so absent classes cannot inflate scores;
* overall precision and F1 are emitted both micro- and macro-averaged,
  explicitly labelled.
"""

from __future__ import annotations

import dataclasses
import json
from typing import NamedTuple, Sequence

import numpy as np

from .errors import DegenerateCurveError, LabelError, NoSolutionError
from .predict import ProbabilityRaster, ThresholdPreset
from .raster import ArgumentError


class ConfusionMatrix(NamedTuple):
    """Square count matrix: rows index reference class, columns predicted."""

    labels: tuple
    counts: np.ndarray

    def total(self) -> int:
        return int(self.counts.sum())


@dataclasses.dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    iou: float


@dataclasses.dataclass(frozen=True)
class MetricSet:
    per_class: dict
    miou: float
    precision_micro: float
    precision_macro: float
    f1_micro: float
    f1_macro: float

    def as_dict(self) -> dict:
        return {
            "per_class": {
                str(label): dataclasses.asdict(m) for label, m in self.per_class.items()
            },
            "overall": {
                "miou": self.miou,
                "precision_micro": self.precision_micro,
                "precision_macro": self.precision_macro,
                "f1_micro": self.f1_micro,
                "f1_macro": self.f1_macro,
            },
        }


class PRPoint(NamedTuple):
    threshold: float
    precision: float
    recall: float
    f1: float


@dataclasses.dataclass(frozen=True)
class PRCurve:
    """Operating points sorted by strictly increasing threshold."""

    points: tuple

    def __post_init__(self):
        ts = [p.threshold for p in self.points]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ArgumentError("curve thresholds must be strictly increasing")

    def __len__(self) -> int:
        return len(self.points)


def confusion(pred, ref, labels: Sequence, valid: np.ndarray | None = None) -> ConfusionMatrix:
    """Count reference-vs-predicted label pairs over valid pixels."""
    pred = np.asarray(pred)
    ref = np.asarray(ref)
    if pred.shape != ref.shape:
        raise ArgumentError(f"plane shapes differ: {pred.shape} vs {ref.shape}")
    labels = tuple(labels)
    if len(labels) == 0 or len(set(labels)) != len(labels):
        raise ArgumentError("labels must be a nonempty list without duplicates")
    if valid is None:
        valid = np.ones(pred.shape, dtype=bool)
    elif valid.shape != pred.shape:
        raise ArgumentError("validity mask shape mismatch")
    p = pred[valid]
    r = ref[valid]
    index = {label: i for i, label in enumerate(labels)}
    k = len(labels)
    counts = np.zeros((k, k), dtype=np.int64)
    # Map plane values onto label indices; anything unmapped is an error.
    pi = np.full(p.shape, -1, dtype=np.int64)
    ri = np.full(r.shape, -1, dtype=np.int64)
    for label, i in index.items():
        pi[p == label] = i
        ri[r == label] = i
    if np.any(pi < 0):
        bad = sorted(set(np.unique(p[pi < 0]).tolist()))
        raise LabelError(f"predicted plane contains labels outside the list: {bad}")
    if np.any(ri < 0):
        bad = sorted(set(np.unique(r[ri < 0]).tolist()))
        raise LabelError(f"reference plane contains labels outside the list: {bad}")
    np.add.at(counts, (ri, pi), 1)
    return ConfusionMatrix(labels, counts)


def _ratio(num: float, den: float) -> float:
    return num / den if den > 0 else 0.0


def metrics(cm: ConfusionMatrix) -> MetricSet:
    """Per-class precision/recall/F1/IoU plus labelled overall averages."""
    counts = np.asarray(cm.counts, dtype=np.int64)
    if counts.size == 0 or counts.sum() == 0:
        raise ArgumentError("confusion matrix holds no evaluated pixels")
    if np.any(counts < 0):
        raise ArgumentError("confusion counts must be nonnegative")
    tp = np.diag(counts).astype(np.float64)
    ref_totals = counts.sum(axis=1).astype(np.float64)
    pred_totals = counts.sum(axis=0).astype(np.float64)
    fp = pred_totals - tp
    fn = ref_totals - tp

    per_class = {}
    present = ref_totals > 0
    for i, label in enumerate(cm.labels):
        p = _ratio(tp[i], tp[i] + fp[i])
        r = _ratio(tp[i], tp[i] + fn[i])
        f1 = _ratio(2.0 * p * r, p + r)
        iou = _ratio(tp[i], tp[i] + fp[i] + fn[i])
        per_class[label] = ClassMetrics(p, r, f1, iou)

    present_labels = [label for i, label in enumerate(cm.labels) if present[i]]
    miou = float(np.mean([per_class[c].iou for c in present_labels]))
    precision_macro = float(np.mean([per_class[c].precision for c in present_labels]))
    f1_macro = float(np.mean([per_class[c].f1 for c in present_labels]))
    # Micro precision over single-label planes collapses to accuracy.
    micro_p = _ratio(tp.sum(), tp.sum() + fp.sum())
    micro_r = _ratio(tp.sum(), tp.sum() + fn.sum())
    f1_micro = _ratio(2.0 * micro_p * micro_r, micro_p + micro_r)
    return MetricSet(per_class, miou, micro_p, precision_macro, f1_micro, f1_macro)


def _flatten_curve_inputs(probs, refs):
    if isinstance(probs, ProbabilityRaster):
        probs = [probs]
        refs = [refs]
    if isinstance(probs, (list, tuple)) and probs and isinstance(probs[0], ProbabilityRaster):
        chunks_p, chunks_y = [], []
        if len(refs) != len(probs):
            raise ArgumentError("need one reference plane per probability raster")
        for pr, rf in zip(probs, refs):
            rf = np.asarray(rf)
            if rf.shape != pr.probs.shape:
                raise ArgumentError("reference plane shape mismatch")
            keep = pr.valid_mask()
            chunks_p.append(pr.probs[keep])
            chunks_y.append(rf[keep])
        p = np.concatenate(chunks_p) if chunks_p else np.empty(0)
        y = np.concatenate(chunks_y) if chunks_y else np.empty(0)
    else:
        p = np.asarray(probs, dtype=np.float64).ravel()
        y = np.asarray(refs).ravel()
        if p.shape != y.shape:
            raise ArgumentError("probability and label lists differ in length")
    p = np.asarray(p, dtype=np.float64)
    y = np.asarray(y)
    if p.size == 0:
        raise ArgumentError("no evaluated pixels")
    if np.any(~np.isfinite(p)) or p.min() < 0.0 or p.max() > 1.0:
        raise ArgumentError("probabilities must be finite and within [0, 1]")
    y = (y != 0)
    return p, y


def pr_curve(probs, refs, steps: int = 50) -> PRCurve:
    """Sweep detection thresholds and record (t, precision, recall, F1).

    Thresholds are ``steps`` evenly spaced values inside (0, 1) plus every
    distinct probability value that falls strictly inside the unit
    interval, so each achievable operating point appears on the curve.
    """
    if steps < 2:
        raise ArgumentError("need at least 2 threshold steps")
    p, y = _flatten_curve_inputs(probs, refs)
    if not np.any(y):
        raise DegenerateCurveError("reference contains no positive pixels")

    grid = np.linspace(0.0, 1.0, steps + 2)[1:-1]
    distinct = np.unique(p)
    distinct = distinct[(distinct > 0.0) & (distinct < 1.0)]
    thresholds = np.unique(np.concatenate([grid, distinct]))

    order = np.argsort(p, kind="stable")
    ps = p[order]
    cum_pos = np.concatenate([[0], np.cumsum(y[order])])
    total_pos = float(cum_pos[-1])

    points = []
    for t in thresholds:
        i = int(np.searchsorted(ps, t, side="left"))
        detected = ps.size - i
        tp = total_pos - float(cum_pos[i])
        precision = _ratio(tp, float(detected))
        recall = _ratio(tp, total_pos)
        f1 = _ratio(2.0 * precision * recall, precision + recall)
        points.append(PRPoint(float(t), precision, recall, f1))
    return PRCurve(tuple(points))


def select_threshold(curve: PRCurve, objective: str = "max_f1", *,
                     min_precision: float | None = None) -> ThresholdPreset:
    """Pick an operating threshold off a PR curve.

    ``max_f1`` returns the highest-F1 point, breaking ties toward the
    higher threshold.  ``min_precision`` returns the lowest threshold
    whose precision reaches ``min_precision``.
    """
    if len(curve) == 0:
        raise ArgumentError("cannot select a threshold from an empty curve")
    if objective == "max_f1":
        best = max(curve.points, key=lambda pt: (pt.f1, pt.threshold))
        return ThresholdPreset.custom(best.threshold)
    if objective == "min_precision":
        if min_precision is None:
            raise ArgumentError("min_precision objective needs a target value")
        for pt in curve.points:
            if pt.precision >= min_precision:
                return ThresholdPreset.custom(pt.threshold)
        raise NoSolutionError(
            f"no threshold reaches precision {min_precision}"
        )
    raise ArgumentError(f"unknown objective: {objective!r}")


def report_json(ms: MetricSet) -> str:
    return json.dumps(ms.as_dict(), indent=2, sort_keys=True)


def format_table(ms: MetricSet) -> str:
    """Fixed-width text table: one block per class, then the overall block."""
    rows = [f"{'class':<14}{'iou':>8}{'precision':>11}{'recall':>8}{'f1':>8}"]
    for label, m in ms.per_class.items():
        rows.append(
            f"{str(label):<14}{m.iou:>8.4f}{m.precision:>11.4f}"
            f"{m.recall:>8.4f}{m.f1:>8.4f}"
        )
    rows.append("")
    rows.append("overall")
    rows.append(f"{'miou':<22}{ms.miou:>8.4f}")
    rows.append(f"{'precision (micro)':<22}{ms.precision_micro:>8.4f}")
    rows.append(f"{'precision (macro)':<22}{ms.precision_macro:>8.4f}")
    rows.append(f"{'f1 (micro)':<22}{ms.f1_micro:>8.4f}")
    rows.append(f"{'f1 (macro)':<22}{ms.f1_macro:>8.4f}")
    return "\n".join(rows)
