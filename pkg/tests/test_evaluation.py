import datetime
import json

import numpy as np
import pytest

from mdmap import (
    ArgumentError,
    DegenerateCurveError,
    LabelError,
    NoSolutionError,
    PRCurve,
    PRPoint,
    ProbabilityRaster,
    confusion,
    format_table,
    metrics,
    pr_curve,
    report_json,
    select_threshold,
)

from support import make_grid


class TestConfusion:
    def test_binary_hand_example(self):
        ref = np.array([1, 1, 1, 0])
        pred = np.array([1, 1, 0, 1])
        cm = confusion(pred, ref, labels=(0, 1))
        # rows = reference, cols = predicted
        assert cm.counts.tolist() == [[0, 1], [1, 2]]
        assert cm.total() == 4

    def test_matches_pair_counting_oracle(self, rng):
        for _ in range(25):
            k = int(rng.integers(2, 5))
            labels = tuple(range(k))
            h, w = int(rng.integers(1, 17)), int(rng.integers(1, 17))
            ref = rng.integers(0, k, (h, w))
            pred = rng.integers(0, k, (h, w))
            cm = confusion(pred, ref, labels)
            expect = np.zeros((k, k), np.int64)
            for i in range(h):
                for j in range(w):
                    expect[ref[i, j], pred[i, j]] += 1
            np.testing.assert_array_equal(cm.counts, expect)

    def test_validity_mask_restricts(self):
        ref = np.array([[1, 1], [0, 0]])
        pred = np.array([[1, 0], [0, 1]])
        valid = np.array([[True, False], [True, False]])
        cm = confusion(pred, ref, (0, 1), valid=valid)
        assert cm.total() == 2
        assert cm.counts.tolist() == [[1, 0], [0, 1]]

    def test_foreign_label_raises(self):
        with pytest.raises(LabelError, match="predicted"):
            confusion(np.array([0, 9]), np.array([0, 1]), (0, 1))
        with pytest.raises(LabelError, match="reference"):
            confusion(np.array([0, 1]), np.array([0, 7]), (0, 1))

    def test_shape_and_label_validation(self):
        with pytest.raises(ArgumentError):
            confusion(np.zeros(3), np.zeros(4), (0,))
        with pytest.raises(ArgumentError):
            confusion(np.zeros(3), np.zeros(3), ())
        with pytest.raises(ArgumentError):
            confusion(np.zeros(3), np.zeros(3), (0, 0))


def brute_metrics(counts, labels):
    """Definition-level re-derivation from TP/FP/FN pair counts."""
    out = {}
    for i, label in enumerate(labels):
        tp = counts[i][i]
        fp = sum(counts[r][i] for r in range(len(labels))) - tp
        fn = sum(counts[i][c] for c in range(len(labels))) - tp
        p = tp / (tp + fp) if tp + fp else 0.0
        r = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * p * r / (p + r) if p + r else 0.0
        iou = tp / (tp + fp + fn) if tp + fp + fn else 0.0
        out[label] = (p, r, f1, iou, tp + fn > 0)
    return out


class TestMetrics:
    def test_hand_example(self):
        # TP=2, FP=1, FN=1 for the debris class
        cm = confusion(np.array([1, 1, 0, 1]), np.array([1, 1, 1, 0]), (0, 1))
        ms = metrics(cm)
        debris = ms.per_class[1]
        assert debris.precision == pytest.approx(2 / 3, abs=1e-9)
        assert debris.recall == pytest.approx(2 / 3, abs=1e-9)
        assert debris.f1 == pytest.approx(2 / 3, abs=1e-9)
        assert debris.iou == pytest.approx(0.5, abs=1e-9)

    def test_matches_brute_force(self, rng):
        for _ in range(25):
            k = int(rng.integers(2, 5))
            labels = tuple(range(k))
            ref = rng.integers(0, k, (12, 12))
            pred = rng.integers(0, k, (12, 12))
            cm = confusion(pred, ref, labels)
            ms = metrics(cm)
            expect = brute_metrics(cm.counts.tolist(), labels)
            present = [c for c in labels if expect[c][4]]
            for label in labels:
                p, r, f1, iou, _ = expect[label]
                assert ms.per_class[label].precision == pytest.approx(p, abs=1e-12)
                assert ms.per_class[label].recall == pytest.approx(r, abs=1e-12)
                assert ms.per_class[label].f1 == pytest.approx(f1, abs=1e-12)
                assert ms.per_class[label].iou == pytest.approx(iou, abs=1e-12)
            assert ms.miou == pytest.approx(
                np.mean([expect[c][3] for c in present]), abs=1e-12
            )
            assert ms.f1_macro == pytest.approx(
                np.mean([expect[c][2] for c in present]), abs=1e-12
            )

    def test_micro_precision_is_accuracy(self, rng):
        ref = rng.integers(0, 3, 200)
        pred = rng.integers(0, 3, 200)
        ms = metrics(confusion(pred, ref, (0, 1, 2)))
        assert ms.precision_micro == pytest.approx(np.mean(pred == ref), abs=1e-12)

    def test_imbalance_shows_micro_macro_gap(self):
        # 4000 negatives, 4 positives; the classifier adds two spurious
        # positives: micro precision (accuracy) barely moves while the
        # macro figure exposes the weak class.
        ref = np.zeros(4004, np.int64)
        ref[:4] = 1
        pred = ref.copy()
        pred[4] = 1
        pred[5] = 1
        ms = metrics(confusion(pred, ref, (0, 1)))
        assert ms.precision_micro > 0.999
        assert ms.precision_macro < 0.92  # (1.0 + 4/6) / 2

    def test_absent_reference_class_excluded_from_averages(self):
        # class 2 never appears in the reference: averages cover 0 and 1
        ref = np.array([0, 0, 1, 1])
        pred = np.array([0, 2, 1, 1])
        ms = metrics(confusion(pred, ref, (0, 1, 2)))
        iou0 = ms.per_class[0].iou  # TP=1, FP=0, FN=1
        iou1 = ms.per_class[1].iou
        assert ms.miou == pytest.approx((iou0 + iou1) / 2, abs=1e-12)

    def test_empty_matrix_rejected(self):
        from mdmap import ConfusionMatrix

        with pytest.raises(ArgumentError):
            metrics(ConfusionMatrix((0, 1), np.zeros((2, 2), np.int64)))

    def test_zero_over_zero_is_zero(self):
        # predicted-only class: recall 0/0 -> 0 by convention
        ref = np.array([0, 0])
        pred = np.array([1, 0])
        ms = metrics(confusion(pred, ref, (0, 1)))
        assert ms.per_class[1].recall == 0.0
        assert ms.per_class[1].precision == 0.0
        assert ms.per_class[1].f1 == 0.0


class TestPrCurve:
    def test_hand_point(self):
        curve = pr_curve([0.2, 0.6, 0.9], [0, 1, 1], steps=3)
        at_half = [p for p in curve.points if p.threshold == 0.5][0]
        assert at_half.precision == 1.0
        assert at_half.recall == 1.0
        assert at_half.f1 == 1.0

    def test_high_threshold_convention(self):
        curve = pr_curve([0.2, 0.3], [1, 1], steps=4)
        top = curve.points[-1]
        assert top.threshold > 0.3
        assert top.recall == 0.0
        assert top.precision == 0.0  # no detections at all
        assert top.f1 == 0.0

    def test_thresholds_strictly_increasing_and_complete(self):
        curve = pr_curve([0.25, 0.5, 0.77], [1, 0, 1], steps=10)
        ts = [p.threshold for p in curve.points]
        assert ts == sorted(set(ts))
        assert 0.25 in ts and 0.77 in ts  # distinct probs joined the grid
        assert all(0.0 < t < 1.0 for t in ts)

    def test_recall_non_increasing(self, rng):
        probs = rng.uniform(0, 1, 300)
        refs = rng.integers(0, 2, 300)
        curve = pr_curve(probs, refs, steps=40)
        recalls = [p.recall for p in curve.points]
        assert all(a >= b for a, b in zip(recalls, recalls[1:]))

    def test_matches_direct_sweep(self, rng):
        probs = rng.uniform(0, 1, 250)
        refs = rng.integers(0, 2, 250).astype(bool)
        curve = pr_curve(probs, refs, steps=25)
        for pt in curve.points:
            detected = probs >= pt.threshold
            tp = float(np.sum(detected & refs))
            fp = float(np.sum(detected & ~refs))
            fn = float(np.sum(~detected & refs))
            precision = tp / (tp + fp) if tp + fp else 0.0
            recall = tp / (tp + fn) if tp + fn else 0.0
            assert pt.precision == pytest.approx(precision, abs=1e-12)
            assert pt.recall == pytest.approx(recall, abs=1e-12)

    def test_probability_raster_input(self, rng):
        grid = make_grid(width=6, height=6)
        probs = rng.uniform(0, 1, grid.shape).astype(np.float32)
        probs[0, 0] = np.nan  # masked pixel must drop out
        pr = ProbabilityRaster(grid, probs, datetime.date(2021, 6, 1), "external")
        refs = rng.integers(0, 2, grid.shape)
        refs[1, :] = 1  # guarantee positives
        curve = pr_curve(pr, refs, steps=10)
        flat_p = probs[~np.isnan(probs)]
        flat_y = refs[~np.isnan(probs)]
        direct = pr_curve(flat_p, flat_y, steps=10)
        assert curve.points == direct.points

    def test_no_positives_degenerate(self):
        with pytest.raises(DegenerateCurveError):
            pr_curve([0.1, 0.9], [0, 0], steps=5)

    def test_bad_inputs(self):
        with pytest.raises(ArgumentError):
            pr_curve([0.5], [1], steps=1)
        with pytest.raises(ArgumentError):
            pr_curve([1.5], [1], steps=5)
        with pytest.raises(ArgumentError):
            pr_curve([0.5, 0.6], [1], steps=5)

    def test_curve_requires_increasing_thresholds(self):
        a = PRPoint(0.2, 1.0, 1.0, 1.0)
        b = PRPoint(0.1, 1.0, 0.5, 2 / 3)
        with pytest.raises(ArgumentError):
            PRCurve((a, b))


class TestSelectThreshold:
    def _curve(self, triples):
        pts = tuple(
            PRPoint(t, p, r, 2 * p * r / (p + r) if p + r else 0.0)
            for t, p, r in triples
        )
        return PRCurve(pts)

    def test_max_f1_picks_argmax(self):
        curve = self._curve([(0.2, 0.50, 1.0), (0.5, 0.80, 0.9), (0.8, 0.95, 0.4)])
        preset = select_threshold(curve)
        assert preset.name == "custom"
        assert preset.value == 0.5

    def test_flat_f1_breaks_to_highest_threshold(self):
        curve = self._curve([(0.3, 0.8, 0.8), (0.6, 0.8, 0.8), (0.9, 0.5, 0.5)])
        assert select_threshold(curve).value == 0.6

    def test_min_precision_picks_lowest_qualifying(self):
        curve = self._curve([(0.2, 0.50, 1.0), (0.5, 0.96, 0.9), (0.8, 0.97, 0.4)])
        preset = select_threshold(curve, "min_precision", min_precision=0.95)
        assert preset.value == 0.5

    def test_min_precision_unreachable(self):
        curve = self._curve([(0.2, 0.50, 1.0), (0.8, 0.60, 0.4)])
        with pytest.raises(NoSolutionError):
            select_threshold(curve, "min_precision", min_precision=0.95)

    def test_agrees_with_brute_force_on_random_curves(self, rng):
        probs = rng.uniform(0, 1, 400)
        refs = (rng.uniform(size=400) < probs).astype(int)  # calibrated
        curve = pr_curve(probs, refs, steps=30)
        best = select_threshold(curve)
        expect = max(curve.points, key=lambda pt: (pt.f1, pt.threshold))
        assert best.value == expect.threshold

    def test_bad_requests(self):
        curve = self._curve([(0.5, 1.0, 1.0)])
        with pytest.raises(ArgumentError):
            select_threshold(curve, "nonsense")
        with pytest.raises(ArgumentError):
            select_threshold(curve, "min_precision")
        with pytest.raises(ArgumentError):
            select_threshold(PRCurve(()), "max_f1")


class TestReports:
    def _ms(self):
        return metrics(confusion(np.array([1, 1, 0, 1]), np.array([1, 1, 1, 0]), (0, 1)))

    def test_json_round_trips(self):
        doc = json.loads(report_json(self._ms()))
        assert doc["per_class"]["1"]["iou"] == pytest.approx(0.5)
        assert set(doc["overall"]) == {
            "miou", "precision_micro", "precision_macro", "f1_micro", "f1_macro"
        }

    def test_table_layout(self):
        table = format_table(self._ms())
        lines = table.splitlines()
        assert lines[0].split() == ["class", "iou", "precision", "recall", "f1"]
        assert "overall" in table
        assert "precision (micro)" in table
        assert "precision (macro)" in table
        assert "0.6667" in table
