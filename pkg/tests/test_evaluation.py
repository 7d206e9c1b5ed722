import numpy as np
import pytest

from evkit.core import Annotation, Detection
from evkit.errors import FormatError
from evkit.evaluation import (COCO_THRESHOLDS, average_precision, evaluate,
                              fit_gap_line, iou, match_detections)


def gt(x, y, w, h, cls=0, t=0):
    return Annotation(t=t, x=x, y=y, w=w, h=h, class_id=cls)


def det(x, y, w, h, score, cls=0, t=0):
    return Detection(t=t, x=x, y=y, w=w, h=h, class_id=cls, score=score)


# --------------------------------------------------------------------------
# independent oracle: exact PR at every score cutoff, integrated on the
# 101-point recall grid

def oracle_ap(gts, dets, thr):
    if not gts:
        return None
    pooled = []
    for t in sorted({g.t for g in gts} | {d.t for d in dets}):
        m = match_detections([g for g in gts if g.t == t],
                             [d for d in dets if d.t == t], thr)
        pooled.extend(zip(m.scores, m.tp))
    n_gt = len(gts)
    curve = []
    for cutoff in sorted({s for s, _ in pooled}, reverse=True):
        kept = [v for s, v in pooled if s >= cutoff]
        tp = sum(kept)
        curve.append((tp / n_gt, tp / len(kept)))
    total = 0.0
    for i in range(101):
        r = i / 100
        candidates = [p for rec, p in curve if rec >= r]
        total += max(candidates) if candidates else 0.0
    return total / 101


def random_scene(rng, n_boxes=50):
    gts, dets = [], []
    for t in (0, 33333):
        for _ in range(int(rng.integers(0, n_boxes // 2 + 1))):
            gts.append(gt(float(rng.integers(0, 80)), float(rng.integers(0, 80)),
                          float(rng.integers(4, 30)), float(rng.integers(4, 30)),
                          cls=int(rng.integers(0, 2)), t=t))
        for _ in range(int(rng.integers(0, n_boxes // 2 + 1))):
            dets.append(det(float(rng.integers(0, 80)), float(rng.integers(0, 80)),
                            float(rng.integers(4, 30)), float(rng.integers(4, 30)),
                            score=float(rng.random()), cls=int(rng.integers(0, 2)),
                            t=t))
    return gts, dets


class TestIou:
    def test_identical(self):
        assert iou((0, 0, 4, 4), (0, 0, 4, 4)) == 1.0

    def test_disjoint(self):
        assert iou((0, 0, 2, 2), (10, 10, 2, 2)) == 0.0

    def test_quarter_overlap(self):
        assert iou((0, 0, 2, 2), (1, 1, 2, 2)) == pytest.approx(1 / 7, abs=1e-12)

    def test_symmetry_and_range(self, rng):
        for _ in range(200):
            a = tuple(float(v) for v in rng.integers(1, 20, size=4))
            b = tuple(float(v) for v in rng.integers(1, 20, size=4))
            assert iou(a, b) == iou(b, a)
            assert 0.0 <= iou(a, b) <= 1.0
        assert iou(a, a) == 1.0

    def test_accepts_box_objects(self):
        assert iou(gt(0, 0, 2, 2), det(0, 0, 2, 2, 0.5)) == 1.0


class TestMatching:
    def test_single_match(self):
        m = match_detections([gt(0, 0, 10, 10)], [det(1, 1, 10, 10, 0.9)], 0.5)
        assert m.n_tp == 1 and m.n_fp == 0 and m.n_fn == 0

    def test_two_detections_one_gt(self):
        m = match_detections([gt(0, 0, 10, 10)],
                             [det(0, 0, 10, 10, 0.6), det(1, 1, 10, 10, 0.9)], 0.5)
        # higher score matches first; the other is FP
        assert m.scores == (0.9, 0.6)
        assert m.tp == (True, False)

    def test_low_iou_is_fp(self):
        m = match_detections([gt(0, 0, 10, 10)], [det(50, 50, 10, 10, 0.9)], 0.5)
        assert m.n_tp == 0 and m.n_fp == 1 and m.n_fn == 1

    def test_threshold_validated(self):
        with pytest.raises(FormatError):
            match_detections([], [], 0.0)


class TestAveragePrecision:
    def test_no_detections(self):
        assert average_precision([gt(0, 0, 5, 5)], [], 0.5) == 0.0

    def test_perfect_single_detection(self):
        ap = average_precision([gt(0, 0, 5, 5)], [det(0, 0, 5, 5, 1.0)], 0.5)
        assert ap == 1.0

    def test_worked_example_51_101(self):
        gts = [gt(0, 0, 10, 10), gt(50, 50, 10, 10)]
        dets = [det(0, 0, 10, 10, 0.9), det(100, 100, 10, 10, 0.8)]
        ap = average_precision(gts, dets, 0.5)
        assert ap == pytest.approx(51 / 101, abs=1e-15)

    def test_zero_gt_is_undefined(self):
        assert average_precision([], [det(0, 0, 5, 5, 0.5)], 0.5) is None

    def test_monotone_in_threshold(self, rng):
        for _ in range(20):
            gts, dets = random_scene(rng, 20)
            c0 = [g for g in gts if g.class_id == 0]
            d0 = [d for d in dets if d.class_id == 0]
            if not c0:
                continue
            ap50 = average_precision(c0, d0, 0.50)
            ap75 = average_precision(c0, d0, 0.75)
            assert ap75 <= ap50 + 1e-12

    def test_matches_cutoff_oracle(self, rng):
        for _ in range(50):
            gts, dets = random_scene(rng, 30)
            for cls in (0, 1):
                c_gts = [g for g in gts if g.class_id == cls]
                c_dets = [d for d in dets if d.class_id == cls]
                for thr in (0.5, 0.75):
                    got = average_precision(c_gts, c_dets, thr)
                    want = oracle_ap(c_gts, c_dets, thr)
                    if want is None:
                        assert got is None
                    else:
                        assert got == pytest.approx(want, abs=1e-9)


class TestEvaluate:
    def test_perfect_detector(self):
        gts = [gt(0, 0, 10, 10, cls=0), gt(30, 30, 5, 5, cls=1)]
        dets = [det(0, 0, 10, 10, 1.0, cls=0), det(30, 30, 5, 5, 1.0, cls=1)]
        report = evaluate(gts, dets)
        assert report.map == 1.0
        assert report.ap50 == 1.0 and report.ap75 == 1.0

    def test_report_named_fields(self):
        report = evaluate([gt(0, 0, 5, 5)], [det(0, 0, 5, 5, 1.0)])
        doc = report.to_json_dict()
        assert {"AP@50", "AP@75", "mAP"} <= set(doc)

    def test_zero_gt_class_excluded_from_means(self):
        gts = [gt(0, 0, 10, 10, cls=0)]
        dets = [det(0, 0, 10, 10, 1.0, cls=0), det(5, 5, 4, 4, 0.7, cls=1)]
        report = evaluate(gts, dets, classes=[0, 1])
        assert report.ap[(1, 0.5)] is None
        assert report.map == 1.0
        assert 1 in report.to_json_dict()["excluded_classes"] or \
            report.to_json_dict()["excluded_classes"] == [1]

    def test_map_not_above_best_threshold_ap(self, rng):
        gts, dets = random_scene(rng, 30)
        report = evaluate(gts, dets)
        if report.map is None:
            return
        best = max(v for v in report.ap.values() if v is not None)
        assert report.map <= best + 1e-12

    def test_counts_reported(self):
        report = evaluate([gt(0, 0, 10, 10)],
                          [det(0, 0, 10, 10, 0.9), det(90, 90, 5, 5, 0.6)],
                          thresholds=(0.5,))
        assert report.gt_counts[0] == 1
        assert report.tp_counts[(0, 0.5)] == 1
        assert report.fp_counts[(0, 0.5)] == 1

    def test_empty_class_set_error(self):
        with pytest.raises(FormatError):
            evaluate([], [], classes=[])

    def test_default_thresholds_are_coco(self):
        assert COCO_THRESHOLDS == (0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8,
                                   0.85, 0.9, 0.95)


class TestGapFit:
    def test_two_point_exact(self):
        fit = fit_gap_line([(0.0, 0.0), (1.0, 1.0)])
        assert fit.slope == 1.0 and fit.intercept == 0.0 and fit.r_squared == 1.0

    def test_collinear_points_recovered(self):
        pts = [(x / 10, 2.5 * x / 10 - 0.75) for x in range(8)]
        fit = fit_gap_line(pts)
        assert fit.slope == pytest.approx(2.5, abs=1e-12)
        assert fit.intercept == pytest.approx(-0.75, abs=1e-12)
        assert fit.r_squared == pytest.approx(1.0, abs=1e-12)

    def test_affine_equivariance(self, rng):
        pts = [(float(x), float(y)) for x, y in
               zip(rng.random(6), rng.random(6))]
        base = fit_gap_line(pts)
        scaled = fit_gap_line([(x, 3.0 * y) for x, y in pts])
        assert scaled.slope == pytest.approx(3.0 * base.slope, rel=1e-12)
        assert scaled.intercept == pytest.approx(3.0 * base.intercept, rel=1e-12)
        assert scaled.r_squared == pytest.approx(base.r_squared, rel=1e-12)

    def test_degenerate_fit_error(self):
        with pytest.raises(FormatError):
            fit_gap_line([(0.5, 1.0), (0.5, 2.0)])
        with pytest.raises(FormatError):
            fit_gap_line([(0.5, 1.0)])
