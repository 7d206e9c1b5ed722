"""Detection metrics (IoU, AP@50/AP@75, COCO-style mAP) and gap-curve fitting.

AP uses greedy score-ordered matching and 101-point interpolated
precision-recall integration over the recall grid {0.00, 0.01, ..., 1.00};
mAP averages over the ten IoU thresholds 0.50:0.05:0.95 and over classes.
Classes without ground truth have undefined AP and are excluded from means.

Matching and the precision-recall curve are evaluated per timestamp group
and pooled, matching the 30 Hz annotation grid.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import Annotation, Detection
from .errors import FormatError

COCO_THRESHOLDS = tuple(round(0.50 + 0.05 * i, 2) for i in range(10))
RECALL_GRID = np.arange(101, dtype=np.float64) / 100.0


def iou(a, b) -> float:
    """Intersection over union of two (x, y, w, h) boxes."""
    ax, ay, aw, ah = _box(a)
    bx, by, bw, bh = _box(b)
    if aw <= 0 or ah <= 0 or bw <= 0 or bh <= 0:
        raise FormatError("boxes must have positive size")
    ix = max(0.0, min(ax + aw, bx + bw) - max(ax, bx))
    iy = max(0.0, min(ay + ah, by + bh) - max(ay, by))
    inter = ix * iy
    union = aw * ah + bw * bh - inter
    return inter / union


def _box(obj):
    if isinstance(obj, (tuple, list)):
        return tuple(float(v) for v in obj)
    return float(obj.x), float(obj.y), float(obj.w), float(obj.h)


@dataclass(frozen=True)
class MatchResult:
    """Per-detection outcome in descending-score order."""

    scores: tuple
    tp: tuple           # True where the detection matched a ground-truth box
    matched_gt: tuple   # GT index per detection, or None
    n_gt: int

    @property
    def n_tp(self) -> int:
        return sum(self.tp)

    @property
    def n_fp(self) -> int:
        return len(self.tp) - self.n_tp

    @property
    def n_fn(self) -> int:
        return self.n_gt - self.n_tp


def _det_key(d: Detection):
    return (-d.score, d.t, d.x, d.y, d.w, d.h)


def match_detections(gts: Sequence[Annotation], dets: Sequence[Detection],
                     iou_thr: float) -> MatchResult:
    """Greedy matching: best remaining GT (highest IoU >= threshold) per detection."""
    if not 0.0 < iou_thr <= 1.0:
        raise FormatError(f"IoU threshold must be in (0, 1], got {iou_thr}")
    order = sorted(range(len(dets)), key=lambda i: _det_key(dets[i]))
    taken = [False] * len(gts)
    scores, tp, matched = [], [], []
    for di in order:
        d = dets[di]
        best_iou, best_gt = 0.0, None
        for gi, g in enumerate(gts):
            if taken[gi]:
                continue
            v = iou(d, g)
            if v >= iou_thr and v > best_iou:
                best_iou, best_gt = v, gi
        scores.append(d.score)
        if best_gt is None:
            tp.append(False)
            matched.append(None)
        else:
            taken[best_gt] = True
            tp.append(True)
            matched.append(best_gt)
    return MatchResult(scores=tuple(scores), tp=tuple(tp),
                       matched_gt=tuple(matched), n_gt=len(gts))


def _pooled_matches(gts: Sequence[Annotation], dets: Sequence[Detection],
                    iou_thr: float) -> tuple[list, int]:
    """Match per timestamp, pool the (score, tp) outcomes."""
    times = sorted({g.t for g in gts} | {d.t for d in dets})
    pooled = []
    for t in times:
        m = match_detections([g for g in gts if g.t == t],
                             [d for d in dets if d.t == t], iou_thr)
        pooled.extend(zip(m.scores, m.tp))
    return pooled, len(gts)


def ap_from_matches(pooled: Sequence[tuple], n_gt: int) -> float:
    """101-point interpolated AP from pooled (score, is_tp) outcomes."""
    if n_gt == 0:
        raise FormatError("AP is undefined with zero ground-truth boxes")
    if not pooled:
        return 0.0
    scores = np.array([s for s, _ in pooled], dtype=np.float64)
    tp = np.array([bool(v) for _, v in pooled])
    order = np.argsort(-scores, kind="stable")
    scores, tp = scores[order], tp[order]
    cum_tp = np.cumsum(tp)
    cum_fp = np.cumsum(~tp)
    # evaluate the curve only at distinct-score boundaries, so equal-score
    # detections act as one cutoff
    last_of_group = np.nonzero(np.append(scores[1:] != scores[:-1], True))[0]
    recalls = cum_tp[last_of_group] / n_gt
    precisions = cum_tp[last_of_group] / (cum_tp + cum_fp)[last_of_group]
    envelope = np.maximum.accumulate(precisions[::-1])[::-1]
    idx = np.searchsorted(recalls, RECALL_GRID, side="left")
    interp = np.where(idx < len(recalls), envelope[np.minimum(idx, len(recalls) - 1)], 0.0)
    return float(interp.mean())


def average_precision(gts: Sequence[Annotation], dets: Sequence[Detection],
                      iou_thr: float) -> Optional[float]:
    """AP for one class at one IoU threshold; None when no ground truth exists."""
    pooled, n_gt = _pooled_matches(gts, dets, iou_thr)
    if n_gt == 0:
        return None
    return ap_from_matches(pooled, n_gt)


@dataclass(frozen=True)
class EvalReport:
    classes: tuple
    thresholds: tuple
    ap: dict                # (class_id, threshold) -> AP or None
    gt_counts: dict         # class_id -> int
    tp_counts: dict         # (class_id, threshold) -> int
    fp_counts: dict         # (class_id, threshold) -> int
    ap50: Optional[float]
    ap75: Optional[float]
    map: Optional[float]

    def to_json_dict(self) -> dict:
        per_class = {
            str(c): {
                "gt": self.gt_counts[c],
                "ap": {f"{thr:.2f}": self.ap[(c, thr)] for thr in self.thresholds},
                "tp": {f"{thr:.2f}": self.tp_counts[(c, thr)] for thr in self.thresholds},
                "fp": {f"{thr:.2f}": self.fp_counts[(c, thr)] for thr in self.thresholds},
            }
            for c in self.classes
        }
        return {
            "AP@50": self.ap50,
            "AP@75": self.ap75,
            "mAP": self.map,
            "thresholds": list(self.thresholds),
            "classes": per_class,
            "excluded_classes": [c for c in self.classes if self.gt_counts[c] == 0],
        }


def evaluate(gts: Sequence[Annotation], dets: Sequence[Detection],
             thresholds: Sequence[float] = COCO_THRESHOLDS,
             classes: Sequence[int] | None = None) -> EvalReport:
    """Per-class, per-threshold AP plus the AP@50 / AP@75 / mAP aggregates."""
    if classes is None:
        classes = sorted({g.class_id for g in gts} | {d.class_id for d in dets})
    if not classes:
        raise FormatError("evaluation requires at least one class")
    thresholds = tuple(thresholds)
    ap: dict = {}
    tp_counts: dict = {}
    fp_counts: dict = {}
    gt_counts: dict = {}
    for c in classes:
        c_gts = [g for g in gts if g.class_id == c]
        c_dets = [d for d in dets if d.class_id == c]
        gt_counts[c] = len(c_gts)
        for thr in thresholds:
            pooled, n_gt = _pooled_matches(c_gts, c_dets, thr)
            tp_counts[(c, thr)] = sum(1 for _, v in pooled if v)
            fp_counts[(c, thr)] = sum(1 for _, v in pooled if not v)
            ap[(c, thr)] = ap_from_matches(pooled, n_gt) if n_gt else None

    def mean_over(thrs):
        vals = [ap[(c, t)] for c in classes for t in thrs if ap[(c, t)] is not None]
        return float(np.mean(vals)) if vals else None

    return EvalReport(
        classes=tuple(classes), thresholds=thresholds, ap=ap,
        gt_counts=gt_counts, tp_counts=tp_counts, fp_counts=fp_counts,
        ap50=mean_over([t for t in thresholds if t == 0.50]),
        ap75=mean_over([t for t in thresholds if t == 0.75]),
        map=mean_over(thresholds))


@dataclass(frozen=True)
class GapFit:
    slope: float
    intercept: float
    r_squared: float
    points: tuple

    def to_json_dict(self) -> dict:
        return {
            "slope": self.slope,
            "intercept": self.intercept,
            "r_squared": self.r_squared,
            "points": [{"fraction_real": x, "map": y} for x, y in self.points],
        }


def fit_gap_line(points: Sequence[tuple]) -> GapFit:
    """Ordinary least squares over (real fraction, mAP) points."""
    pts = [(float(x), float(y)) for x, y in points]
    if len({x for x, _ in pts}) < 2:
        raise FormatError("gap fit needs at least 2 points with distinct fractions")
    x = np.array([p[0] for p in pts])
    y = np.array([p[1] for p in pts])
    xm, ym = x.mean(), y.mean()
    slope = float(np.sum((x - xm) * (y - ym)) / np.sum((x - xm) ** 2))
    intercept = float(ym - slope * xm)
    residuals = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - ym) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - float(np.sum(residuals ** 2)) / ss_tot
    return GapFit(slope=slope, intercept=intercept, r_squared=r2, points=tuple(pts))
