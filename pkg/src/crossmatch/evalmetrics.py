"""Evaluation: rotated-box overlap, PR curves, average precision,
box-quality correlation.

Rotated-rectangle intersection uses Sutherland-Hodgman clipping with the
shoelace formula; 3D IoU combines the ground-plane overlap with the
vertical extent. Detection evaluation is the standard greedy protocol:
detections claim ground-truth boxes in descending quality order, one each.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .boxes3d import Box3D

# KITTI-style moderate 3D IoU thresholds per class name.
DEFAULT_IOU_THRESHOLDS = {"Car": 0.7, "Pedestrian": 0.5, "Cyclist": 0.5}


def bev_footprint(box: Box3D) -> list[tuple[float, float]]:
    """Ground-plane (x, z) corners of the yaw-rotated footprint, CCW."""
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    hl, hw = 0.5 * box.length, 0.5 * box.width
    corners = []
    for sx, sz in ((+1, +1), (-1, +1), (-1, -1), (+1, -1)):
        lx, lz = sx * hl, sz * hw
        corners.append((box.center_x + c * lx + s * lz, box.center_z - s * lx + c * lz))
    return corners


def polygon_area(poly) -> float:
    """Shoelace area, sign-free."""
    if len(poly) < 3:
        return 0.0
    acc = 0.0
    for (x0, y0), (x1, y1) in zip(poly, poly[1:] + [poly[0]]):
        acc += x0 * y1 - x1 * y0
    return abs(acc) / 2.0


def clip_polygon(subject, clip) -> list[tuple[float, float]]:
    """Sutherland-Hodgman: clip a polygon against a convex CCW polygon."""
    if not subject or not clip:
        return []
    # Orient the clip polygon CCW so the inside test is consistent.
    signed = 0.0
    for (x0, y0), (x1, y1) in zip(clip, clip[1:] + [clip[0]]):
        signed += x0 * y1 - x1 * y0
    if signed < 0.0:
        clip = clip[::-1]

    output = list(subject)
    c1 = clip[-1]
    for c2 in clip:
        if not output:
            return []
        edge_dx, edge_dy = c2[0] - c1[0], c2[1] - c1[1]

        def inside(p):
            # Interior of a CCW polygon is to the left of each directed edge.
            return edge_dx * (p[1] - c1[1]) - edge_dy * (p[0] - c1[0]) >= 0.0

        def intersect(p, q):
            dpx, dpy = q[0] - p[0], q[1] - p[1]
            denom = edge_dx * dpy - edge_dy * dpx
            if denom == 0.0:
                return q
            t = (edge_dx * (p[1] - c1[1]) - edge_dy * (p[0] - c1[0])) / -denom
            return (p[0] + t * dpx, p[1] + t * dpy)

        current, output = output, []
        prev = current[-1]
        prev_in = inside(prev)
        for point in current:
            point_in = inside(point)
            if point_in:
                if not prev_in:
                    output.append(intersect(prev, point))
                output.append(point)
            elif prev_in:
                output.append(intersect(prev, point))
            prev, prev_in = point, point_in
        c1 = c2
    return output


def bev_iou(a: Box3D, b: Box3D) -> float:
    """IoU of the two rotated footprints in the ground plane."""
    poly_a, poly_b = bev_footprint(a), bev_footprint(b)
    inter = polygon_area(clip_polygon(poly_a, poly_b))
    area_a, area_b = a.length * a.width, b.length * b.width
    union = area_a + area_b - inter
    if union <= 0.0:
        return 0.0
    return min(inter / union, 1.0)


def _bev_intersection(a: Box3D, b: Box3D) -> float:
    return polygon_area(clip_polygon(bev_footprint(a), bev_footprint(b)))


def iou3d(a: Box3D, b: Box3D) -> float:
    """Volumetric IoU: BEV intersection times vertical overlap over union."""
    y_overlap = min(a.center_y + a.height / 2, b.center_y + b.height / 2) - max(
        a.center_y - a.height / 2, b.center_y - b.height / 2
    )
    if y_overlap <= 0.0:
        return 0.0
    inter = _bev_intersection(a, b) * y_overlap
    union = a.volume + b.volume - inter
    if union <= 0.0:
        return 0.0
    return min(inter / union, 1.0)


@dataclass
class EvalRecord:
    """One detection's quality measure and its best ground-truth overlap."""

    quality: float
    best_iou: float
    gt_index: int | None = None


@dataclass
class PRCurve:
    """Precision/recall points swept over the detection quality order."""

    thresholds: np.ndarray
    precisions: np.ndarray
    recalls: np.ndarray
    n_gt: int


def greedy_match(dets, gts, iou_fn, iou_threshold: float):
    """Match detections to ground truth, descending quality, one GT each.

    ``dets`` are (frame_id, quality, box); ``gts`` are (frame_id, box).
    Returns a list aligned with the quality-sorted detections:
    (quality, is_tp, matched_gt_index_or_None, best_iou).
    """
    order = sorted(range(len(dets)), key=lambda i: (-dets[i][1], i))
    gt_by_frame: dict[int, list[int]] = {}
    for g, (frame_id, _) in enumerate(gts):
        gt_by_frame.setdefault(frame_id, []).append(g)
    taken = [False] * len(gts)

    results = []
    for i in order:
        frame_id, quality, box = dets[i]
        best_iou, best_g = 0.0, None
        for g in gt_by_frame.get(frame_id, []):
            if taken[g]:
                continue
            iou = iou_fn(box, gts[g][1])
            if iou > best_iou:
                best_iou, best_g = iou, g
        if best_g is not None and best_iou >= iou_threshold:
            taken[best_g] = True
            results.append((quality, True, best_g, best_iou))
        else:
            results.append((quality, False, None, best_iou))
    return results


def pr_curve(dets, gts, iou_fn, iou_threshold: float) -> PRCurve:
    """Precision/recall at every quality threshold over a frame set.

    With no detections the convention is a single point at precision 1,
    recall 0.
    """
    n_gt = len(gts)
    matches = greedy_match(dets, gts, iou_fn, iou_threshold)
    if not matches:
        return PRCurve(
            thresholds=np.array([math.inf]),
            precisions=np.array([1.0]),
            recalls=np.array([0.0]),
            n_gt=n_gt,
        )
    qualities = np.array([m[0] for m in matches])
    tp = np.cumsum([1.0 if m[1] else 0.0 for m in matches])
    ranks = np.arange(1, len(matches) + 1, dtype=np.float64)
    precisions = tp / ranks
    recalls = tp / n_gt if n_gt > 0 else np.zeros_like(tp)
    return PRCurve(
        thresholds=qualities, precisions=precisions, recalls=recalls, n_gt=n_gt
    )


def average_precision(curve: PRCurve, n_points: int = 40) -> float:
    """Interpolated AP over evenly spaced recall samples (KITTI uses 40).

    Precision at recall r is the maximum precision attained at any recall
    >= r; unreachable recalls contribute 0.
    """
    total = 0.0
    for k in range(1, n_points + 1):
        r = k / n_points
        mask = curve.recalls >= r - 1e-12
        if np.any(mask):
            total += float(curve.precisions[mask].max())
    return total / n_points


@dataclass
class CorrelationResult:
    pearson: float
    spearman: float
    degenerate: bool = False


def quality_correlation(records) -> CorrelationResult:
    """Pearson and Spearman correlation between a quality measure and the
    best ground-truth IoU. Constant input is degenerate and reports 0."""
    if len(records) < 3:
        raise ValueError("need at least 3 records")
    quality = np.array([r.quality for r in records], dtype=np.float64)
    ious = np.array([r.best_iou for r in records], dtype=np.float64)
    if np.ptp(quality) == 0.0 or np.ptp(ious) == 0.0:
        return CorrelationResult(pearson=0.0, spearman=0.0, degenerate=True)
    pearson = float(stats.pearsonr(quality, ious).statistic)
    spearman = float(stats.spearmanr(quality, ious).statistic)
    return CorrelationResult(pearson=pearson, spearman=spearman)


@dataclass
class ClassEvalCounts:
    """Operating-point counts of a detection set against ground truth."""

    n_gt: int
    n_pred: int
    tp: int
    fp: int

    @property
    def precision(self) -> float:
        return self.tp / self.n_pred if self.n_pred else 1.0

    @property
    def recall(self) -> float:
        return self.tp / self.n_gt if self.n_gt else 0.0


def detection_set_counts(dets, gts, iou_fn, iou_threshold: float) -> ClassEvalCounts:
    """TP/FP counts of a fixed detection set (no threshold sweep)."""
    matches = greedy_match(dets, gts, iou_fn, iou_threshold)
    tp = sum(1 for m in matches if m[1])
    return ClassEvalCounts(
        n_gt=len(gts), n_pred=len(dets), tp=tp, fp=len(dets) - tp
    )
