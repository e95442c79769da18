"""The 2D-3D matching cost and the differentiable consistency loss.

A 2D detection and a 3D detection are scored by three terms: normalized L1
between the 2D box and the projected 3D tight box, an IoU term, and a
double-sided focal term between the two class-probability vectors. Lower is
a stronger match. In the matching cost the IoU term defaults to -GIoU so
that well-matched pairs go negative and a negative acceptance threshold is
meaningful; the consistency loss uses the nonnegative 1-GIoU form. Both
conventions are switchable per weight set.

The consistency loss additionally returns analytic gradients in the seven
3D box parameters (through the corner projection and the tight-fit min/max)
and in the class logits (through softmax).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .boxes2d import (
    Box2D,
    giou2d,
    giou2d_grad,
    l1_box_distance,
    l1_box_distance_grad,
)
from .boxes3d import Box3D, CameraModel, project_box_to_2d, project_box_to_2d_grad

# Matching cost assigned to pairs whose 3D box cannot be projected; large
# enough that they are never accepted.
UNPROJECTABLE_COST = 1.0e6

# Probabilities are clamped here before any logarithm.
PROB_FLOOR = 1e-7

NEG_GIOU = "neg_giou"
ONE_MINUS_GIOU = "one_minus_giou"


def check_probs(probs) -> np.ndarray:
    """Validate a C-way probability vector (entries in [0,1], sum ~ 1)."""
    p = np.asarray(probs, dtype=np.float64)
    if p.ndim != 1 or p.size == 0:
        raise ValueError(f"probability vector must be 1-D and non-empty, got {p.shape}")
    if np.any(p < 0.0) or np.any(p > 1.0):
        raise ValueError("probabilities must lie in [0, 1]")
    if abs(float(p.sum()) - 1.0) > 1e-6:
        raise ValueError(f"probabilities must sum to 1, got {p.sum()}")
    return p


@dataclass(frozen=True)
class CostWeights:
    """Weights of the three matching-cost terms plus focal parameters."""

    lambda_l1: float = 1.0
    lambda_iou: float = 2.0
    lambda_double_focal: float = 1.0
    focal_gamma: float = 2.0
    focal_alpha: float = 0.25
    iou_term: str = NEG_GIOU

    def __post_init__(self):
        if min(self.lambda_l1, self.lambda_iou, self.lambda_double_focal) < 0:
            raise ValueError("cost weights must be nonnegative")
        if self.focal_gamma < 0 or not (0.0 < self.focal_alpha < 1.0):
            raise ValueError("invalid focal parameters")
        if self.iou_term not in (NEG_GIOU, ONE_MINUS_GIOU):
            raise ValueError(f"unknown iou_term {self.iou_term!r}")


@dataclass(frozen=True)
class ConsistencyWeights:
    """Weights of the consistency-loss terms; a separate set from the
    matching cost because the class term plays a different role here."""

    lambda_l1: float = 1.0
    lambda_iou: float = 2.0
    lambda_focal: float = 1.0
    focal_gamma: float = 2.0
    focal_alpha: float = 0.25
    iou_term: str = ONE_MINUS_GIOU

    def __post_init__(self):
        if min(self.lambda_l1, self.lambda_iou, self.lambda_focal) < 0:
            raise ValueError("consistency weights must be nonnegative")
        if self.focal_gamma < 0 or not (0.0 < self.focal_alpha < 1.0):
            raise ValueError("invalid focal parameters")
        if self.iou_term not in (NEG_GIOU, ONE_MINUS_GIOU):
            raise ValueError(f"unknown iou_term {self.iou_term!r}")


@dataclass
class ConsistencyGradients:
    """d loss / d (box3d params) and d loss / d (class logits)."""

    d_box: np.ndarray  # (7,)
    d_logits: np.ndarray  # (C,)


@dataclass
class ConsistencyResult:
    loss: float
    l1_term: float
    iou_term: float
    focal_term: float
    grads: ConsistencyGradients


def softmax(logits) -> np.ndarray:
    z = np.asarray(logits, dtype=np.float64)
    z = z - z.max()
    e = np.exp(z)
    return e / e.sum()


def focal_value(probs: np.ndarray, target: int, gamma: float, alpha: float) -> float:
    """-alpha (1 - p_t)^gamma log(p_t), with p_t floored before the log."""
    pt = float(probs[target])
    return -alpha * (1.0 - pt) ** gamma * math.log(max(pt, PROB_FLOOR))


def focal_loss(
    probs, target: int, gamma: float = 2.0, alpha: float = 0.25
) -> tuple[float, np.ndarray]:
    """Focal loss and its gradient in the logits behind ``probs``.

    ``probs`` is taken to be softmax(logits); the gradient uses the softmax
    Jacobian expressed in the probabilities, so the logits themselves are
    not needed. The floor applied before the log contributes zero gradient
    in the clamped region.
    """
    p = check_probs(probs)
    if not 0 <= target < p.size:
        raise IndexError(f"target class {target} out of range for C={p.size}")
    pt = float(p[target])
    pt_f = max(pt, PROB_FLOOR)
    value = -alpha * (1.0 - pt) ** gamma * math.log(pt_f)

    if gamma == 0.0:
        mod_deriv = 0.0
    else:
        mod_deriv = gamma * (1.0 - pt) ** (gamma - 1.0) * math.log(pt_f)
    log_deriv = (1.0 - pt) ** gamma / pt_f if pt >= PROB_FLOOR else 0.0
    d_pt = -alpha * (-mod_deriv + log_deriv)

    one_hot = np.zeros_like(p)
    one_hot[target] = 1.0
    grad_logits = d_pt * pt * (one_hot - p)
    return value, grad_logits


def double_focal(
    probs_2d, probs_3d, gamma: float = 2.0, alpha: float = 0.25
) -> float:
    """Symmetric class-consistency cost: each side's focal loss against the
    other side's argmax class (ties to the lowest index)."""
    p2 = check_probs(probs_2d)
    p3 = check_probs(probs_3d)
    if p2.size != p3.size:
        raise ValueError("probability vectors must have the same length")
    return focal_value(p2, int(np.argmax(p3)), gamma, alpha) + focal_value(
        p3, int(np.argmax(p2)), gamma, alpha
    )


def _iou_cost(value: float, mode: str) -> float:
    return -value if mode == NEG_GIOU else 1.0 - value


def pair_cost(
    det2d,
    det3d,
    cam: CameraModel,
    weights: CostWeights,
    image_width: float,
    image_height: float,
) -> float:
    """Matching cost between one 2D and one 3D detection; lower is better.

    3D boxes that cannot be projected (behind camera, or entirely outside
    the image) get UNPROJECTABLE_COST and are effectively unmatched.
    """
    projected = project_box_to_2d(cam, det3d.box)
    if not isinstance(projected, Box2D):
        return UNPROJECTABLE_COST
    return _pair_cost_projected(
        det2d, det3d, projected, weights, image_width, image_height
    )


def _pair_cost_projected(
    det2d, det3d, projected: Box2D, weights: CostWeights,
    image_width: float, image_height: float,
) -> float:
    l1 = l1_box_distance(det2d.box, projected, image_width, image_height)
    giou = giou2d(det2d.box, projected)
    dfocal = double_focal(
        det2d.probs, det3d.probs, weights.focal_gamma, weights.focal_alpha
    )
    return (
        weights.lambda_l1 * l1
        + weights.lambda_iou * _iou_cost(giou, weights.iou_term)
        + weights.lambda_double_focal * dfocal
    )


def build_cost_matrix(
    dets_2d,
    dets_3d,
    cam: CameraModel,
    weights: CostWeights,
    image_width: float,
    image_height: float,
) -> np.ndarray:
    """Pairwise cost matrix, rows = 2D detections, cols = 3D detections."""
    matrix = np.empty((len(dets_2d), len(dets_3d)), dtype=np.float64)
    projections = [project_box_to_2d(cam, d.box) for d in dets_3d]
    for j, (det3d, proj) in enumerate(zip(dets_3d, projections)):
        if not isinstance(proj, Box2D):
            matrix[:, j] = UNPROJECTABLE_COST
            continue
        for i, det2d in enumerate(dets_2d):
            matrix[i, j] = _pair_cost_projected(
                det2d, det3d, proj, weights, image_width, image_height
            )
    return matrix


def consistency_loss(
    teacher_2d,
    student_box: Box3D,
    student_logits,
    cam: CameraModel,
    weights: ConsistencyWeights,
    image_width: float,
    image_height: float,
) -> ConsistencyResult | None:
    """Box-and-class consistency between a 2D teacher detection and a 3D
    student box, with analytic gradients.

    Returns None when the student box cannot be projected; the caller
    reports such pairs as skipped. Box gradients flow through the corner
    projection and the tight-fit min/max (equal tie-splitting), class
    gradients through softmax of the student logits.
    """
    projected = project_box_to_2d_grad(cam, student_box)
    if not isinstance(projected, tuple):
        return None
    proj_box, proj_jac = projected  # Box2D, (4, 7)

    l1, d_l1 = l1_box_distance_grad(
        proj_box, teacher_2d.box, image_width, image_height
    )
    giou, d_giou = giou2d_grad(proj_box, teacher_2d.box)
    if weights.iou_term == ONE_MINUS_GIOU:
        iou_val, d_iou = 1.0 - giou, -d_giou
    else:
        iou_val, d_iou = -giou, -d_giou

    probs = softmax(student_logits)
    target = int(np.argmax(teacher_2d.probs))
    focal_val, d_focal_logits = focal_loss(
        probs, target, weights.focal_gamma, weights.focal_alpha
    )

    loss = (
        weights.lambda_l1 * l1
        + weights.lambda_iou * iou_val
        + weights.lambda_focal * focal_val
    )
    d_box = (weights.lambda_l1 * d_l1 + weights.lambda_iou * d_iou) @ proj_jac
    return ConsistencyResult(
        loss=loss,
        l1_term=l1,
        iou_term=iou_val,
        focal_term=focal_val,
        grads=ConsistencyGradients(
            d_box=d_box, d_logits=weights.lambda_focal * d_focal_logits
        ),
    )
