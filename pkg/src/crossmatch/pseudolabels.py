"""Pseudo-label generation and teacher bookkeeping.

Two routes produce pseudo-labels from teacher outputs: plain confidence
thresholding, and cross-modal matching where a 2D and a 3D detection become
a pseudo-label pair only if their assignment cost clears a threshold. The
same matching is reused to pair 2D teacher detections with 3D student
detections for the consistency loss. Teachers are exponential moving
averages of students, with a momentum that ramps from 0.99 to 0.999.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .assignment import hungarian_solve
from .boxes2d import Box2D
from .boxes3d import Box3D, CameraModel, project_box_to_2d
from .matching import CostWeights, build_cost_matrix, check_probs


def _derive_score(probs: np.ndarray, score) -> float:
    top = float(probs.max())
    if score is None:
        return top
    if abs(float(score) - top) > 1e-9:
        raise ValueError(f"score {score} != max(probs) {top}")
    return float(score)


@dataclass
class Detection2D:
    """2D box plus class probabilities; score is always max(probs)."""

    box: Box2D
    probs: np.ndarray
    score: float | None = None

    def __post_init__(self):
        self.probs = check_probs(self.probs)
        self.score = _derive_score(self.probs, self.score)

    @property
    def class_index(self) -> int:
        return int(np.argmax(self.probs))


@dataclass
class Detection3D:
    """3D box plus class probabilities; score is always max(probs)."""

    box: Box3D
    probs: np.ndarray
    score: float | None = None

    def __post_init__(self):
        self.probs = check_probs(self.probs)
        self.score = _derive_score(self.probs, self.score)

    @property
    def class_index(self) -> int:
        return int(np.argmax(self.probs))


@dataclass
class MatchedPair:
    """A (2D, 3D) detection pair accepted by the matcher, with its cost."""

    det2d: Detection2D
    det3d: Detection3D
    cost: float
    index_2d: int = -1
    index_3d: int = -1


def confidence_filter(detections, tau: float):
    """Keep detections whose top class probability strictly exceeds tau."""
    if not 0.0 <= tau <= 1.0:
        raise ValueError(f"tau must be in [0, 1], got {tau}")
    return [d for d in detections if d.score > tau]


def _match(
    dets_2d,
    dets_3d,
    cam: CameraModel,
    weights: CostWeights,
    tau_hung: float,
) -> list[MatchedPair]:
    visible = [
        j
        for j, det in enumerate(dets_3d)
        if isinstance(project_box_to_2d(cam, det.box), Box2D)
    ]
    if not dets_2d or not visible:
        return []
    vis_dets = [dets_3d[j] for j in visible]
    matrix = build_cost_matrix(
        dets_2d, vis_dets, cam, weights, cam.image_width, cam.image_height
    )
    assignment = hungarian_solve(matrix)
    pairs = []
    for i, jv in assignment.pairs:
        cost = float(matrix[i, jv])
        if cost < tau_hung:
            j = visible[jv]
            pairs.append(
                MatchedPair(
                    det2d=dets_2d[i],
                    det3d=dets_3d[j],
                    cost=cost,
                    index_2d=i,
                    index_3d=j,
                )
            )
    return pairs


def match_teachers(
    dets_2d,
    dets_3d,
    cam: CameraModel,
    weights: CostWeights,
    tau_hung: float,
    pre_filter_2d: float | None = None,
    pre_filter_3d: float | None = None,
) -> list[MatchedPair]:
    """Pair 2D with 3D teacher detections of one frame.

    Builds the cost matrix over projectable 3D detections, solves the
    assignment, and keeps pairs with cost strictly below tau_hung. Matching
    runs on raw teacher outputs by default; the optional pre-filters apply
    confidence thresholds first.
    """
    if pre_filter_2d is not None:
        dets_2d = confidence_filter(dets_2d, pre_filter_2d)
    if pre_filter_3d is not None:
        dets_3d = confidence_filter(dets_3d, pre_filter_3d)
    return _match(dets_2d, dets_3d, cam, weights, tau_hung)


def pair_for_consistency(
    teacher_2d,
    student_3d,
    cam: CameraModel,
    weights: CostWeights,
    tau_hung: float,
) -> list[MatchedPair]:
    """Pair 2D teacher detections with 3D student detections; identical
    mechanics to match_teachers. The output feeds the consistency loss."""
    return _match(teacher_2d, student_3d, cam, weights, tau_hung)


def ema_update(teacher: np.ndarray, student: np.ndarray, alpha: float) -> np.ndarray:
    """teacher <- alpha * teacher + (1 - alpha) * student, elementwise."""
    t = np.asarray(teacher, dtype=np.float64)
    s = np.asarray(student, dtype=np.float64)
    if t.shape != s.shape:
        raise ValueError(f"parameter shape mismatch: {t.shape} vs {s.shape}")
    if not 0.0 <= alpha <= 1.0:
        raise ValueError(f"alpha must be in [0, 1], got {alpha}")
    return alpha * t + (1.0 - alpha) * s


def ema_momentum(
    step: int, ramp_steps: int, start: float = 0.99, end: float = 0.999
) -> float:
    """Linear ramp of the EMA momentum from ``start`` at step 0 to ``end``
    at ``ramp_steps``, constant afterwards."""
    if step < 0:
        raise ValueError("step must be nonnegative")
    if ramp_steps <= 0 or step >= ramp_steps:
        return end
    return start + (end - start) * (step / ramp_steps)
