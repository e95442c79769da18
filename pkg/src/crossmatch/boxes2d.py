"""Axis-aligned 2D box arithmetic: IoU, generalized IoU, normalized L1.

These are the ingredients of the 2D-3D matching cost and of the consistency
loss, so the GIoU and L1 terms come in plain and gradient-carrying variants.
All boxes use corner form (x_min, y_min, x_max, y_max) in pixels.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Box2D:
    """Axis-aligned image-plane box in corner form."""

    x_min: float
    y_min: float
    x_max: float
    y_max: float

    def __post_init__(self):
        if self.x_min > self.x_max or self.y_min > self.y_max:
            raise ValueError(f"inverted 2D box: {self.as_tuple()}")

    @property
    def width(self) -> float:
        return self.x_max - self.x_min

    @property
    def height(self) -> float:
        return self.y_max - self.y_min

    @property
    def area(self) -> float:
        return self.width * self.height

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.x_min, self.y_min, self.x_max, self.y_max)

    def as_array(self) -> np.ndarray:
        return np.array(self.as_tuple(), dtype=np.float64)


def _intersection_area(a: Box2D, b: Box2D) -> float:
    iw = min(a.x_max, b.x_max) - max(a.x_min, b.x_min)
    ih = min(a.y_max, b.y_max) - max(a.y_min, b.y_min)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    return iw * ih


def iou2d(a: Box2D, b: Box2D) -> float:
    """Intersection over union. Disjoint boxes and zero-area unions give 0."""
    inter = _intersection_area(a, b)
    union = a.area + b.area - inter
    if union <= 0.0:
        return 0.0
    return inter / union


def giou2d(a: Box2D, b: Box2D) -> float:
    """Generalized IoU: IoU minus the enclosing-box penalty, range (-1, 1]."""
    inter = _intersection_area(a, b)
    union = a.area + b.area - inter
    iou = inter / union if union > 0.0 else 0.0
    enc_w = max(a.x_max, b.x_max) - min(a.x_min, b.x_min)
    enc_h = max(a.y_max, b.y_max) - min(a.y_min, b.y_min)
    enc = enc_w * enc_h
    if enc <= 0.0:
        return iou
    return iou - (enc - union) / enc


def l1_box_distance(a: Box2D, b: Box2D, width: float, height: float) -> float:
    """Mean absolute corner difference, x terms / image width, y / height."""
    if width <= 0.0 or height <= 0.0:
        raise ValueError("image dimensions must be positive")
    return (
        abs(a.x_min - b.x_min) / width
        + abs(a.y_min - b.y_min) / height
        + abs(a.x_max - b.x_max) / width
        + abs(a.y_max - b.y_max) / height
    ) / 4.0


def _dmax(x: float, y: float) -> float:
    # d max(x, y) / dx with ties split equally
    if x > y:
        return 1.0
    if x == y:
        return 0.5
    return 0.0


def _dmin(x: float, y: float) -> float:
    if x < y:
        return 1.0
    if x == y:
        return 0.5
    return 0.0


def giou2d_grad(a: Box2D, b: Box2D) -> tuple[float, np.ndarray]:
    """GIoU and its gradient in the four parameters of ``a``.

    Subgradients at min/max ties are split equally between the tied sides,
    which makes the gradient vanish exactly when the boxes coincide.
    """
    ax0, ay0, ax1, ay1 = a.as_tuple()
    bx0, by0, bx1, by1 = b.as_tuple()

    area_a = (ax1 - ax0) * (ay1 - ay0)
    area_b = (bx1 - bx0) * (by1 - by0)
    d_area = np.array([-(ay1 - ay0), -(ax1 - ax0), (ay1 - ay0), (ax1 - ax0)])

    iw = min(ax1, bx1) - max(ax0, bx0)
    ih = min(ay1, by1) - max(ay0, by0)
    if iw > 0.0 and ih > 0.0:
        inter = iw * ih
        d_inter = np.array(
            [
                -ih * _dmax(ax0, bx0),
                -iw * _dmax(ay0, by0),
                ih * _dmin(ax1, bx1),
                iw * _dmin(ay1, by1),
            ]
        )
    else:
        inter = 0.0
        d_inter = np.zeros(4)

    union = area_a + area_b - inter
    d_union = d_area - d_inter

    if union > 0.0:
        iou = inter / union
        d_iou = (d_inter * union - inter * d_union) / (union * union)
    else:
        iou = 0.0
        d_iou = np.zeros(4)

    enc_w = max(ax1, bx1) - min(ax0, bx0)
    enc_h = max(ay1, by1) - min(ay0, by0)
    enc = enc_w * enc_h
    if enc <= 0.0:
        return iou, d_iou
    d_enc = np.array(
        [
            -enc_h * _dmin(ax0, bx0),
            -enc_w * _dmin(ay0, by0),
            enc_h * _dmax(ax1, bx1),
            enc_w * _dmax(ay1, by1),
        ]
    )
    # giou = iou - (enc - union) / enc = iou - 1 + union / enc
    giou = iou - (enc - union) / enc
    d_ratio = (d_union * enc - union * d_enc) / (enc * enc)
    return giou, d_iou + d_ratio


def l1_box_distance_grad(
    a: Box2D, b: Box2D, width: float, height: float
) -> tuple[float, np.ndarray]:
    """Normalized L1 distance and its gradient in the parameters of ``a``."""
    value = l1_box_distance(a, b, width, height)
    grad = np.array(
        [
            np.sign(a.x_min - b.x_min) / (4.0 * width),
            np.sign(a.y_min - b.y_min) / (4.0 * height),
            np.sign(a.x_max - b.x_max) / (4.0 * width),
            np.sign(a.y_max - b.y_max) / (4.0 * height),
        ]
    )
    return value, grad
