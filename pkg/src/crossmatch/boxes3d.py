"""Oriented 3D boxes, corner enumeration and pinhole projection.

Everything lives in the (rectified) camera frame: x right, y down, z forward,
so the vertical axis is y and yaw rotates about it. Projecting a box means
projecting its 8 corners and taking the axis-aligned bounding box of the
pixels, clipped to the image. Boxes with any corner at or behind the camera
plane are rejected whole rather than clamped; a partially projected box has
no meaningful tight fit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .boxes2d import Box2D

# Homogeneous depth at or below which a point counts as behind the camera.
DEPTH_EPS = 1e-3


def normalize_yaw(yaw: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    r = math.fmod(yaw + math.pi, 2.0 * math.pi)
    if r <= 0.0:
        r += 2.0 * math.pi
    return r - math.pi


@dataclass(frozen=True)
class Box3D:
    """Yaw-oriented cuboid: geometric center, dimensions, heading.

    length runs along the local x axis at yaw 0, width along local z,
    height along y. Yaw is stored normalized to (-pi, pi].
    """

    center_x: float
    center_y: float
    center_z: float
    length: float
    width: float
    height: float
    yaw: float

    def __post_init__(self):
        if self.length <= 0.0 or self.width <= 0.0 or self.height <= 0.0:
            raise ValueError(
                f"box dimensions must be positive, got "
                f"({self.length}, {self.width}, {self.height})"
            )
        object.__setattr__(self, "yaw", normalize_yaw(self.yaw))

    @property
    def center(self) -> np.ndarray:
        return np.array([self.center_x, self.center_y, self.center_z])

    @property
    def volume(self) -> float:
        return self.length * self.width * self.height

    def as_array(self) -> np.ndarray:
        """Parameter vector (cx, cy, cz, l, w, h, yaw)."""
        return np.array(
            [
                self.center_x,
                self.center_y,
                self.center_z,
                self.length,
                self.width,
                self.height,
                self.yaw,
            ]
        )

    @staticmethod
    def from_array(p) -> "Box3D":
        p = np.asarray(p, dtype=np.float64)
        return Box3D(*(float(v) for v in p))


@dataclass(frozen=True, eq=False)
class CameraModel:
    """3x4 projection matrix (intrinsics x extrinsics) plus image extent."""

    projection: np.ndarray
    image_width: int
    image_height: int

    def __post_init__(self):
        p = np.asarray(self.projection, dtype=np.float64)
        if p.shape != (3, 4):
            raise ValueError(f"projection must be 3x4, got {p.shape}")
        object.__setattr__(self, "projection", p)


class ProjectionFailure(Enum):
    BEHIND_CAMERA = "behind_camera"
    DEGENERATE = "degenerate"


# Corner sign pattern (sx, sy, sz): bottom face (y = +h/2, camera y points
# down) counterclockwise in the x-z plane, then the top face in the same x-z
# order, so corner k+4 sits directly above corner k.
_CORNER_SIGNS = np.array(
    [
        [+1, +1, +1],
        [-1, +1, +1],
        [-1, +1, -1],
        [+1, +1, -1],
        [+1, -1, +1],
        [-1, -1, +1],
        [-1, -1, -1],
        [+1, -1, -1],
    ],
    dtype=np.float64,
)


def _yaw_matrix(yaw: float) -> np.ndarray:
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def _yaw_matrix_deriv(yaw: float) -> np.ndarray:
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[-s, 0.0, c], [0.0, 0.0, 0.0], [-c, 0.0, -s]])


def box3d_corners(box: Box3D) -> np.ndarray:
    """The 8 corners, shape (8, 3), in the documented fixed order."""
    half = 0.5 * np.array([box.length, box.height, box.width])
    local = _CORNER_SIGNS * half  # (8, 3)
    return box.center + local @ _yaw_matrix(box.yaw).T


def project_points(cam: CameraModel, points) -> tuple[np.ndarray, np.ndarray]:
    """Project (N, 3) camera-frame points to pixels.

    Returns (pixels (N, 2), depths (N,)) where depth is the pre-division
    homogeneous w. Points with depth <= DEPTH_EPS still get (possibly
    meaningless) pixel values; callers decide what to do with the flagging.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    hom = pts @ cam.projection[:, :3].T + cam.projection[:, 3]
    depths = hom[:, 2]
    safe = np.where(np.abs(depths) < 1e-300, 1e-300, depths)
    uv = hom[:, :2] / safe[:, None]
    return uv, depths


def project_box_to_2d(cam: CameraModel, box: Box3D) -> Box2D | ProjectionFailure:
    """Tight axis-aligned fit of the projected corners, clipped to the image.

    BEHIND_CAMERA if any corner depth <= DEPTH_EPS; DEGENERATE if the
    clipped box has zero area (box projects entirely outside the image).
    """
    uv, depths = project_points(cam, box3d_corners(box))
    if np.any(depths <= DEPTH_EPS):
        return ProjectionFailure.BEHIND_CAMERA
    x0 = min(max(float(uv[:, 0].min()), 0.0), float(cam.image_width))
    x1 = min(max(float(uv[:, 0].max()), 0.0), float(cam.image_width))
    y0 = min(max(float(uv[:, 1].min()), 0.0), float(cam.image_height))
    y1 = min(max(float(uv[:, 1].max()), 0.0), float(cam.image_height))
    if x1 - x0 <= 0.0 or y1 - y0 <= 0.0:
        return ProjectionFailure.DEGENERATE
    return Box2D(x0, y0, x1, y1)


def _corner_jacobians(box: Box3D) -> np.ndarray:
    """d corner_k / d (cx, cy, cz, l, w, h, yaw), shape (8, 3, 7)."""
    rot = _yaw_matrix(box.yaw)
    drot = _yaw_matrix_deriv(box.yaw)
    half = 0.5 * np.array([box.length, box.height, box.width])
    local = _CORNER_SIGNS * half

    jac = np.zeros((8, 3, 7))
    jac[:, :, 0:3] = np.eye(3)
    # local ordering is (x=length, y=height, z=width)
    jac[:, :, 3] = 0.5 * _CORNER_SIGNS[:, 0:1] * rot[:, 0]
    jac[:, :, 4] = 0.5 * _CORNER_SIGNS[:, 2:3] * rot[:, 2]
    jac[:, :, 5] = 0.5 * _CORNER_SIGNS[:, 1:2] * rot[:, 1]
    jac[:, :, 6] = local @ drot.T
    return jac


def _extreme_weights(values: np.ndarray, pick_min: bool, tol: float = 1e-12) -> np.ndarray:
    """Subgradient weights of min/max over corners; ties share equally."""
    target = values.min() if pick_min else values.max()
    tied = np.abs(values - target) <= tol
    return tied / tied.sum()


def project_box_to_2d_grad(
    cam: CameraModel, box: Box3D
) -> tuple[Box2D, np.ndarray] | ProjectionFailure:
    """project_box_to_2d plus the 4x7 Jacobian of the clipped tight box.

    Rows are (x_min, y_min, x_max, y_max), columns the Box3D parameters.
    The min/max over corners uses equal tie-splitting; clipping zeroes the
    row when the unclipped coordinate is outside the image.
    """
    corners = box3d_corners(box)
    uv, depths = project_points(cam, corners)
    if np.any(depths <= DEPTH_EPS):
        return ProjectionFailure.BEHIND_CAMERA

    p = cam.projection
    corner_jac = _corner_jacobians(box)  # (8, 3, 7)
    # du/dX = (P[0,:3] - u P[2,:3]) / w, same pattern for v
    du = (p[0, :3][None, :] - uv[:, 0:1] * p[2, :3][None, :]) / depths[:, None]
    dv = (p[1, :3][None, :] - uv[:, 1:2] * p[2, :3][None, :]) / depths[:, None]
    du_dparam = np.einsum("kc,kcp->kp", du, corner_jac)  # (8, 7)
    dv_dparam = np.einsum("kc,kcp->kp", dv, corner_jac)

    w_img, h_img = float(cam.image_width), float(cam.image_height)
    raw = np.array(
        [uv[:, 0].min(), uv[:, 1].min(), uv[:, 0].max(), uv[:, 1].max()]
    )
    lims = np.array([w_img, h_img, w_img, h_img])
    clipped = np.clip(raw, 0.0, lims)
    if clipped[2] - clipped[0] <= 0.0 or clipped[3] - clipped[1] <= 0.0:
        return ProjectionFailure.DEGENERATE

    jac = np.zeros((4, 7))
    specs = [
        (uv[:, 0], du_dparam, True),
        (uv[:, 1], dv_dparam, True),
        (uv[:, 0], du_dparam, False),
        (uv[:, 1], dv_dparam, False),
    ]
    for row, (vals, dparam, pick_min) in enumerate(specs):
        if raw[row] < 0.0 or raw[row] > lims[row]:
            continue  # clipped: coordinate pinned to the image border
        weights = _extreme_weights(vals, pick_min)
        jac[row] = weights @ dparam
    return Box2D(*clipped), jac
