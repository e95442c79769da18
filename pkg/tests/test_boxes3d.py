import math

import numpy as np
import pytest

from crossmatch.boxes2d import Box2D
from crossmatch.boxes3d import (
    Box3D,
    CameraModel,
    ProjectionFailure,
    box3d_corners,
    normalize_yaw,
    project_box_to_2d,
    project_box_to_2d_grad,
    project_points,
)


def simple_camera(f=1.0, width=4, height=4):
    # principal point at the image center so the optical axis maps there
    proj = np.array(
        [[f, 0.0, width / 2, 0.0], [0.0, f, height / 2, 0.0], [0.0, 0.0, 1.0, 0.0]]
    )
    return CameraModel(projection=proj, image_width=width, image_height=height)


def centered_camera(f=1.0, extent=4.0):
    # no principal point offset; pixels can be negative, image is [0, extent]
    proj = np.array([[f, 0, 0, 0], [0, f, 0, 0], [0, 0, 1, 0]], dtype=float)
    return CameraModel(projection=proj, image_width=extent, image_height=extent)


def test_yaw_normalization():
    assert normalize_yaw(0.0) == 0.0
    assert normalize_yaw(math.pi) == pytest.approx(math.pi)
    assert normalize_yaw(-math.pi) == pytest.approx(math.pi)
    assert normalize_yaw(3 * math.pi) == pytest.approx(math.pi)
    assert normalize_yaw(-0.3 + 4 * math.pi) == pytest.approx(-0.3)
    assert Box3D(0, 0, 0, 1, 1, 1, 5 * math.pi / 2).yaw == pytest.approx(math.pi / 2)


def test_dimension_validation():
    with pytest.raises(ValueError):
        Box3D(0, 0, 0, -1.0, 1.0, 1.0, 0.0)
    with pytest.raises(ValueError):
        Box3D(0, 0, 0, 1.0, 0.0, 1.0, 0.0)


def test_unit_cube_corners():
    corners = box3d_corners(Box3D(0, 0, 0, 1, 1, 1, 0.0))
    expected = {(sx * 0.5, sy * 0.5, sz * 0.5) for sx in (-1, 1) for sy in (-1, 1) for sz in (-1, 1)}
    got = {tuple(np.round(c, 12)) for c in corners}
    assert got == expected


def test_unit_cube_quarter_turn_same_corner_set():
    base = box3d_corners(Box3D(0, 0, 0, 1, 1, 1, 0.0))
    turned = box3d_corners(Box3D(0, 0, 0, 1, 1, 1, math.pi / 2))
    base_set = {tuple(np.round(c, 9)) for c in base}
    turned_set = {tuple(np.round(c, 9)) for c in turned}
    assert base_set == turned_set
    # the bottom face ordering shifts by one position around the ring
    assert np.allclose(turned[0], base[3], atol=1e-12)


def test_corners_against_rotation_matrix_oracle():
    box = Box3D(2.0, 0.0, 10.0, 4.0, 2.0, 1.5, 0.3)
    c, s = math.cos(0.3), math.sin(0.3)
    rot = np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]])
    locals_ = []
    for sx, sy, sz in [
        (+1, +1, +1), (-1, +1, +1), (-1, +1, -1), (+1, +1, -1),
        (+1, -1, +1), (-1, -1, +1), (-1, -1, -1), (+1, -1, -1),
    ]:
        locals_.append([sx * 2.0, sy * 0.75, sz * 1.0])
    expected = np.array([[2.0, 0.0, 10.0] + rot @ v for v in np.array(locals_)])
    assert np.allclose(box3d_corners(box), expected, atol=1e-12)


def test_project_principal_axis():
    cam = centered_camera()
    uv, depth = project_points(cam, [[0.0, 0.0, 5.0]])
    assert np.allclose(uv[0], [0.0, 0.0])
    assert depth[0] == 5.0


def test_project_simple_division():
    cam = centered_camera()
    uv, depth = project_points(cam, [[1.0, 2.0, 2.0]])
    assert np.allclose(uv[0], [0.5, 1.0])
    assert depth[0] == 2.0


def test_tight_box_unit_cube_at_10m():
    cam = centered_camera(extent=4.0)
    box = Box3D(0, 0, 10, 1, 1, 1, 0.0)
    # near face at depth 9.5 bounds the projection; image clip keeps x,y >= 0
    # so use a shifted cube to dodge the clip at 0
    shifted = Box3D(2.0, 1.0, 10.0, 1, 1, 1, 0.0)
    got = project_box_to_2d(cam, shifted)
    assert isinstance(got, Box2D)
    assert got.x_min == pytest.approx(1.5 / 10.5)
    assert got.x_max == pytest.approx(2.5 / 9.5)
    assert got.y_min == pytest.approx(0.5 / 10.5)
    assert got.y_max == pytest.approx(1.5 / 9.5)
    # the symmetric cube spans +-0.5/9.5 before clipping
    sym = project_box_to_2d(centered_camera(extent=4.0), box)
    assert isinstance(sym, Box2D)
    assert sym.x_max == pytest.approx(0.5 / 9.5)
    assert sym.x_min == 0.0  # clipped at the image edge


def test_behind_camera_flagged():
    cam = centered_camera()
    assert (
        project_box_to_2d(cam, Box3D(0, 0, -5.0, 1, 1, 1, 0.0))
        is ProjectionFailure.BEHIND_CAMERA
    )


def test_fully_outside_image_degenerate():
    cam = simple_camera(f=100.0, width=200, height=200)
    # far left of the frustum: all pixels clip to x = 0
    box = Box3D(-50.0, 0.0, 10.0, 1, 1, 1, 0.0)
    assert project_box_to_2d(cam, box) is ProjectionFailure.DEGENERATE


def test_projected_corners_inside_tight_box():
    rng = np.random.default_rng(0)
    cam = simple_camera(f=300.0, width=800, height=600)
    for _ in range(100):
        box = Box3D(
            rng.uniform(-4, 4),
            rng.uniform(-1, 1),
            rng.uniform(8, 40),
            rng.uniform(0.5, 4),
            rng.uniform(0.5, 3),
            rng.uniform(0.5, 2.5),
            rng.uniform(-math.pi, math.pi),
        )
        uv, depths = project_points(cam, box3d_corners(box))
        assert np.all(depths > 0)
        raw = Box2D(uv[:, 0].min(), uv[:, 1].min(), uv[:, 0].max(), uv[:, 1].max())
        got = project_box_to_2d(cam, box)
        if not isinstance(got, Box2D):
            continue
        assert got.x_min >= raw.x_min - 1e-9 and got.x_max <= raw.x_max + 1e-9
        # unclipped coordinates agree exactly with the corner min/max
        if 0 <= raw.x_min and raw.x_max <= 800:
            assert got.x_min == raw.x_min and got.x_max == raw.x_max


def test_shrinking_never_enlarges_tight_box():
    rng = np.random.default_rng(1)
    cam = simple_camera(f=300.0, width=800, height=600)
    for _ in range(100):
        box = Box3D(
            rng.uniform(-3, 3), rng.uniform(-1, 1), rng.uniform(10, 40),
            rng.uniform(1, 4), rng.uniform(1, 3), rng.uniform(1, 2.5),
            rng.uniform(-math.pi, math.pi),
        )
        scale = rng.uniform(0.3, 0.95)
        small = Box3D(
            box.center_x, box.center_y, box.center_z,
            box.length * scale, box.width * scale, box.height * scale, box.yaw,
        )
        big_fit = project_box_to_2d(cam, box)
        small_fit = project_box_to_2d(cam, small)
        if not isinstance(big_fit, Box2D) or not isinstance(small_fit, Box2D):
            continue
        assert small_fit.x_min >= big_fit.x_min - 1e-9
        assert small_fit.y_min >= big_fit.y_min - 1e-9
        assert small_fit.x_max <= big_fit.x_max + 1e-9
        assert small_fit.y_max <= big_fit.y_max + 1e-9


def test_doubling_depth_shrinks_by_depth_ratio():
    cam = simple_camera(f=300.0, width=2000, height=2000)
    rng = np.random.default_rng(2)
    for _ in range(50):
        z = rng.uniform(10, 30)
        box = Box3D(
            0.0, 0.0, z, rng.uniform(1, 4), rng.uniform(1, 3), rng.uniform(1, 2.5),
            rng.uniform(-math.pi, math.pi),
        )
        far = Box3D(0.0, 0.0, 2 * z, box.length, box.width, box.height, box.yaw)
        near_fit = project_box_to_2d(cam, box)
        far_fit = project_box_to_2d(cam, far)
        assert isinstance(near_fit, Box2D) and isinstance(far_fit, Box2D)
        uv, depths = project_points(cam, box3d_corners(box))
        lo = depths.min() / (depths.min() + z)  # min depth ratio near/far
        hi = depths.max() / (depths.max() + z)
        for ratio in (
            far_fit.width / near_fit.width,
            far_fit.height / near_fit.height,
        ):
            assert min(lo, hi) - 1e-9 <= ratio <= max(lo, hi) + 1e-9


def test_grad_variant_matches_plain_projection():
    rng = np.random.default_rng(3)
    cam = simple_camera(f=300.0, width=800, height=600)
    for _ in range(50):
        box = Box3D(
            rng.uniform(-3, 3), rng.uniform(-1, 1), rng.uniform(10, 40),
            rng.uniform(1, 4), rng.uniform(1, 3), rng.uniform(1, 2.5),
            rng.uniform(-math.pi, math.pi),
        )
        plain = project_box_to_2d(cam, box)
        with_grad = project_box_to_2d_grad(cam, box)
        if isinstance(plain, Box2D):
            assert isinstance(with_grad, tuple)
            assert plain.as_tuple() == with_grad[0].as_tuple()
        else:
            assert with_grad is plain
