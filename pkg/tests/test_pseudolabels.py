import numpy as np
import pytest

from crossmatch.assignment import brute_force_assign
from crossmatch.boxes2d import Box2D
from crossmatch.boxes3d import Box3D, CameraModel, project_box_to_2d
from crossmatch.matching import CostWeights, build_cost_matrix
from crossmatch.pseudolabels import (
    Detection2D,
    Detection3D,
    confidence_filter,
    ema_momentum,
    ema_update,
    match_teachers,
    pair_for_consistency,
)


CAM = CameraModel(
    projection=np.array(
        [[700.0, 0.0, 400.0, 0.0], [0.0, 700.0, 300.0, 0.0], [0.0, 0.0, 1.0, 0.0]]
    ),
    image_width=800,
    image_height=600,
)
WEIGHTS = CostWeights()


def probs_for(conf, n=3, top=0):
    p = np.full(n, (1.0 - conf) / (n - 1))
    p[top] = conf
    return p


def make_det3d(x, z, conf=0.9, top=0, l=3.9, w=1.6, h=1.5, yaw=0.0, y=0.0):
    return Detection3D(box=Box3D(x, y, z, l, w, h, yaw), probs=probs_for(conf, top=top))


def aligned_det2d(det3d, conf=0.9, top=0):
    projected = project_box_to_2d(CAM, det3d.box)
    assert isinstance(projected, Box2D)
    return Detection2D(box=projected, probs=probs_for(conf, top=top))


def test_score_is_max_probs():
    d = make_det3d(0, 15, conf=0.7)
    assert d.score == pytest.approx(0.7)
    with pytest.raises(ValueError):
        Detection3D(box=d.box, probs=probs_for(0.7), score=0.9)


def test_confidence_filter_thresholds():
    dets = [make_det3d(0, 10, conf=c) for c in (0.35, 0.45, 0.72, 0.95)]
    assert [d.score for d in confidence_filter(dets, 0.3)] == pytest.approx(
        [0.35, 0.45, 0.72, 0.95]
    )
    kept = confidence_filter(dets, 0.7)
    assert [d.score for d in kept] == pytest.approx([0.72, 0.95])
    assert confidence_filter(dets, 1.0) == []
    assert confidence_filter([make_det3d(0, 10, conf=0.4)], 0.4) == []  # strict


def test_match_single_aligned_pair():
    d3 = make_det3d(0.0, 14.0)
    d2 = aligned_det2d(d3)
    pairs = match_teachers([d2], [d3], CAM, WEIGHTS, tau_hung=-1.5)
    assert len(pairs) == 1
    assert pairs[0].cost == pytest.approx(-2.0, abs=0.05)
    assert pairs[0].index_2d == 0 and pairs[0].index_3d == 0


def test_unreachable_threshold_empty():
    d3 = make_det3d(0.0, 14.0)
    d2 = aligned_det2d(d3)
    assert match_teachers([d2], [d3], CAM, WEIGHTS, tau_hung=-10.0) == []


def test_correct_2d_box_chosen():
    d3 = make_det3d(0.0, 14.0)
    good = aligned_det2d(d3)
    bad = Detection2D(box=Box2D(600, 400, 700, 500), probs=probs_for(0.9))
    pairs = match_teachers([bad, good], [d3], CAM, WEIGHTS, tau_hung=-1.5)
    assert len(pairs) == 1
    assert pairs[0].index_2d == 1
    # brute force on the same 2x1 matrix picks the same column
    m = build_cost_matrix([bad, good], [d3], CAM, WEIGHTS, 800, 600)
    oracle = brute_force_assign(m)
    assert oracle.pairs == ((1, 0),)


def test_behind_camera_excluded_before_matching():
    behind = Detection3D(box=Box3D(0, 0, -10.0, 1, 1, 1, 0), probs=probs_for(0.9))
    d3 = make_det3d(0.0, 14.0)
    d2 = aligned_det2d(d3)
    pairs = match_teachers([d2], [behind, d3], CAM, WEIGHTS, tau_hung=-1.0)
    assert len(pairs) == 1
    assert pairs[0].index_3d == 1


def test_injective_and_below_threshold():
    rng = np.random.default_rng(0)
    dets3 = [make_det3d(rng.uniform(-4, 4), rng.uniform(9, 30)) for _ in range(6)]
    dets2 = [aligned_det2d(d) for d in dets3[:4]]
    pairs = match_teachers(dets2, dets3, CAM, WEIGHTS, tau_hung=-1.5)
    assert all(p.cost < -1.5 for p in pairs)
    assert len({p.index_2d for p in pairs}) == len(pairs)
    assert len({p.index_3d for p in pairs}) == len(pairs)
    assert len(pairs) <= min(len(dets2), len(dets3))


def test_permutation_invariance_of_matched_content():
    rng = np.random.default_rng(1)
    dets3 = [make_det3d(rng.uniform(-4, 4), rng.uniform(9, 30)) for _ in range(5)]
    dets2 = [aligned_det2d(d, conf=rng.uniform(0.5, 0.95)) for d in dets3]
    base = match_teachers(dets2, dets3, CAM, WEIGHTS, tau_hung=-1.0)
    perm2 = [3, 1, 4, 0, 2]
    perm3 = [2, 0, 4, 1, 3]
    shuffled = match_teachers(
        [dets2[i] for i in perm2], [dets3[j] for j in perm3], CAM, WEIGHTS, tau_hung=-1.0
    )
    def content(pairs):
        return sorted(
            (p.det2d.box.as_tuple(), tuple(p.det3d.box.as_array()), round(p.cost, 9))
            for p in pairs
        )
    assert content(base) == content(shuffled)


def test_pre_filter_flags():
    # 4 classes so a 0.28 top probability is still the argmax
    low = Detection3D(
        box=Box3D(0.0, 0.0, 14.0, 3.9, 1.6, 1.5, 0.0),
        probs=np.array([0.28, 0.24, 0.24, 0.24]),
    )
    projected = project_box_to_2d(CAM, low.box)
    d2 = Detection2D(box=projected, probs=np.array([0.91, 0.03, 0.03, 0.03]))
    assert len(match_teachers([d2], [low], CAM, WEIGHTS, tau_hung=-1.0)) == 1
    assert (
        match_teachers([d2], [low], CAM, WEIGHTS, tau_hung=-1.0, pre_filter_3d=0.3)
        == []
    )


def test_pair_for_consistency_same_mechanics():
    d3 = make_det3d(1.0, 18.0)
    d2 = aligned_det2d(d3)
    teacher_pairs = match_teachers([d2], [d3], CAM, WEIGHTS, tau_hung=-1.5)
    student_pairs = pair_for_consistency([d2], [d3], CAM, WEIGHTS, tau_hung=-1.5)
    assert len(student_pairs) == len(teacher_pairs) == 1
    assert student_pairs[0].cost == pytest.approx(teacher_pairs[0].cost)
    assert pair_for_consistency([d2], [], CAM, WEIGHTS, tau_hung=-1.5) == []


def test_pairing_stable_under_small_perturbation():
    rng = np.random.default_rng(2)
    dets3 = [make_det3d(-2.0, 12.0), make_det3d(2.5, 20.0)]
    dets2 = [aligned_det2d(d) for d in dets3]
    base = pair_for_consistency(dets2, dets3, CAM, WEIGHTS, tau_hung=-1.0)
    assert {(p.index_2d, p.index_3d) for p in base} == {(0, 0), (1, 1)}
    for _ in range(20):
        moved = [
            Detection3D(
                box=Box3D(
                    d.box.center_x + rng.normal(0, 0.05),
                    d.box.center_y,
                    d.box.center_z + rng.normal(0, 0.05),
                    d.box.length, d.box.width, d.box.height, d.box.yaw,
                ),
                probs=d.probs,
            )
            for d in dets3
        ]
        perturbed = pair_for_consistency(dets2, moved, CAM, WEIGHTS, tau_hung=-1.0)
        assert {(p.index_2d, p.index_3d) for p in perturbed} == {(0, 0), (1, 1)}
        m = build_cost_matrix(dets2, moved, CAM, WEIGHTS, 800, 600)
        assert brute_force_assign(m).pairs == ((0, 0), (1, 1))


def test_ema_update_basic():
    assert ema_update(np.array([1.0]), np.array([0.0]), 0.99)[0] == pytest.approx(0.99)
    teacher = np.array([3.0, -2.0, 0.5])
    assert np.array_equal(ema_update(teacher, np.zeros(3), 1.0), teacher)
    with pytest.raises(ValueError):
        ema_update(np.zeros(3), np.zeros(4), 0.9)
    with pytest.raises(ValueError):
        ema_update(np.zeros(3), np.zeros(3), 1.5)


def test_ema_geometric_convergence():
    alpha = 0.97
    student = np.full(5, 2.5)
    teacher = np.array([10.0, -4.0, 0.0, 2.5, 100.0])
    err0 = teacher - student
    t = teacher.copy()
    for k in range(1, 101):
        t = ema_update(t, student, alpha)
        assert np.allclose(t - student, alpha**k * err0, rtol=1e-12, atol=1e-12)


def test_ema_affine_in_both_arguments():
    rng = np.random.default_rng(7)
    a, b = rng.normal(size=6), rng.normal(size=6)
    c, d = rng.normal(size=6), rng.normal(size=6)
    alpha = 0.9
    left = ema_update(a + c, b + d, alpha)
    right = ema_update(a, b, alpha) + ema_update(c, d, alpha)
    assert np.allclose(left, right)


def test_ema_momentum_schedule():
    assert ema_momentum(0, 1000) == pytest.approx(0.99)
    assert ema_momentum(1000, 1000) == pytest.approx(0.999)
    assert ema_momentum(5000, 1000) == pytest.approx(0.999)
    assert ema_momentum(500, 1000) == pytest.approx(0.9945)
    assert ema_momentum(3, 0) == pytest.approx(0.999)
    with pytest.raises(ValueError):
        ema_momentum(-1, 100)
