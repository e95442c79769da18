"""Synthetic multi-sensor scenes with the modality biases seen in practice.

The 3D sensor misses objects by distance (a stand-in for point sparsity),
confuses pedestrians with pole-like shapes, and emits pole-like false
positives; its confidence is a distorted, noisy function of box quality.
The 2D sensor misses objects by how occluded they are, rarely confuses
classes, and localizes tightly. Everything is driven by explicit seeds:
the same (config, seed) always yields the bit-identical corpus.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .boxes2d import Box2D
from .boxes3d import Box3D, CameraModel, ProjectionFailure, project_box_to_2d, project_points
from .frames import FrameBundle, GroundTruth2D, GroundTruth3D
from .pseudolabels import Detection2D, Detection3D

CLASS_NAMES = ("Car", "Pedestrian", "Cyclist")


def default_camera() -> CameraModel:
    proj = np.array(
        [[700.0, 0.0, 621.0, 0.0], [0.0, 700.0, 187.5, 0.0], [0.0, 0.0, 1.0, 0.0]]
    )
    return CameraModel(projection=proj, image_width=1242, image_height=375)


@dataclass
class SceneObject:
    box: Box3D
    class_index: int


@dataclass
class Scene:
    camera: CameraModel
    objects: list[SceneObject]
    frame_id: int = 0
    seed: int | tuple = 0


@dataclass
class SceneConfig:
    """Object placement priors; sizes are class-conditional (l, w, h)."""

    camera: CameraModel = field(default_factory=default_camera)
    class_probs: tuple = (0.5, 0.3, 0.2)
    size_means: tuple = ((3.9, 1.6, 1.56), (0.8, 0.6, 1.73), (1.76, 0.6, 1.73))
    size_stds: tuple = ((0.35, 0.10, 0.10), (0.08, 0.08, 0.07), (0.15, 0.08, 0.07))
    n_objects_min: int = 3
    n_objects_max: int = 9
    depth_min: float = 8.0
    depth_max: float = 50.0
    ground_y: float = 1.65
    overlap_rate: float = 0.35
    occluder_depth_factor: tuple = (1.15, 1.6)


@dataclass
class SensorProfile3D:
    """Distance-driven misses, shape confusion, pole-like false positives."""

    miss_base: float = 0.06
    miss_distance_gain: float = 0.10
    miss_ref_distance: float = 55.0
    miss_max: float = 0.95
    class_miss_scale: tuple = (1.0, 1.35, 1.2)
    confusion: tuple = (
        (0.94, 0.02, 0.04),
        (0.05, 0.75, 0.20),
        (0.06, 0.16, 0.78),
    )
    center_noise_std: tuple = (0.22, 0.05, 0.15)
    size_noise_std: tuple = (0.12, 0.06, 0.06)
    yaw_noise_std: float = 0.08
    # Per-class systematic box offsets (what a detector has to learn away).
    class_center_bias: tuple = ((0.0, 0.0, 0.0),) * 3
    class_size_bias: tuple = ((0.0, 0.0, 0.0),) * 3
    false_positive_rate: float = 1.4
    fp_class_probs: tuple = (0.15, 0.65, 0.20)
    fp_size_mean: tuple = (0.35, 0.35, 2.1)
    fp_size_std: tuple = (0.08, 0.08, 0.30)
    fp_conf_range: tuple = (0.30, 0.80)
    # With this probability a false positive spawns next to a real object
    # (poles and trees stand near the things they get confused with).
    fp_near_object_prob: float = 0.5
    fp_near_lateral_std: float = 1.1
    fp_near_depth_std: float = 2.0
    calib_sharpness: float = 4.0
    calib_midpoint: float = 0.45
    conf_noise_std: float = 0.12
    class_conf_scale: tuple = (1.0, 0.66, 0.85)
    conf_floor: float = 0.36

    def __post_init__(self):
        for row in self.confusion:
            if abs(sum(row) - 1.0) > 1e-9 or min(row) < 0:
                raise ValueError(f"confusion rows must be distributions: {row}")


@dataclass
class SensorProfile2D:
    """Occlusion-driven misses, little class confusion, tight boxes."""

    miss_base: float = 0.03
    miss_occlusion_gain: float = 0.90
    miss_occlusion_power: float = 1.5
    miss_max: float = 0.97
    confusion: tuple = (
        (0.985, 0.005, 0.010),
        (0.010, 0.960, 0.030),
        (0.015, 0.045, 0.940),
    )
    corner_noise_std: float = 3.0
    class_corner_bias: tuple = ((0.0, 0.0, 0.0, 0.0),) * 3
    false_positive_rate: float = 0.25
    fp_class_probs: tuple = (0.4, 0.3, 0.3)
    fp_size_range: tuple = (25.0, 120.0)
    fp_conf_range: tuple = (0.45, 0.92)
    calib_sharpness: float = 6.0
    calib_midpoint: float = 0.35
    conf_noise_std: float = 0.06
    class_conf_scale: tuple = (1.0, 0.97, 0.95)
    conf_floor: float = 0.36

    def __post_init__(self):
        for row in self.confusion:
            if abs(sum(row) - 1.0) > 1e-9 or min(row) < 0:
                raise ValueError(f"confusion rows must be distributions: {row}")


def noiseless_profile_3d() -> SensorProfile3D:
    """Sensor that reproduces ground truth exactly: for tests and demos."""
    identity = tuple(tuple(1.0 if i == j else 0.0 for j in range(3)) for i in range(3))
    return SensorProfile3D(
        miss_base=0.0, miss_distance_gain=0.0, class_miss_scale=(1.0, 1.0, 1.0),
        confusion=identity,
        center_noise_std=(0.0, 0.0, 0.0), size_noise_std=(0.0, 0.0, 0.0),
        yaw_noise_std=0.0, false_positive_rate=0.0,
        conf_noise_std=0.0, class_conf_scale=(1.0, 1.0, 1.0),
    )


def noiseless_profile_2d() -> SensorProfile2D:
    identity = tuple(tuple(1.0 if i == j else 0.0 for j in range(3)) for i in range(3))
    return SensorProfile2D(
        miss_base=0.0, miss_occlusion_gain=0.0, confusion=identity,
        corner_noise_std=0.0, false_positive_rate=0.0,
        conf_noise_std=0.0, class_conf_scale=(1.0, 1.0, 1.0),
    )


def _pixel_to_lateral(cam: CameraModel, u: float, z: float) -> float:
    fx = cam.projection[0, 0]
    cx = cam.projection[0, 2]
    return (u - cx) * z / fx


def sample_scene(config: SceneConfig, seed, frame_id: int = 0) -> Scene:
    """Place class-conditioned boxes on the ground plane; with probability
    overlap_rate a new object goes behind an existing one to occlude it."""
    rng = np.random.default_rng(seed)
    cam = config.camera
    n = int(rng.integers(config.n_objects_min, config.n_objects_max + 1))
    objects: list[SceneObject] = []
    for _ in range(n):
        cls = int(rng.choice(len(config.class_probs), p=np.array(config.class_probs)))
        mean = np.array(config.size_means[cls])
        std = np.array(config.size_stds[cls])
        dims = np.maximum(mean + rng.normal(0, 1, 3) * std, 0.25 * mean)

        occlude = len(objects) > 0 and rng.random() < config.overlap_rate
        if occlude:
            host = objects[int(rng.integers(0, len(objects)))]
            z = float(
                np.clip(
                    host.box.center_z * rng.uniform(*config.occluder_depth_factor),
                    config.depth_min,
                    config.depth_max,
                )
            )
            host_uv, _ = project_points(cam, host.box.center[None, :])
            fx = cam.projection[0, 0]
            host_px_width = fx * host.box.length / host.box.center_z
            u = float(host_uv[0, 0] + rng.normal(0, 0.25 * host_px_width))
        else:
            z = float(rng.uniform(config.depth_min, config.depth_max))
            u = float(rng.uniform(0.08 * cam.image_width, 0.92 * cam.image_width))
        x = _pixel_to_lateral(cam, u, z)
        y = config.ground_y - dims[2] / 2.0
        yaw = float(rng.uniform(-math.pi, math.pi))
        box = Box3D(x, y, z, float(dims[0]), float(dims[1]), float(dims[2]), yaw)
        objects.append(SceneObject(box=box, class_index=cls))
    return Scene(camera=cam, objects=objects, frame_id=frame_id, seed=seed)


def _clip_to(box: Box2D, target: Box2D) -> Box2D | None:
    x0 = max(box.x_min, target.x_min)
    y0 = max(box.y_min, target.y_min)
    x1 = min(box.x_max, target.x_max)
    y1 = min(box.y_max, target.y_max)
    if x1 <= x0 or y1 <= y0:
        return None
    return Box2D(x0, y0, x1, y1)


def _union_area(rects: list[Box2D]) -> float:
    """Exact union area of axis-aligned rectangles via an x sweep."""
    if not rects:
        return 0.0
    xs = sorted({r.x_min for r in rects} | {r.x_max for r in rects})
    total = 0.0
    for x0, x1 in zip(xs, xs[1:]):
        if x1 <= x0:
            continue
        spans = sorted(
            (r.y_min, r.y_max) for r in rects if r.x_min <= x0 and r.x_max >= x1
        )
        covered = 0.0
        cur_lo, cur_hi = None, None
        for lo, hi in spans:
            if cur_hi is None or lo > cur_hi:
                if cur_hi is not None:
                    covered += cur_hi - cur_lo
                cur_lo, cur_hi = lo, hi
            else:
                cur_hi = max(cur_hi, hi)
        if cur_hi is not None:
            covered += cur_hi - cur_lo
        total += covered * (x1 - x0)
    return total


def covered_fraction(scene: Scene, index: int, nearer_only: bool = True) -> float:
    """Fraction of an object's projected box covered by other objects."""
    target_obj = scene.objects[index]
    target = project_box_to_2d(scene.camera, target_obj.box)
    if isinstance(target, ProjectionFailure):
        raise ValueError(f"object {index} does not project into the image: {target}")
    _, target_depth = project_points(scene.camera, target_obj.box.center[None, :])
    overlaps = []
    for j, other in enumerate(scene.objects):
        if j == index:
            continue
        if nearer_only:
            _, other_depth = project_points(scene.camera, other.box.center[None, :])
            if other_depth[0] >= target_depth[0]:
                continue
        other_box = project_box_to_2d(scene.camera, other.box)
        if isinstance(other_box, ProjectionFailure):
            continue
        clipped = _clip_to(other_box, target)
        if clipped is not None:
            overlaps.append(clipped)
    if target.area <= 0.0:
        return 0.0
    return min(_union_area(overlaps) / target.area, 1.0)


def occlusion_fraction(scene: Scene, index: int) -> float:
    """Fraction of the projected box covered by objects nearer the camera."""
    return covered_fraction(scene, index, nearer_only=True)


def _calibrated_confidence(q: float, sharpness, midpoint, scale, noise, floor) -> float:
    def curve(v):
        return 1.0 / (1.0 + math.exp(-sharpness * (v - midpoint)))

    conf = curve(q) / curve(1.0) * scale + noise
    return float(np.clip(conf, floor, 1.0))


def _probs_from_confidence(conf: float, class_index: int, n_classes: int) -> np.ndarray:
    probs = np.full(n_classes, (1.0 - conf) / (n_classes - 1))
    probs[class_index] = conf
    return probs


def render_3d_detections(
    scene: Scene, profile: SensorProfile3D, seed, return_provenance: bool = False
):
    """Noisy 3D detections of a scene: per-object Bernoulli miss by distance,
    class sampled from the confusion row, Gaussian box noise, calibrated
    confidence, plus Poisson false positives."""
    rng = np.random.default_rng(seed)
    n_classes = len(profile.class_conf_scale)
    detections: list[Detection3D] = []
    provenance: list[int | None] = []

    for idx, obj in enumerate(scene.objects):
        b = obj.box
        dist = math.hypot(b.center_x, b.center_z)
        p_miss = min(
            (profile.miss_base + profile.miss_distance_gain * dist / profile.miss_ref_distance)
            * profile.class_miss_scale[obj.class_index],
            profile.miss_max,
        )
        missed = rng.random() < p_miss
        center_eta = rng.normal(0, 1, 3) * np.array(profile.center_noise_std)
        size_eta = rng.normal(0, 1, 3) * np.array(profile.size_noise_std)
        yaw_eta = rng.normal(0, profile.yaw_noise_std) if profile.yaw_noise_std else 0.0
        pred_class = int(rng.choice(n_classes, p=np.array(profile.confusion[obj.class_index])))
        conf_eta = rng.normal(0, profile.conf_noise_std) if profile.conf_noise_std else 0.0
        if missed:
            continue

        center = b.center + center_eta + np.array(profile.class_center_bias[obj.class_index])
        dims = np.array([b.length, b.width, b.height]) + size_eta
        dims += np.array(profile.class_size_bias[obj.class_index])
        dims = np.maximum(dims, 0.2 * np.array([b.length, b.width, b.height]))
        noisy = Box3D(
            float(center[0]), float(center[1]), float(center[2]),
            float(dims[0]), float(dims[1]), float(dims[2]), b.yaw + yaw_eta,
        )
        # latent quality decays with the realized noise magnitude
        mag = (
            abs(center_eta[0]) / 0.5 + abs(center_eta[1]) / 0.3 + abs(center_eta[2]) / 0.5
            + abs(size_eta[0]) / 0.3 + abs(size_eta[1]) / 0.2 + abs(size_eta[2]) / 0.2
            + abs(yaw_eta) / 0.5
        ) / 7.0
        q = math.exp(-mag)
        conf = _calibrated_confidence(
            q, profile.calib_sharpness, profile.calib_midpoint,
            profile.class_conf_scale[pred_class], conf_eta, profile.conf_floor,
        )
        probs = _probs_from_confidence(conf, pred_class, n_classes)
        detections.append(Detection3D(box=noisy, probs=probs))
        provenance.append(idx)

    n_fp = int(rng.poisson(profile.false_positive_rate))
    cam = scene.camera
    for _ in range(n_fp):
        near = scene.objects and rng.random() < profile.fp_near_object_prob
        if near:
            anchor = scene.objects[int(rng.integers(0, len(scene.objects)))].box
            z = float(max(anchor.center_z + rng.normal(0, profile.fp_near_depth_std), 5.0))
            x = float(anchor.center_x + rng.normal(0, profile.fp_near_lateral_std))
        else:
            z = float(rng.uniform(8.0, 55.0))
            u = float(rng.uniform(0.1 * cam.image_width, 0.9 * cam.image_width))
            x = _pixel_to_lateral(cam, u, z)
        dims = np.maximum(
            np.array(profile.fp_size_mean) + rng.normal(0, 1, 3) * np.array(profile.fp_size_std),
            0.1,
        )
        cls = int(rng.choice(n_classes, p=np.array(profile.fp_class_probs)))
        conf = float(
            np.clip(rng.uniform(*profile.fp_conf_range), profile.conf_floor, 1.0)
        )
        box = Box3D(
            x, 1.65 - dims[2] / 2.0, z,
            float(dims[0]), float(dims[1]), float(dims[2]),
            float(rng.uniform(-math.pi, math.pi)),
        )
        detections.append(
            Detection3D(box=box, probs=_probs_from_confidence(conf, cls, n_classes))
        )
        provenance.append(None)

    if return_provenance:
        return detections, provenance
    return detections


def render_2d_detections(
    scene: Scene, profile: SensorProfile2D, seed, return_provenance: bool = False
):
    """Noisy 2D detections: misses driven by occlusion fraction, corner
    noise on the projected tight box, calibrated confidence, independent
    false positives."""
    rng = np.random.default_rng(seed)
    n_classes = len(profile.class_conf_scale)
    cam = scene.camera
    detections: list[Detection2D] = []
    provenance: list[int | None] = []

    for idx, obj in enumerate(scene.objects):
        projected = project_box_to_2d(cam, obj.box)
        if isinstance(projected, ProjectionFailure):
            continue
        occ = occlusion_fraction(scene, idx)
        p_miss = min(
            profile.miss_base
            + profile.miss_occlusion_gain * occ**profile.miss_occlusion_power,
            profile.miss_max,
        )
        missed = rng.random() < p_miss
        corner_eta = rng.normal(0, profile.corner_noise_std, 4) if profile.corner_noise_std else np.zeros(4)
        pred_class = int(rng.choice(n_classes, p=np.array(profile.confusion[obj.class_index])))
        conf_eta = rng.normal(0, profile.conf_noise_std) if profile.conf_noise_std else 0.0
        if missed:
            continue

        bias = profile.class_corner_bias[obj.class_index]
        x0 = projected.x_min + corner_eta[0] + bias[0]
        y0 = projected.y_min + corner_eta[1] + bias[1]
        x1 = projected.x_max + corner_eta[2] + bias[2]
        y1 = projected.y_max + corner_eta[3] + bias[3]
        if x1 <= x0:
            x0, x1 = x1, x0
        if y1 <= y0:
            y0, y1 = y1, y0
        noisy = Box2D(
            float(np.clip(x0, 0, cam.image_width - 1e-6)),
            float(np.clip(y0, 0, cam.image_height - 1e-6)),
            float(np.clip(x1, 1e-6, cam.image_width)),
            float(np.clip(y1, 1e-6, cam.image_height)),
        )
        ref = max(projected.width, 12.0)
        mag = float(np.mean(np.abs(corner_eta))) / (0.4 * ref)
        q = math.exp(-mag)
        conf = _calibrated_confidence(
            q, profile.calib_sharpness, profile.calib_midpoint,
            profile.class_conf_scale[pred_class], conf_eta, profile.conf_floor,
        )
        probs = _probs_from_confidence(conf, pred_class, n_classes)
        detections.append(Detection2D(box=noisy, probs=probs))
        provenance.append(idx)

    n_fp = int(rng.poisson(profile.false_positive_rate))
    for _ in range(n_fp):
        w = float(rng.uniform(*profile.fp_size_range))
        h = float(rng.uniform(*profile.fp_size_range))
        x0 = float(rng.uniform(0, cam.image_width - w))
        y0 = float(rng.uniform(0, cam.image_height - h))
        cls = int(rng.choice(n_classes, p=np.array(profile.fp_class_probs)))
        conf = float(
            np.clip(rng.uniform(*profile.fp_conf_range), profile.conf_floor, 1.0)
        )
        detections.append(
            Detection2D(
                box=Box2D(x0, y0, x0 + w, y0 + h),
                probs=_probs_from_confidence(conf, cls, n_classes),
            )
        )
        provenance.append(None)

    if return_provenance:
        return detections, provenance
    return detections


@dataclass
class SimulatorConfig:
    scene: SceneConfig = field(default_factory=SceneConfig)
    profile_3d: SensorProfile3D = field(default_factory=SensorProfile3D)
    profile_2d: SensorProfile2D = field(default_factory=SensorProfile2D)


def simulate_frame(config: SimulatorConfig, master_seed: int, frame_id: int) -> FrameBundle:
    """One frame: scene, both sensors, ground truth with occlusion levels.

    Per-frame RNG streams derive from (master seed, frame id, stream), so
    frames can be generated independently and in any order.
    """
    scene = sample_scene(config.scene, seed=[master_seed, frame_id, 0], frame_id=frame_id)
    dets3 = render_3d_detections(scene, config.profile_3d, seed=[master_seed, frame_id, 1])
    dets2 = render_2d_detections(scene, config.profile_2d, seed=[master_seed, frame_id, 2])
    gt_3d = [GroundTruth3D(box=o.box, class_index=o.class_index) for o in scene.objects]
    gt_2d = []
    for idx, obj in enumerate(scene.objects):
        projected = project_box_to_2d(scene.camera, obj.box)
        if isinstance(projected, ProjectionFailure):
            continue
        gt_2d.append(
            GroundTruth2D(
                box=projected,
                class_index=obj.class_index,
                occlusion=occlusion_fraction(scene, idx),
            )
        )
    return FrameBundle(
        frame_id=frame_id,
        camera=scene.camera,
        detections_2d=dets2,
        detections_3d=dets3,
        gt_2d=gt_2d,
        gt_3d=gt_3d,
    )


def simulate_corpus(config: SimulatorConfig, n_frames: int, master_seed: int) -> list[FrameBundle]:
    return [simulate_frame(config, master_seed, i) for i in range(n_frames)]
