"""Desk-scale teacher-student training on differentiable toy detectors.

A toy detector wraps the simulator's measurement stream: it owns a per-class
box bias, a global per-class logit offset, and a noise gate, all trained by
gradient descent. That is enough to exercise every loss path of the
semi-supervised setup: supervised losses on labeled frames, pseudo-label
losses on unlabeled frames (confidence-threshold or cross-modal matching),
the 2D-3D consistency loss into the 3D student, and EMA teachers with a
momentum ramp. Teacher and student share each frame's measurements; weak
and strong per-pass noise keeps their predictions decoupled, standing in
for asymmetric augmentation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .boxes2d import Box2D, iou2d
from .boxes3d import Box3D, ProjectionFailure, project_box_to_2d
from .evalmetrics import average_precision, iou3d, pr_curve
from .frames import FrameBundle
from .matching import ConsistencyWeights, CostWeights, consistency_loss, focal_loss, softmax
from .pseudolabels import (
    Detection2D,
    Detection3D,
    confidence_filter,
    ema_momentum,
    ema_update,
    match_teachers,
    pair_for_consistency,
)
from .simulate import (
    CLASS_NAMES,
    Scene,
    SceneConfig,
    SensorProfile2D,
    SensorProfile3D,
    SimulatorConfig,
    render_2d_detections,
    render_3d_detections,
    sample_scene,
)

MODES = ("labeled-only", "confidence", "detmatch")

_PARAM_DIM = {"2d": 4, "3d": 7}
# per-pass augmentation noise, in parameter units per modality
_NOISE_UNIT = {"2d": 20.0, "3d": 0.35}


class ToyDetector:
    """Affine correction head over sensor measurements.

    Parameters: box_bias (C x D) added to the measured box of the predicted
    class, logit_offsets (C) added to every measurement's class logits, and
    a scalar noise gate multiplying the per-pass augmentation noise.
    """

    def __init__(self, modality: str, n_classes: int = 3):
        if modality not in _PARAM_DIM:
            raise ValueError(f"modality must be '2d' or '3d', got {modality!r}")
        self.modality = modality
        self.n_classes = n_classes
        self.box_bias = np.zeros((n_classes, _PARAM_DIM[modality]))
        self.logit_offsets = np.zeros(n_classes)
        self.noise_gate = 1.0

    @property
    def param_dim(self) -> int:
        return _PARAM_DIM[self.modality]

    def to_vector(self) -> np.ndarray:
        return np.concatenate(
            [self.box_bias.reshape(-1), self.logit_offsets, [self.noise_gate]]
        )

    def load_vector(self, vec: np.ndarray) -> None:
        c, d = self.n_classes, self.param_dim
        expected = c * d + c + 1
        if vec.size != expected:
            raise ValueError(f"expected {expected} parameters, got {vec.size}")
        self.box_bias = vec[: c * d].reshape(c, d).copy()
        self.logit_offsets = vec[c * d : c * d + c].copy()
        self.noise_gate = float(vec[-1])

    def copy(self) -> "ToyDetector":
        out = ToyDetector(self.modality, self.n_classes)
        out.load_vector(self.to_vector())
        return out


@dataclass
class ToyDet:
    """One transformed detection with everything gradients need."""

    params: np.ndarray  # box parameters after bias and gated noise
    logits: np.ndarray
    probs: np.ndarray
    class_index: int
    eta: np.ndarray  # raw pass noise; d params / d gate
    source: int | None = None

    @property
    def score(self) -> float:
        return float(self.probs.max())


@dataclass
class ToyGrads:
    box_bias: np.ndarray
    logit_offsets: np.ndarray
    noise_gate: float = 0.0

    @staticmethod
    def zeros(det: ToyDetector) -> "ToyGrads":
        return ToyGrads(
            box_bias=np.zeros_like(det.box_bias),
            logit_offsets=np.zeros_like(det.logit_offsets),
        )

    def add_scaled(self, other: "ToyGrads", scale: float = 1.0) -> None:
        self.box_bias += scale * other.box_bias
        self.logit_offsets += scale * other.logit_offsets
        self.noise_gate += scale * other.noise_gate


@dataclass
class ForwardContext:
    """A frame's fixed measurements for one modality."""

    meas_params: np.ndarray  # (N, D)
    meas_logits: np.ndarray  # (N, C)
    sources: list


def _clamp_params(params: np.ndarray, modality: str) -> np.ndarray:
    p = params.copy()
    if modality == "3d":
        p[3:6] = np.maximum(p[3:6], 0.05)
    else:
        p[2] = max(p[2], p[0] + 1e-3)
        p[3] = max(p[3], p[1] + 1e-3)
    return p


def forward_from_context(
    detector: ToyDetector, ctx: ForwardContext, eta: np.ndarray
) -> list[ToyDet]:
    """Apply the detector's corrections to fixed measurements plus the
    given pass noise (shape (N, D), pre-gate)."""
    out = []
    for i in range(ctx.meas_params.shape[0]):
        logits = ctx.meas_logits[i] + detector.logit_offsets
        probs = softmax(logits)
        cls = int(np.argmax(probs))
        params = (
            ctx.meas_params[i]
            + detector.box_bias[cls]
            + detector.noise_gate * eta[i]
        )
        out.append(
            ToyDet(
                params=_clamp_params(params, detector.modality),
                logits=logits,
                probs=probs,
                class_index=cls,
                eta=eta[i],
                source=ctx.sources[i],
            )
        )
    return out


def _context_3d(scene: Scene, profile: SensorProfile3D, seed) -> ForwardContext:
    dets, prov = render_3d_detections(scene, profile, seed, return_provenance=True)
    n = len(dets)
    params = np.zeros((n, 7))
    logits = np.zeros((n, len(profile.class_conf_scale)))
    for i, det in enumerate(dets):
        params[i] = det.box.as_array()
        logits[i] = np.log(np.maximum(det.probs, 1e-12))
    return ForwardContext(meas_params=params, meas_logits=logits, sources=prov)


def _context_2d(scene: Scene, profile: SensorProfile2D, seed) -> ForwardContext:
    dets, prov = render_2d_detections(scene, profile, seed, return_provenance=True)
    n = len(dets)
    params = np.zeros((n, 4))
    logits = np.zeros((n, len(profile.class_conf_scale)))
    for i, det in enumerate(dets):
        params[i] = det.box.as_array()
        logits[i] = np.log(np.maximum(det.probs, 1e-12))
    return ForwardContext(meas_params=params, meas_logits=logits, sources=prov)


def toy_forward(
    detector: ToyDetector,
    scene: Scene,
    profile,
    seed,
    pass_noise_std: float = 0.0,
    pass_seed=None,
) -> list[ToyDet]:
    """Render the sensor measurements of a scene (deterministic in ``seed``)
    and run them through the detector. Pass noise is drawn from
    ``pass_seed`` and scaled by the modality's parameter unit."""
    if detector.modality == "3d":
        ctx = _context_3d(scene, profile, seed)
    else:
        ctx = _context_2d(scene, profile, seed)
    n = ctx.meas_params.shape[0]
    if pass_noise_std > 0.0 and pass_seed is not None:
        rng = np.random.default_rng(pass_seed)
        eta = rng.normal(0.0, pass_noise_std * _NOISE_UNIT[detector.modality], ctx.meas_params.shape)
    else:
        eta = np.zeros_like(ctx.meas_params)
    return forward_from_context(detector, ctx, eta)


def to_detection_3d(det: ToyDet) -> Detection3D:
    return Detection3D(box=Box3D.from_array(det.params), probs=det.probs)


def to_detection_2d(det: ToyDet) -> Detection2D:
    return Detection2D(box=Box2D(*det.params), probs=det.probs)


def _smooth_l1(x: float, beta: float = 1.0) -> tuple[float, float]:
    if abs(x) < beta:
        return 0.5 * x * x / beta, x / beta
    return abs(x) - 0.5 * beta, math.copysign(1.0, x)


def _wrap_angle(x: float) -> float:
    return math.remainder(x, 2.0 * math.pi)


def _box_iou_toy(a: np.ndarray, b: np.ndarray, modality: str) -> float:
    if modality == "3d":
        return iou3d(Box3D.from_array(a), Box3D.from_array(b))
    return iou2d(Box2D(*a), Box2D(*b))


@dataclass
class SupervisedLoss:
    loss: float
    loc: float
    cls: float
    grads: ToyGrads
    n_matched: int
    no_matches: bool


def supervised_loss(
    preds: list[ToyDet],
    labels: list[tuple[np.ndarray, int]],
    detector: ToyDetector,
    match_iou_min: float = 0.1,
    focal_gamma: float = 2.0,
    focal_alpha: float = 0.25,
    beta: float = 1.0,
) -> SupervisedLoss:
    """Smooth-L1 on greedily IoU-matched box parameters plus focal loss on
    the matched hard labels, averaged over matched pairs, with gradients in
    the detector parameters. No matches at all is flagged."""
    grads = ToyGrads.zeros(detector)
    if not preds or not labels:
        return SupervisedLoss(0.0, 0.0, 0.0, grads, 0, True)

    order = sorted(range(len(preds)), key=lambda i: (-preds[i].score, i))
    free = list(range(len(labels)))
    matched: list[tuple[int, int]] = []
    for i in order:
        best_iou, best_j = 0.0, None
        for j in free:
            iou = _box_iou_toy(preds[i].params, labels[j][0], detector.modality)
            if iou > best_iou:
                best_iou, best_j = iou, j
        if best_j is not None and best_iou >= match_iou_min:
            free.remove(best_j)
            matched.append((i, best_j))
    if not matched:
        return SupervisedLoss(0.0, 0.0, 0.0, grads, 0, True)

    n = len(matched)
    loc_total = 0.0
    cls_total = 0.0
    yaw_index = 6 if detector.modality == "3d" else None
    for i, j in matched:
        pred, (gt_params, gt_cls) = preds[i], labels[j]
        d_params = np.zeros(detector.param_dim)
        for d in range(detector.param_dim):
            residual = pred.params[d] - gt_params[d]
            if d == yaw_index:
                residual = _wrap_angle(residual)
            value, deriv = _smooth_l1(residual, beta)
            loc_total += value
            d_params[d] = deriv
        grads.box_bias[pred.class_index] += d_params / n
        grads.noise_gate += float(d_params @ pred.eta) / n

        f_val, f_grad = focal_loss(pred.probs, gt_cls, focal_gamma, focal_alpha)
        cls_total += f_val
        grads.logit_offsets += f_grad / n

    loc = loc_total / n
    cls = cls_total / n
    return SupervisedLoss(loc + cls, loc, cls, grads, n, False)


@dataclass
class TrainFrame:
    """A frame with frozen measurement streams for both modalities."""

    scene: Scene
    ctx_3d: ForwardContext
    ctx_2d: ForwardContext
    labels_3d: list  # (box params, class_index) tuples
    labels_2d: list


def build_train_frames(
    config: SimulatorConfig, n_frames: int, master_seed: int, tag: int
) -> list[TrainFrame]:
    frames = []
    for i in range(n_frames):
        scene = sample_scene(config.scene, seed=[master_seed, tag, i, 0], frame_id=i)
        ctx3 = _context_3d(scene, config.profile_3d, seed=[master_seed, tag, i, 1])
        ctx2 = _context_2d(scene, config.profile_2d, seed=[master_seed, tag, i, 2])
        labels_3d = [(o.box.as_array(), o.class_index) for o in scene.objects]
        labels_2d = []
        for o in scene.objects:
            projected = project_box_to_2d(scene.camera, o.box)
            if isinstance(projected, Box2D):
                labels_2d.append((projected.as_array(), o.class_index))
        frames.append(
            TrainFrame(
                scene=scene, ctx_3d=ctx3, ctx_2d=ctx2,
                labels_3d=labels_3d, labels_2d=labels_2d,
            )
        )
    return frames


@dataclass
class SSLConfig:
    """Semi-supervised loop settings; unlabeled terms enter with weight
    lambda_unlabeled, batches hold equal labeled and unlabeled counts."""

    mode: str = "detmatch"
    steps: int = 250
    batch_labeled: int = 4
    batch_unlabeled: int = 4
    lr_3d: float = 0.05
    lr_2d: float = 0.5
    lambda_unlabeled: float = 1.0
    consistency_scale: float = 1.0
    weak_noise_std: float = 0.03
    strong_noise_std: float = 0.12
    tau_2d: float = 0.7
    tau_3d: float = 0.3
    tau_hung: float = -1.5
    ema_start: float = 0.99
    ema_end: float = 0.999
    ema_ramp_steps: int = 200
    match_weights: CostWeights = field(default_factory=CostWeights)
    consistency_weights: ConsistencyWeights = field(default_factory=ConsistencyWeights)
    match_iou_min_3d: float = 0.1
    match_iou_min_2d: float = 0.2
    focal_gamma: float = 2.0
    focal_alpha: float = 0.25
    seed: int = 0

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.lambda_unlabeled < 0:
            raise ValueError("lambda_unlabeled must be nonnegative")


@dataclass
class ModelPair:
    det_2d: ToyDetector
    det_3d: ToyDetector

    def copy(self) -> "ModelPair":
        return ModelPair(det_2d=self.det_2d.copy(), det_3d=self.det_3d.copy())


@dataclass
class StepReport:
    step: int
    labeled_2d: float
    labeled_3d: float
    unlabeled_2d: float
    unlabeled_3d: float
    consistency: float
    total: float
    n_pseudo_2d: int
    n_pseudo_3d: int
    n_consistency_pairs: int
    n_consistency_skipped: int
    teacher_labeled_2d: float
    teacher_labeled_3d: float
    momentum: float


def _pass_eta(cfg: SSLConfig, step: int, role: str, modality: str, frame_idx: int, shape):
    role_id = 0 if role == "teacher" else 1
    mod_id = 0 if modality == "2d" else 1
    rng = np.random.default_rng([cfg.seed, 7919, step, role_id, mod_id, frame_idx])
    std = cfg.weak_noise_std if role == "teacher" else cfg.strong_noise_std
    return rng.normal(0.0, std * _NOISE_UNIT[modality], shape)


def _frame_forward(detector, frame: TrainFrame, cfg: SSLConfig, step, role, frame_idx):
    ctx = frame.ctx_3d if detector.modality == "3d" else frame.ctx_2d
    eta = _pass_eta(cfg, step, role, detector.modality, frame_idx, ctx.meas_params.shape)
    return forward_from_context(detector, ctx, eta)


def _labels_for(frame: TrainFrame, modality: str):
    return frame.labels_3d if modality == "3d" else frame.labels_2d


def _supervised_over_frames(detector, frames, labels_list, cfg: SSLConfig, step, role, base_idx):
    """Mean supervised loss over frames; returns (loss, grads)."""
    grads = ToyGrads.zeros(detector)
    total = 0.0
    n = len(frames)
    if n == 0:
        return 0.0, grads
    iou_min = cfg.match_iou_min_3d if detector.modality == "3d" else cfg.match_iou_min_2d
    for k, (frame, labels) in enumerate(zip(frames, labels_list)):
        preds = _frame_forward(detector, frame, cfg, step, role, base_idx + k)
        result = supervised_loss(
            preds, labels, detector, iou_min, cfg.focal_gamma, cfg.focal_alpha
        )
        total += result.loss
        grads.add_scaled(result.grads, 1.0 / n)
    return total / n, grads


def _teacher_pseudo_labels(models: ModelPair, frame, cfg: SSLConfig, step, frame_idx):
    """Per-mode pseudo-labels of one unlabeled frame, plus consistency pairs.

    Returns (labels_2d, labels_3d, teacher_2d_dets) where labels are
    (params, hard class) lists.
    """
    t2 = _frame_forward(models.det_2d, frame, cfg, step, "teacher", frame_idx)
    t3 = _frame_forward(models.det_3d, frame, cfg, step, "teacher", frame_idx)
    dets2 = [to_detection_2d(d) for d in t2]
    dets3 = [to_detection_3d(d) for d in t3]

    if cfg.mode == "confidence":
        kept2 = confidence_filter(dets2, cfg.tau_2d)
        kept3 = confidence_filter(dets3, cfg.tau_3d)
        labels2 = [(d.box.as_array(), d.class_index) for d in kept2]
        labels3 = [(d.box.as_array(), d.class_index) for d in kept3]
        return labels2, labels3, dets2

    pairs = match_teachers(
        dets2, dets3, frame.scene.camera, cfg.match_weights, cfg.tau_hung
    )
    labels2 = [(p.det2d.box.as_array(), p.det2d.class_index) for p in pairs]
    labels3 = [(p.det3d.box.as_array(), p.det3d.class_index) for p in pairs]
    return labels2, labels3, dets2


def ssl_step(
    models: ModelPair,
    teachers: ModelPair,
    labeled_batch: list[TrainFrame],
    unlabeled_batch: list[TrainFrame],
    cfg: SSLConfig,
    step: int,
) -> StepReport:
    """One optimization step of both students plus the EMA teacher update.

    Students are updated in place by gradient descent on the composed loss;
    teachers move toward the students with the scheduled momentum.
    """
    report_kwargs = {}

    grads_2d = ToyGrads.zeros(models.det_2d)
    grads_3d = ToyGrads.zeros(models.det_3d)

    lab2, g = _supervised_over_frames(
        models.det_2d, labeled_batch, [f.labels_2d for f in labeled_batch],
        cfg, step, "student", 0,
    )
    grads_2d.add_scaled(g)
    lab3, g = _supervised_over_frames(
        models.det_3d, labeled_batch, [f.labels_3d for f in labeled_batch],
        cfg, step, "student", 0,
    )
    grads_3d.add_scaled(g)

    unlab2 = unlab3 = cons_total = 0.0
    n_pseudo_2d = n_pseudo_3d = n_pairs = n_skipped = 0

    if cfg.mode != "labeled-only" and unlabeled_batch:
        pseudo2_all, pseudo3_all = [], []
        teacher2_dets_all = []
        for k, frame in enumerate(unlabeled_batch):
            labels2, labels3, teacher2 = _teacher_pseudo_labels(
                models=teachers, frame=frame, cfg=cfg, step=step, frame_idx=1000 + k
            )
            pseudo2_all.append(labels2)
            pseudo3_all.append(labels3)
            teacher2_dets_all.append(teacher2)
            n_pseudo_2d += len(labels2)
            n_pseudo_3d += len(labels3)

        unlab2, g = _supervised_over_frames(
            models.det_2d, unlabeled_batch, pseudo2_all, cfg, step, "student", 1000
        )
        grads_2d.add_scaled(g, cfg.lambda_unlabeled)
        unlab3, g = _supervised_over_frames(
            models.det_3d, unlabeled_batch, pseudo3_all, cfg, step, "student", 1000
        )
        grads_3d.add_scaled(g, cfg.lambda_unlabeled)

        if cfg.mode == "detmatch":
            n_frames = len(unlabeled_batch)
            for k, frame in enumerate(unlabeled_batch):
                student3 = _frame_forward(
                    models.det_3d, frame, cfg, step, "student", 1000 + k
                )
                student_dets = [to_detection_3d(d) for d in student3]
                pairs = pair_for_consistency(
                    teacher2_dets_all[k], student_dets,
                    frame.scene.camera, cfg.match_weights, cfg.tau_hung,
                )
                n_pairs += len(pairs)
                if not pairs:
                    continue
                cam = frame.scene.camera
                frame_cons = 0.0
                for pair in pairs:
                    sdet = student3[pair.index_3d]
                    res = consistency_loss(
                        pair.det2d, Box3D.from_array(sdet.params), sdet.logits,
                        cam, cfg.consistency_weights,
                        cam.image_width, cam.image_height,
                    )
                    if res is None:
                        n_skipped += 1
                        continue
                    share = 1.0 / (len(pairs) * n_frames)
                    frame_cons += res.loss / len(pairs)
                    grads_3d.box_bias[sdet.class_index] += (
                        cfg.consistency_scale * share * res.grads.d_box
                    )
                    grads_3d.noise_gate += cfg.consistency_scale * share * float(
                        res.grads.d_box @ sdet.eta
                    )
                    grads_3d.logit_offsets += (
                        cfg.consistency_scale * share * res.grads.d_logits
                    )
                cons_total += frame_cons / n_frames

    # teacher monitoring losses on the same labeled batch, no gradients kept
    t_lab2, _ = _supervised_over_frames(
        teachers.det_2d, labeled_batch, [f.labels_2d for f in labeled_batch],
        cfg, step, "teacher", 0,
    )
    t_lab3, _ = _supervised_over_frames(
        teachers.det_3d, labeled_batch, [f.labels_3d for f in labeled_batch],
        cfg, step, "teacher", 0,
    )

    models.det_2d.box_bias -= cfg.lr_2d * grads_2d.box_bias
    models.det_2d.logit_offsets -= cfg.lr_2d * 0.1 * grads_2d.logit_offsets
    models.det_2d.noise_gate -= cfg.lr_2d * 0.01 * grads_2d.noise_gate
    models.det_3d.box_bias -= cfg.lr_3d * grads_3d.box_bias
    models.det_3d.logit_offsets -= cfg.lr_3d * grads_3d.logit_offsets
    models.det_3d.noise_gate -= cfg.lr_3d * 0.1 * grads_3d.noise_gate

    alpha = ema_momentum(step, cfg.ema_ramp_steps, cfg.ema_start, cfg.ema_end)
    teachers.det_2d.load_vector(
        ema_update(teachers.det_2d.to_vector(), models.det_2d.to_vector(), alpha)
    )
    teachers.det_3d.load_vector(
        ema_update(teachers.det_3d.to_vector(), models.det_3d.to_vector(), alpha)
    )

    total = (
        lab2 + lab3
        + cfg.lambda_unlabeled * (unlab2 + unlab3)
        + cfg.consistency_scale * cons_total
    )
    return StepReport(
        step=step,
        labeled_2d=lab2, labeled_3d=lab3,
        unlabeled_2d=unlab2, unlabeled_3d=unlab3,
        consistency=cons_total, total=total,
        n_pseudo_2d=n_pseudo_2d, n_pseudo_3d=n_pseudo_3d,
        n_consistency_pairs=n_pairs, n_consistency_skipped=n_skipped,
        teacher_labeled_2d=t_lab2, teacher_labeled_3d=t_lab3,
        momentum=alpha,
    )


def toy_simulator_config() -> SimulatorConfig:
    """Training corpus generator: systematic per-class box errors the
    detectors must learn away, under-confident 3D pedestrians, and
    pole-like 3D false positives placed near real objects."""
    profile_3d = SensorProfile3D(
        center_noise_std=(0.13, 0.04, 0.11),
        size_noise_std=(0.07, 0.04, 0.04),
        yaw_noise_std=0.05,
        class_center_bias=((0.45, 0.0, 0.50), (-0.35, 0.0, 0.30), (0.30, 0.0, -0.35)),
        class_size_bias=((0.25, 0.12, 0.10), (0.12, 0.10, 0.15), (-0.15, 0.08, 0.10)),
        class_conf_scale=(1.0, 0.52, 0.80),
        false_positive_rate=1.6,
        fp_class_probs=(0.10, 0.70, 0.20),
        fp_near_object_prob=0.65,
    )
    profile_2d = SensorProfile2D(
        corner_noise_std=2.0,
        class_corner_bias=((6.0, 4.0, -6.0, -4.0), (-4.0, 3.0, 4.0, -3.0), (5.0, -3.0, -5.0, 3.0)),
    )
    return SimulatorConfig(
        scene=SceneConfig(overlap_rate=0.3), profile_3d=profile_3d, profile_2d=profile_2d
    )


@dataclass
class ToySetup:
    """Everything one experiment needs: corpora sizes, pretraining, SSL."""

    simulator: SimulatorConfig = field(default_factory=toy_simulator_config)
    n_labeled: int = 14
    n_unlabeled: int = 110
    n_eval: int = 70
    pretrain_steps: int = 160
    ssl: SSLConfig = field(default_factory=SSLConfig)
    class_names: tuple = CLASS_NAMES
    eval_iou_3d: tuple = (0.7, 0.5, 0.5)
    eval_iou_2d: float = 0.5


def pretrain(models: ModelPair, labeled: list[TrainFrame], cfg: SSLConfig, steps: int) -> None:
    """Labeled-only training of the students; run before any SSL."""
    rng = np.random.default_rng([cfg.seed, 101])
    pretrain_cfg = replace(cfg, mode="labeled-only")
    dummy_teachers = models.copy()
    for step in range(steps):
        idx = rng.choice(len(labeled), size=min(cfg.batch_labeled, len(labeled)), replace=False)
        batch = [labeled[i] for i in idx]
        ssl_step(models, dummy_teachers, batch, [], pretrain_cfg, step)


def evaluate_pair(
    models: ModelPair, eval_frames: list[TrainFrame], setup: ToySetup
) -> dict:
    """Final-model AP per (modality, class), in percent, noise-free passes."""
    dets3, dets2 = [], []
    for frame_idx, frame in enumerate(eval_frames):
        preds3 = forward_from_context(
            models.det_3d, frame.ctx_3d, np.zeros_like(frame.ctx_3d.meas_params)
        )
        preds2 = forward_from_context(
            models.det_2d, frame.ctx_2d, np.zeros_like(frame.ctx_2d.meas_params)
        )
        dets3.extend((frame_idx, d) for d in preds3)
        dets2.extend((frame_idx, d) for d in preds2)

    out = {}
    for c, name in enumerate(setup.class_names):
        gt3 = [
            (fi, Box3D.from_array(p))
            for fi, frame in enumerate(eval_frames)
            for p, cls in frame.labels_3d
            if cls == c
        ]
        cand3 = [
            (fi, d.score, Box3D.from_array(d.params))
            for fi, d in dets3
            if d.class_index == c
        ]
        curve = pr_curve(cand3, gt3, iou3d, setup.eval_iou_3d[c])
        out[("3d", name)] = 100.0 * average_precision(curve)

        gt2 = [
            (fi, Box2D(*p))
            for fi, frame in enumerate(eval_frames)
            for p, cls in frame.labels_2d
            if cls == c
        ]
        cand2 = [
            (fi, d.score, Box2D(*d.params)) for fi, d in dets2 if d.class_index == c
        ]
        curve = pr_curve(cand2, gt2, iou2d, setup.eval_iou_2d)
        out[("2d", name)] = 100.0 * average_precision(curve)
    return out


@dataclass
class SSLRunResult:
    mode: str
    seed: int
    models: ModelPair
    reports: list[StepReport]
    ap: dict  # (modality, class name) -> teacher AP percent


def run_ssl(
    setup: ToySetup,
    mode: str,
    seed: int,
    init: ModelPair,
    labeled: list[TrainFrame],
    unlabeled: list[TrainFrame],
    eval_frames: list[TrainFrame],
) -> SSLRunResult:
    """Train one mode from a shared initialization; the final model is the
    teacher."""
    cfg = replace(setup.ssl, mode=mode, seed=seed)
    students = init.copy()
    teachers = init.copy()
    rng = np.random.default_rng([seed, 202])
    reports = []
    for step in range(cfg.steps):
        lab_idx = rng.choice(len(labeled), size=min(cfg.batch_labeled, len(labeled)), replace=False)
        unl_idx = rng.choice(
            len(unlabeled), size=min(cfg.batch_unlabeled, len(unlabeled)), replace=False
        )
        reports.append(
            ssl_step(
                students, teachers,
                [labeled[i] for i in lab_idx],
                [unlabeled[i] for i in unl_idx],
                cfg, step,
            )
        )
    ap = evaluate_pair(teachers, eval_frames, setup)
    return SSLRunResult(mode=mode, seed=seed, models=teachers, reports=reports, ap=ap)


@dataclass
class ExperimentRow:
    mode: str
    seed: int
    modality: str
    class_name: str
    ap: float
    improvement: float  # over labeled-only at the same seed


def run_experiment(setup: ToySetup, modes, seeds) -> list[ExperimentRow]:
    """Train every mode from the same labeled-pretrained initialization per
    seed and report final teacher AP plus improvement over labeled-only."""
    modes = list(modes)
    if "labeled-only" not in modes:
        modes = ["labeled-only"] + modes
    rows: list[ExperimentRow] = []
    for seed in seeds:
        labeled = build_train_frames(setup.simulator, setup.n_labeled, seed, tag=1)
        unlabeled = build_train_frames(setup.simulator, setup.n_unlabeled, seed, tag=2)
        eval_frames = build_train_frames(setup.simulator, setup.n_eval, seed, tag=3)

        init = ModelPair(
            det_2d=ToyDetector("2d", len(setup.class_names)),
            det_3d=ToyDetector("3d", len(setup.class_names)),
        )
        pre_cfg = replace(setup.ssl, seed=seed)
        pretrain(init, labeled, pre_cfg, setup.pretrain_steps)

        baseline_ap = None
        for mode in modes:
            result = run_ssl(setup, mode, seed, init, labeled, unlabeled, eval_frames)
            if mode == "labeled-only":
                baseline_ap = result.ap
            for (modality, name), ap in sorted(result.ap.items()):
                improvement = (
                    ap - baseline_ap[(modality, name)] if baseline_ap else 0.0
                )
                rows.append(
                    ExperimentRow(
                        mode=mode, seed=seed, modality=modality,
                        class_name=name, ap=ap, improvement=improvement,
                    )
                )
    return rows
