"""Per-frame detection interchange: a versioned JSON-lines format.

Each file starts with a header record naming the schema and version, then
one frame per line. Detections carry their full class-probability vectors,
not just scores, because the class-consistency cost needs them. Floats are
serialized with shortest round-trip repr, so write -> read is lossless.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .boxes2d import Box2D
from .boxes3d import Box3D, CameraModel
from .pseudolabels import Detection2D, Detection3D, MatchedPair

FRAMES_SCHEMA = "paired-detection-frames"
PAIRS_SCHEMA = "matched-detection-pairs"
FORMAT_VERSION = 1


class InterchangeError(ValueError):
    """Malformed, unversioned, or incompatible interchange content."""


@dataclass
class GroundTruth2D:
    box: Box2D
    class_index: int
    occlusion: float | None = None


@dataclass
class GroundTruth3D:
    box: Box3D
    class_index: int


@dataclass
class FrameBundle:
    """One frame's camera, paired detections, and optional ground truth."""

    frame_id: int
    camera: CameraModel
    detections_2d: list[Detection2D] = field(default_factory=list)
    detections_3d: list[Detection3D] = field(default_factory=list)
    gt_2d: list[GroundTruth2D] | None = None
    gt_3d: list[GroundTruth3D] | None = None


def _camera_to_dict(cam: CameraModel) -> dict:
    return {
        "projection": [float(v) for v in cam.projection.reshape(-1)],
        "image_width": cam.image_width,
        "image_height": cam.image_height,
    }


def _camera_from_dict(d: dict) -> CameraModel:
    proj = np.array(d["projection"], dtype=np.float64).reshape(3, 4)
    return CameraModel(
        projection=proj,
        image_width=d["image_width"],
        image_height=d["image_height"],
    )


def _det2d_to_dict(det: Detection2D) -> dict:
    return {"box": list(det.box.as_tuple()), "probs": [float(p) for p in det.probs]}


def _det3d_to_dict(det: Detection3D) -> dict:
    return {
        "box": [float(v) for v in det.box.as_array()],
        "probs": [float(p) for p in det.probs],
    }


def _det2d_from_dict(d: dict) -> Detection2D:
    return Detection2D(box=Box2D(*d["box"]), probs=np.array(d["probs"]))


def _det3d_from_dict(d: dict) -> Detection3D:
    return Detection3D(box=Box3D.from_array(d["box"]), probs=np.array(d["probs"]))


def frame_to_dict(frame: FrameBundle) -> dict:
    out = {
        "frame_id": frame.frame_id,
        "camera": _camera_to_dict(frame.camera),
        "detections_2d": [_det2d_to_dict(d) for d in frame.detections_2d],
        "detections_3d": [_det3d_to_dict(d) for d in frame.detections_3d],
        "gt_2d": None,
        "gt_3d": None,
    }
    if frame.gt_2d is not None:
        out["gt_2d"] = [
            {
                "box": list(g.box.as_tuple()),
                "class_index": g.class_index,
                "occlusion": g.occlusion,
            }
            for g in frame.gt_2d
        ]
    if frame.gt_3d is not None:
        out["gt_3d"] = [
            {"box": [float(v) for v in g.box.as_array()], "class_index": g.class_index}
            for g in frame.gt_3d
        ]
    return out


def frame_from_dict(d: dict) -> FrameBundle:
    if "camera" not in d or d["camera"] is None:
        raise InterchangeError(f"frame {d.get('frame_id')} is missing its camera")
    gt_2d = None
    if d.get("gt_2d") is not None:
        gt_2d = [
            GroundTruth2D(
                box=Box2D(*g["box"]),
                class_index=g["class_index"],
                occlusion=g.get("occlusion"),
            )
            for g in d["gt_2d"]
        ]
    gt_3d = None
    if d.get("gt_3d") is not None:
        gt_3d = [
            GroundTruth3D(box=Box3D.from_array(g["box"]), class_index=g["class_index"])
            for g in d["gt_3d"]
        ]
    return FrameBundle(
        frame_id=d["frame_id"],
        camera=_camera_from_dict(d["camera"]),
        detections_2d=[_det2d_from_dict(x) for x in d.get("detections_2d", [])],
        detections_3d=[_det3d_from_dict(x) for x in d.get("detections_3d", [])],
        gt_2d=gt_2d,
        gt_3d=gt_3d,
    )


def _write_jsonl(path, schema: str, records) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(json.dumps({"schema": schema, "version": FORMAT_VERSION}) + "\n")
        for record in records:
            fh.write(json.dumps(record) + "\n")


def _read_jsonl(path, schema: str) -> list[dict]:
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise InterchangeError(f"{path}: empty file, expected a schema header")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as err:
        raise InterchangeError(f"{path}: unreadable header: {err}") from err
    if header.get("schema") != schema:
        raise InterchangeError(
            f"{path}: schema {header.get('schema')!r}, expected {schema!r}"
        )
    if header.get("version") != FORMAT_VERSION:
        raise InterchangeError(
            f"{path}: format version {header.get('version')!r} is not supported "
            f"(reader handles version {FORMAT_VERSION})"
        )
    return [json.loads(line) for line in lines[1:] if line.strip()]


def write_frames(path, frames) -> None:
    _write_jsonl(path, FRAMES_SCHEMA, (frame_to_dict(f) for f in frames))


def read_frames(path) -> list[FrameBundle]:
    return [frame_from_dict(d) for d in _read_jsonl(path, FRAMES_SCHEMA)]


def write_pairs(path, per_frame_pairs) -> None:
    """per_frame_pairs: iterable of (frame_id, camera, list[MatchedPair])."""
    def records():
        for frame_id, cam, pairs in per_frame_pairs:
            yield {
                "frame_id": frame_id,
                "camera": _camera_to_dict(cam),
                "pairs": [
                    {
                        "det2d": _det2d_to_dict(p.det2d),
                        "det3d": _det3d_to_dict(p.det3d),
                        "cost": float(p.cost),
                        "index_2d": p.index_2d,
                        "index_3d": p.index_3d,
                    }
                    for p in pairs
                ],
            }

    _write_jsonl(path, PAIRS_SCHEMA, records())


def read_pairs(path) -> list[tuple[int, CameraModel, list[MatchedPair]]]:
    out = []
    for d in _read_jsonl(path, PAIRS_SCHEMA):
        if "camera" not in d or d["camera"] is None:
            raise InterchangeError(f"frame {d.get('frame_id')} is missing its camera")
        pairs = [
            MatchedPair(
                det2d=_det2d_from_dict(p["det2d"]),
                det3d=_det3d_from_dict(p["det3d"]),
                cost=p["cost"],
                index_2d=p.get("index_2d", -1),
                index_3d=p.get("index_3d", -1),
            )
            for p in d["pairs"]
        ]
        out.append((d["frame_id"], _camera_from_dict(d["camera"]), pairs))
    return out
