"""JSON serialization of motions, keyframes, and dataset statistics.

Numbers round-trip exactly: json emits Python float repr (17 significant
digits, shortest exact form).  Schema violations name the offending field
path.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .sequence import DatasetStats, KeyframeSpec, MotionSequence, pose_dim
from .skeleton import Skeleton

MOTION_VERSION = 1
KEYFRAME_VERSION = 1


class SchemaError(ValueError):
    """A motion or keyframe document is missing or mistypes a field."""


def _require(d: dict, key: str, ctx: str):
    if key not in d:
        raise SchemaError(f"missing field '{ctx}{key}'")
    return d[key]


def write_motion(path, seq: MotionSequence, skeleton: Skeleton) -> None:
    doc = {
        "version": MOTION_VERSION,
        "fps": seq.fps,
        **skeleton.to_dict(),
        "frames": {
            "root_orient": seq.root_orient.tolist(),
            "root_trans": seq.root_trans.tolist(),
            "joint_rot": seq.joint_rot.tolist(),
            "joint_pos": seq.joint_pos.tolist(),
            "joint_vel": seq.joint_vel.tolist(),
            "joint_angvel": seq.joint_angvel.tolist(),
        },
    }
    Path(path).write_text(json.dumps(doc))


def read_motion(path) -> tuple[MotionSequence, Skeleton]:
    doc = json.loads(Path(path).read_text())
    if _require(doc, "version", "") != MOTION_VERSION:
        raise SchemaError(f"unsupported motion version {doc['version']}")
    fps = _require(doc, "fps", "")
    if not isinstance(fps, (int, float)) or fps <= 0:
        raise SchemaError("field 'fps' must be a positive number")
    skeleton = Skeleton(
        _require(doc, "joint_names", ""),
        _require(doc, "parent", ""),
        _require(doc, "offset", ""),
        _require(doc, "foot_joints", ""),
    )
    frames = _require(doc, "frames", "")
    tracks = {}
    for name in ("root_orient", "root_trans", "joint_rot",
                 "joint_pos", "joint_vel", "joint_angvel"):
        tracks[name] = np.asarray(_require(frames, name, "frames."),
                                  dtype=np.float64)
    try:
        seq = MotionSequence(fps=float(fps), **tracks)
    except ValueError as e:
        raise SchemaError(f"frames: {e}") from e
    if seq.n_joints != skeleton.n_joints:
        raise SchemaError("frames.joint_rot joint count does not match skeleton")
    return seq, skeleton


def write_keyframes(path, spec: KeyframeSpec, n_joints: int) -> None:
    j = n_joints
    frames = []
    for row, idx in zip(spec.poses, spec.indices):
        frames.append({
            "index": int(idx),
            "root_orient": row[0:6].tolist(),
            "root_trans": row[6:9].tolist(),
            "joint_rot": row[9:9 + j * 6].reshape(j, 6).tolist(),
            "joint_pos": row[9 + j * 6:9 + j * 9].reshape(j, 3).tolist(),
        })
    doc = {"version": KEYFRAME_VERSION, "length": int(spec.n_frames),
           "frames": frames}
    Path(path).write_text(json.dumps(doc))


def read_keyframes(path) -> KeyframeSpec:
    doc = json.loads(Path(path).read_text())
    if _require(doc, "version", "") != KEYFRAME_VERSION:
        raise SchemaError(f"unsupported keyframe version {doc['version']}")
    length = int(_require(doc, "length", ""))
    frames = _require(doc, "frames", "")
    if not frames:
        raise SchemaError("field 'frames' is empty")
    entries = []
    for i, f in enumerate(frames):
        ctx = f"frames[{i}]."
        idx = int(_require(f, "index", ctx))
        if not 0 <= idx < length:
            raise SchemaError(f"frames[{i}].index out of range")
        row = np.concatenate([
            np.asarray(_require(f, "root_orient", ctx), dtype=np.float64).ravel(),
            np.asarray(_require(f, "root_trans", ctx), dtype=np.float64).ravel(),
            np.asarray(_require(f, "joint_rot", ctx), dtype=np.float64).ravel(),
            np.asarray(_require(f, "joint_pos", ctx), dtype=np.float64).ravel(),
        ])
        entries.append((idx, row))
    entries.sort(key=lambda e: e[0])
    mask = np.zeros(length, dtype=bool)
    for idx, _ in entries:
        mask[idx] = True
    poses = np.stack([row for _, row in entries])
    return KeyframeSpec(mask, poses)


def write_dataset(out_dir, seqs: list[MotionSequence], skeleton: Skeleton,
                  stats: DatasetStats, meta: dict | None = None) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for i, seq in enumerate(seqs):
        write_motion(out / f"motion_{i:04d}.json", seq, skeleton)
    stats_doc = {"version": 1, **stats.to_dict()}
    if meta:
        stats_doc["meta"] = meta
    (out / "stats.json").write_text(json.dumps(stats_doc))


def read_dataset(dir_path) -> tuple[list[MotionSequence], Skeleton, DatasetStats]:
    d = Path(dir_path)
    paths = sorted(d.glob("motion_*.json"))
    if not paths:
        raise FileNotFoundError(f"no motion files in {d}")
    seqs = []
    skeleton = None
    for p in paths:
        seq, skel = read_motion(p)
        seqs.append(seq)
        skeleton = skel
    stats_path = d / "stats.json"
    if not stats_path.exists():
        raise FileNotFoundError(f"missing stats.json in {d}")
    stats = DatasetStats.from_dict(json.loads(stats_path.read_text()))
    return seqs, skeleton, stats
