"""Sampled motion sequences, keyframe observations, and feature packing.

A motion holds the global root transform plus per-joint kinematic tracks
sampled at a fixed rate.  Joint positions are root-relative (expressed in
the root's local frame; world = R_o x + R_p).  Velocities come from central
differences, one-sided at the endpoints.

The flat per-frame feature vector is laid out as

    root_orient(6) | root_trans(3) | joint_rot(J*6) | joint_pos(J*3)
    | joint_vel(J*3) | joint_angvel(J*3)

The first four blocks (the pose channels) are what keyframe observations
carry.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import rotmath
from .skeleton import Skeleton, fk_local


def central_diff(x: np.ndarray, fps: float) -> np.ndarray:
    """d/dt along axis 0; one-sided at the endpoints."""
    v = np.empty_like(x)
    v[1:-1] = (x[2:] - x[:-2]) * (fps / 2.0)
    v[0] = (x[1] - x[0]) * fps
    v[-1] = (x[-1] - x[-2]) * fps
    return v


def angular_velocity(joint_rot6d: np.ndarray, fps: float) -> np.ndarray:
    """Rotation-vector rates (T, J, 3) from 6D tracks via quaternion logs."""
    mats = rotmath.rot6d_to_matrix(joint_rot6d).data
    q = rotmath.quat_from_matrix(mats)            # (T, J, 4)
    conj = rotmath.quat_conj(q)

    def rel_log(qa_conj, qb):
        return rotmath.quat_log(rotmath.quat_mul(qa_conj, qb))

    w = np.empty(joint_rot6d.shape[:-1] + (3,))
    w[1:-1] = rel_log(conj[:-2], q[2:]) * (fps / 2.0)
    w[0] = rel_log(conj[0], q[1]) * fps
    w[-1] = rel_log(conj[-2], q[-1]) * fps
    return w


@dataclass
class MotionSequence:
    fps: float
    root_orient: np.ndarray    # (T, 6)
    root_trans: np.ndarray     # (T, 3)
    joint_rot: np.ndarray      # (T, J, 6)
    joint_pos: np.ndarray      # (T, J, 3) root-relative
    joint_vel: np.ndarray      # (T, J, 3)
    joint_angvel: np.ndarray   # (T, J, 3)

    def __post_init__(self):
        for name in ("root_orient", "root_trans", "joint_rot",
                     "joint_pos", "joint_vel", "joint_angvel"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=np.float64))
        if self.fps <= 0:
            raise ValueError("fps must be positive")
        t = self.root_orient.shape[0]
        j = self.joint_rot.shape[1]
        expect = {
            "root_orient": (t, 6), "root_trans": (t, 3),
            "joint_rot": (t, j, 6), "joint_pos": (t, j, 3),
            "joint_vel": (t, j, 3), "joint_angvel": (t, j, 3),
        }
        for name, shape in expect.items():
            got = getattr(self, name).shape
            if got != shape:
                raise ValueError(f"{name}: expected shape {shape}, got {got}")

    @property
    def n_frames(self) -> int:
        return self.root_orient.shape[0]

    @property
    def n_joints(self) -> int:
        return self.joint_rot.shape[1]

    def copy(self) -> "MotionSequence":
        return MotionSequence(
            self.fps, self.root_orient.copy(), self.root_trans.copy(),
            self.joint_rot.copy(), self.joint_pos.copy(),
            self.joint_vel.copy(), self.joint_angvel.copy())

    # -- feature packing -------------------------------------------------

    def features(self) -> np.ndarray:
        t, j = self.n_frames, self.n_joints
        return np.concatenate(
            [
                self.root_orient,
                self.root_trans,
                self.joint_rot.reshape(t, j * 6),
                self.joint_pos.reshape(t, j * 3),
                self.joint_vel.reshape(t, j * 3),
                self.joint_angvel.reshape(t, j * 3),
            ],
            axis=1,
        )

    @classmethod
    def from_features(cls, fps: float, feats: np.ndarray, n_joints: int) -> "MotionSequence":
        lay = feature_layout(n_joints)
        t = feats.shape[0]
        j = n_joints
        return cls(
            fps,
            feats[:, lay["root_orient"]],
            feats[:, lay["root_trans"]],
            feats[:, lay["joint_rot"]].reshape(t, j, 6),
            feats[:, lay["joint_pos"]].reshape(t, j, 3),
            feats[:, lay["joint_vel"]].reshape(t, j, 3),
            feats[:, lay["joint_angvel"]].reshape(t, j, 3),
        )

    def global_positions(self, skeleton: Skeleton) -> np.ndarray:
        """World-space joint positions (T, J, 3) via the stored root transform."""
        from .skeleton import apply_root_transform

        return apply_root_transform(self.joint_pos, self.root_orient,
                                    self.root_trans).data


def feature_layout(n_joints: int) -> dict[str, slice]:
    j = n_joints
    edges = np.cumsum([0, 6, 3, j * 6, j * 3, j * 3, j * 3])
    names = ["root_orient", "root_trans", "joint_rot",
             "joint_pos", "joint_vel", "joint_angvel"]
    return {n: slice(int(a), int(b)) for n, a, b in zip(names, edges[:-1], edges[1:])}


def feature_dim(n_joints: int) -> int:
    return 9 + n_joints * 15


def pose_dim(n_joints: int) -> int:
    """Channels observed at keyframes: root orient/trans + joint rot/pos."""
    return 9 + n_joints * 9


def pose_features(seq: MotionSequence) -> np.ndarray:
    return seq.features()[:, : pose_dim(seq.n_joints)]


# ---------------------------------------------------------------------------
# keyframe observations


@dataclass
class KeyframeSpec:
    """Boolean frame mask plus the observed pose rows at masked frames."""

    mask: np.ndarray    # (T,) bool
    poses: np.ndarray   # (K, pose_dim) rows for masked frames, in order

    def __post_init__(self):
        self.mask = np.asarray(self.mask, dtype=bool)
        self.poses = np.asarray(self.poses, dtype=np.float64)
        k = int(self.mask.sum())
        if k < 1:
            raise ValueError("keyframe mask selects no frames")
        if self.poses.shape[0] != k:
            raise ValueError(
                f"got {self.poses.shape[0]} pose rows for {k} masked frames")

    @property
    def n_frames(self) -> int:
        return self.mask.shape[0]

    @property
    def indices(self) -> np.ndarray:
        return np.flatnonzero(self.mask)

    @property
    def n_keyframes(self) -> int:
        return int(self.mask.sum())

    @classmethod
    def from_motion(cls, seq: MotionSequence, indices) -> "KeyframeSpec":
        idx = np.asarray(indices, dtype=np.int64)
        mask = np.zeros(seq.n_frames, dtype=bool)
        mask[idx] = True
        return cls(mask, pose_features(seq)[np.flatnonzero(mask)])

    def pose_parts(self, n_joints: int) -> dict[str, np.ndarray]:
        """Split observed rows into named blocks (K-leading shapes)."""
        k = self.poses.shape[0]
        j = n_joints
        lay = feature_layout(j)
        return {
            "root_orient": self.poses[:, lay["root_orient"]],
            "root_trans": self.poses[:, lay["root_trans"]],
            "joint_rot": self.poses[:, lay["joint_rot"]].reshape(k, j, 6),
            "joint_pos": self.poses[:, lay["joint_pos"]].reshape(k, j, 3),
        }


def random_keyframe_indices(t: int, k: int, rng: np.random.Generator) -> np.ndarray:
    if not 1 <= k <= t:
        raise ValueError(f"need 1 <= K <= {t}, got {k}")
    return np.sort(rng.choice(t, size=k, replace=False))


def startend_keyframe_indices(t: int, k: int) -> np.ndarray:
    """K consecutive frames split evenly between the two ends."""
    if not 1 <= k <= t:
        raise ValueError(f"need 1 <= K <= {t}, got {k}")
    head = (k + 1) // 2
    tail = k - head
    return np.concatenate([np.arange(head), np.arange(t - tail, t)])


def even_keyframe_indices(t: int, k: int) -> np.ndarray:
    return np.round(np.linspace(0, t - 1, k)).astype(np.int64)


def bernoulli_keyframe_mask(t: int, p: float, rng: np.random.Generator) -> np.ndarray:
    """Per-frame independent Bernoulli mask; resampled until non-empty."""
    while True:
        mask = rng.random(t) < p
        if mask.any():
            return mask


# ---------------------------------------------------------------------------
# dataset statistics


@dataclass
class DatasetStats:
    """Per-channel z-score statistics plus jerk references for evaluation."""

    mean: np.ndarray             # (C,)
    std: np.ndarray              # (C,) floored away from zero
    mean_joint_jerk: np.ndarray  # (J,) average global jerk magnitude per joint
    n_sequences: int

    STD_FLOOR = 1e-6

    def normalize(self, feats: np.ndarray) -> np.ndarray:
        return (feats - self.mean) / self.std

    def denormalize(self, feats: np.ndarray) -> np.ndarray:
        return feats * self.std + self.mean

    def to_dict(self) -> dict:
        return {
            "mean": self.mean.tolist(),
            "std": self.std.tolist(),
            "mean_joint_jerk": self.mean_joint_jerk.tolist(),
            "n_sequences": self.n_sequences,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetStats":
        return cls(np.asarray(d["mean"]), np.asarray(d["std"]),
                   np.asarray(d["mean_joint_jerk"]), int(d["n_sequences"]))

    @classmethod
    def from_sequences(cls, seqs: list[MotionSequence], skeleton: Skeleton) -> "DatasetStats":
        feats = np.concatenate([s.features() for s in seqs], axis=0)
        mean = feats.mean(axis=0)
        std = np.maximum(feats.std(axis=0), cls.STD_FLOOR)
        jerk_sum = np.zeros(skeleton.n_joints)
        frames = 0
        for s in seqs:
            mags = joint_jerk_magnitudes(s, skeleton)
            jerk_sum += mags.sum(axis=0)
            frames += mags.shape[0]
        return cls(mean, std, jerk_sum / max(frames, 1), len(seqs))


def joint_jerk_magnitudes(seq: MotionSequence, skeleton: Skeleton) -> np.ndarray:
    """Per-frame, per-joint global jerk magnitudes via third-order central
    differences; frames 2..T-3 are valid."""
    if seq.n_frames < 5:
        raise ValueError("need at least 5 frames for third differences")
    pos = seq.global_positions(skeleton)
    h3 = seq.fps ** 3
    jerk = (pos[4:] - 2.0 * pos[3:-1] + 2.0 * pos[1:-3] - pos[:-4]) * (h3 / 2.0)
    return np.linalg.norm(jerk, axis=-1)


def validate_consistency(seq: MotionSequence, skeleton: Skeleton,
                         vel_tol: float = 1e-6, fk_tol: float = 1e-5) -> None:
    """Invariants for data produced by this repo: velocities match central
    differences of positions, and stored positions match FK of rotations."""
    vel = central_diff(seq.joint_pos, seq.fps)
    if np.max(np.abs(vel - seq.joint_vel)) > vel_tol:
        raise ValueError("joint_vel inconsistent with differentiated joint_pos")
    pos = fk_local(skeleton, seq.joint_rot).data
    if np.max(np.abs(pos - seq.joint_pos)) > fk_tol:
        raise ValueError("joint_pos inconsistent with FK(joint_rot)")
