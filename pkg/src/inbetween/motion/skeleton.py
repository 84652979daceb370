"""Joint hierarchy and forward kinematics.

The default humanoid has 10 joints: root, spine, two single-joint arm
chains hanging off the spine, and two hip-knee-ankle legs.  Ankles are the
foot joints used by the contact metrics.  Coordinates are meters, Y up,
+Z forward at zero heading.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .. import diffcore as dc
from ..diffcore import Tensor
from ..rotmath import rot6d_to_matrix


@dataclass
class Skeleton:
    joint_names: list[str]
    parent: np.ndarray          # (J,) int, -1 for the root
    offset: np.ndarray          # (J, 3) rest translation from parent, meters
    foot_joints: list[int] = field(default_factory=list)

    def __post_init__(self):
        self.parent = np.asarray(self.parent, dtype=np.int64)
        self.offset = np.asarray(self.offset, dtype=np.float64)
        j = len(self.joint_names)
        if self.parent.shape != (j,) or self.offset.shape != (j, 3):
            raise ValueError("parent/offset sizes do not match joint_names")
        if int((self.parent == -1).sum()) != 1 or self.parent[0] != -1:
            raise ValueError("exactly one root joint expected at index 0")
        if np.any(self.parent[1:] >= np.arange(1, j)):
            raise ValueError("joints must be topologically sorted (parent[i] < i)")
        if len(self.foot_joints) < 2:
            raise ValueError("need at least two foot joints for contact metrics")

    @property
    def n_joints(self) -> int:
        return len(self.joint_names)

    def to_dict(self) -> dict:
        return {
            "joint_names": list(self.joint_names),
            "parent": self.parent.tolist(),
            "offset": self.offset.tolist(),
            "foot_joints": list(self.foot_joints),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Skeleton":
        return cls(d["joint_names"], d["parent"], d["offset"], d["foot_joints"])


def default_humanoid() -> Skeleton:
    names = ["root", "spine", "l_arm", "r_arm",
             "l_hip", "l_knee", "l_foot",
             "r_hip", "r_knee", "r_foot"]
    parent = [-1, 0, 1, 1, 0, 4, 5, 0, 7, 8]
    offset = [
        [0.00, 0.00, 0.00],   # root
        [0.00, 0.45, 0.00],   # spine
        [0.25, 0.18, 0.00],   # l_arm
        [-0.25, 0.18, 0.00],  # r_arm
        [0.10, -0.05, 0.00],  # l_hip
        [0.00, -0.42, 0.00],  # l_knee
        [0.00, -0.43, 0.00],  # l_foot
        [-0.10, -0.05, 0.00], # r_hip
        [0.00, -0.42, 0.00],  # r_knee
        [0.00, -0.43, 0.00],  # r_foot
    ]
    return Skeleton(names, np.array(parent), np.array(offset), foot_joints=[6, 9])


def forward_kinematics(skeleton: Skeleton, joint_rot, root_orient, root_trans) -> Tensor:
    """Global joint positions (T, J, 3) from 6D local rotations and the
    root transform.  Differentiable through diffcore.

    The root row of ``joint_rot`` is ignored; the root's orientation comes
    from ``root_orient``.
    """
    jr = joint_rot if isinstance(joint_rot, Tensor) else Tensor(joint_rot)
    ro = root_orient if isinstance(root_orient, Tensor) else Tensor(root_orient)
    rt = root_trans if isinstance(root_trans, Tensor) else Tensor(root_trans)
    single = jr.ndim == 2
    if single:
        jr = dc.reshape(jr, (1,) + jr.shape)
        ro = dc.reshape(ro, (1,) + ro.shape)
        rt = dc.reshape(rt, (1,) + rt.shape)
    t_frames = jr.shape[0]
    n = skeleton.n_joints

    local = rot6d_to_matrix(jr)          # (T, J, 3, 3)
    glob_rot: list[Tensor] = [rot6d_to_matrix(ro)]  # root orientation
    positions: list[Tensor] = [rt]
    for j in range(1, n):
        p = int(skeleton.parent[j])
        r_parent = glob_rot[p]
        glob_rot.append(dc.matmul(r_parent, local[:, j]))
        off = Tensor(skeleton.offset[j].reshape(3, 1))
        step = dc.reshape(dc.matmul(r_parent, off), (t_frames, 3))
        positions.append(dc.add(positions[p], step))

    parts = [dc.reshape(p, (t_frames, 1, 3)) for p in positions]
    out = dc.concat(parts, axis=1)
    if single:
        out = dc.reshape(out, (n, 3))
    return out


def fk_local(skeleton: Skeleton, joint_rot) -> Tensor:
    """Joint positions in the root frame: FK with identity root orientation
    and the root pinned at the origin."""
    jr = joint_rot if isinstance(joint_rot, Tensor) else Tensor(joint_rot)
    frames = jr.shape[0] if jr.ndim == 3 else 1
    ident = np.tile(np.array([1.0, 0, 0, 0, 1.0, 0]), (frames, 1))
    zero = np.zeros((frames, 3))
    return forward_kinematics(skeleton, jr, Tensor(ident), Tensor(zero))


def apply_root_transform(local_pos, root_orient, root_trans) -> Tensor:
    """Compose root-frame positions into world space: g = R_o x + R_p."""
    lp = local_pos if isinstance(local_pos, Tensor) else Tensor(local_pos)
    ro = root_orient if isinstance(root_orient, Tensor) else Tensor(root_orient)
    rt = root_trans if isinstance(root_trans, Tensor) else Tensor(root_trans)
    rot = rot6d_to_matrix(ro)                      # (T, 3, 3)
    rotated = dc.matmul(lp, dc.transpose(rot))     # row vectors: x R^T
    trans = dc.reshape(rt, (rt.shape[0], 1, 3))
    return dc.add(rotated, dc.broadcast_to(trans, rotated.shape))
