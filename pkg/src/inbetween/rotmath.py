"""Rotation representations and geometry.

Two layers live here:

* differentiable ops on :class:`~inbetween.diffcore.Tensor` (6D -> matrix,
  geodesic distance) used inside training and guidance losses;
* plain numpy quaternion algebra (conversions, slerp) used by the dataset
  generator, the slerp reference motion, and test oracles.

6D rotations are the first two columns of a rotation matrix; quaternions
are unit, scalar-first, canonicalized to w >= 0 at I/O boundaries.
"""

from __future__ import annotations

import numpy as np

from . import diffcore as dc
from .diffcore import Tensor

IDENTITY_6D = np.array([1.0, 0.0, 0.0, 0.0, 1.0, 0.0])

_DEGENERATE_TOL = 1e-8
_ORTHO_TOL = 1e-6


class DegenerateRotationError(ValueError):
    """6D input whose two 3-vectors cannot span a frame."""


# ---------------------------------------------------------------------------
# differentiable ops


def _dot_last(a: Tensor, b: Tensor) -> Tensor:
    return dc.sum_(dc.mul(a, b), axis=-1, keepdims=True)


def _normalize_last(v: Tensor) -> Tensor:
    n = dc.sqrt(_dot_last(v, v))
    return dc.div(v, dc.broadcast_to(n, v.shape))


def _cross_last(a: Tensor, b: Tensor) -> Tensor:
    ax, ay, az = a[..., 0:1], a[..., 1:2], a[..., 2:3]
    bx, by, bz = b[..., 0:1], b[..., 1:2], b[..., 2:3]
    return dc.concat(
        [
            dc.sub(dc.mul(ay, bz), dc.mul(az, by)),
            dc.sub(dc.mul(az, bx), dc.mul(ax, bz)),
            dc.sub(dc.mul(ax, by), dc.mul(ay, bx)),
        ],
        axis=-1,
    )


def rot6d_to_matrix(v):
    """Gram-Schmidt a (..., 6) tensor into (..., 3, 3) rotation matrices.

    Scale-invariant in each 3-vector.  Degenerate inputs (zero or parallel
    columns) raise; they are never silently regularized.
    """
    v = v if isinstance(v, Tensor) else Tensor(v)
    if v.shape[-1] != 6:
        raise dc.ShapeError(f"expected trailing dim 6, got {v.shape}")
    a1 = v[..., 0:3]
    a2 = v[..., 3:6]
    n1 = np.linalg.norm(a1.data, axis=-1)
    if np.any(n1 <= _DEGENERATE_TOL):
        raise DegenerateRotationError("first 3-vector of 6D rotation is near zero")
    b1 = _normalize_last(a1)
    proj = _dot_last(b1, a2)
    u2 = dc.sub(a2, dc.mul(dc.broadcast_to(proj, b1.shape), b1))
    n2 = np.linalg.norm(u2.data, axis=-1)
    if np.any(n2 <= _DEGENERATE_TOL):
        raise DegenerateRotationError("6D rotation columns are near parallel")
    b2 = _normalize_last(u2)
    b3 = _cross_last(b1, b2)
    cols = [dc.reshape(b, b.shape + (1,)) for b in (b1, b2, b3)]
    return dc.concat(cols, axis=-1)


def matrix_to_rot6d(m: np.ndarray) -> np.ndarray:
    """First two columns of (..., 3, 3) matrices, flattened to (..., 6)."""
    m = np.asarray(m, dtype=np.float64)
    return np.concatenate([m[..., :, 0], m[..., :, 1]], axis=-1)


def _assert_orthonormal(m: np.ndarray) -> None:
    mtm = np.swapaxes(m, -1, -2) @ m
    eye = np.eye(3)
    if np.max(np.abs(mtm - eye)) > _ORTHO_TOL:
        raise ValueError("matrix is not orthonormal within 1e-6")
    if np.any(np.linalg.det(m) < 0.0):
        raise ValueError("matrix has negative determinant")


def geodesic_distance(r1, r2, check: bool = True) -> Tensor:
    """Angular distance arccos((Tr(R1 R2^T) - 1) / 2), in [0, pi].

    Differentiable; arccos clamping in diffcore bounds the gradient at the
    0 and pi endpoints.
    """
    r1 = r1 if isinstance(r1, Tensor) else Tensor(r1)
    r2 = r2 if isinstance(r2, Tensor) else Tensor(r2)
    if check:
        _assert_orthonormal(r1.data)
        _assert_orthonormal(r2.data)
    # Tr(R1 R2^T) == sum_ij R1_ij * R2_ij
    tr = dc.sum_(dc.mul(r1, r2), axis=(-2, -1))
    return dc.arccos(dc.div(dc.sub(tr, 1.0), 2.0))


# ---------------------------------------------------------------------------
# quaternion algebra (numpy, not differentiated)


def quat_normalize(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=np.float64)
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def quat_canonical(q: np.ndarray) -> np.ndarray:
    """Resolve the double cover: flip sign so w >= 0."""
    q = quat_normalize(q)
    flip = np.where(q[..., 0:1] < 0.0, -1.0, 1.0)
    return q * flip


def quat_mul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = (a[..., i] for i in range(4))
    bw, bx, by, bz = (b[..., i] for i in range(4))
    return np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )


def quat_conj(q: np.ndarray) -> np.ndarray:
    out = np.array(q, dtype=np.float64, copy=True)
    out[..., 1:] *= -1.0
    return out


def quat_from_matrix(m: np.ndarray) -> np.ndarray:
    """Rotation matrices (..., 3, 3) -> canonical unit quaternions (..., 4)."""
    m = np.asarray(m, dtype=np.float64)
    batch = m.shape[:-2]
    m = m.reshape((-1, 3, 3))
    q = np.empty((m.shape[0], 4))
    for i, r in enumerate(m):
        tr = r[0, 0] + r[1, 1] + r[2, 2]
        if tr > 0.0:
            s = np.sqrt(tr + 1.0) * 2.0
            q[i] = [0.25 * s, (r[2, 1] - r[1, 2]) / s,
                    (r[0, 2] - r[2, 0]) / s, (r[1, 0] - r[0, 1]) / s]
        elif r[0, 0] > r[1, 1] and r[0, 0] > r[2, 2]:
            s = np.sqrt(1.0 + r[0, 0] - r[1, 1] - r[2, 2]) * 2.0
            q[i] = [(r[2, 1] - r[1, 2]) / s, 0.25 * s,
                    (r[0, 1] + r[1, 0]) / s, (r[0, 2] + r[2, 0]) / s]
        elif r[1, 1] > r[2, 2]:
            s = np.sqrt(1.0 + r[1, 1] - r[0, 0] - r[2, 2]) * 2.0
            q[i] = [(r[0, 2] - r[2, 0]) / s, (r[0, 1] + r[1, 0]) / s,
                    0.25 * s, (r[1, 2] + r[2, 1]) / s]
        else:
            s = np.sqrt(1.0 + r[2, 2] - r[0, 0] - r[1, 1]) * 2.0
            q[i] = [(r[1, 0] - r[0, 1]) / s, (r[0, 2] + r[2, 0]) / s,
                    (r[1, 2] + r[2, 1]) / s, 0.25 * s]
    return quat_canonical(q.reshape(batch + (4,)))


def matrix_from_quat(q: np.ndarray) -> np.ndarray:
    q = quat_normalize(q)
    w, x, y, z = (q[..., i] for i in range(4))
    m = np.empty(q.shape[:-1] + (3, 3))
    m[..., 0, 0] = 1 - 2 * (y * y + z * z)
    m[..., 0, 1] = 2 * (x * y - z * w)
    m[..., 0, 2] = 2 * (x * z + y * w)
    m[..., 1, 0] = 2 * (x * y + z * w)
    m[..., 1, 1] = 1 - 2 * (x * x + z * z)
    m[..., 1, 2] = 2 * (y * z - x * w)
    m[..., 2, 0] = 2 * (x * z - y * w)
    m[..., 2, 1] = 2 * (y * z + x * w)
    m[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return m


def quat_angle(q: np.ndarray) -> np.ndarray:
    """Rotation angle of unit quaternions, in [0, pi]."""
    q = quat_canonical(q)
    w = np.clip(q[..., 0], -1.0, 1.0)
    return 2.0 * np.arccos(w)


def quat_log(q: np.ndarray) -> np.ndarray:
    """Axis-angle vector (rotation vector) of unit quaternions."""
    q = quat_canonical(q)
    w = np.clip(q[..., 0:1], -1.0, 1.0)
    v = q[..., 1:]
    vn = np.linalg.norm(v, axis=-1, keepdims=True)
    angle = 2.0 * np.arctan2(vn, w)
    scale = np.where(vn > 1e-12, angle / np.maximum(vn, 1e-300), 2.0)
    return v * scale


def slerp(q0: np.ndarray, q1: np.ndarray, t) -> np.ndarray:
    """Shortest-arc spherical interpolation of unit quaternions.

    Broadcasts over leading dims; ``t`` may be a scalar or an array aligned
    with the batch.  Falls back to normalized lerp below 1e-6 arc angle.
    """
    q0 = quat_normalize(q0)
    q1 = quat_normalize(q1)
    t = np.asarray(t, dtype=np.float64)
    tt = t if t.ndim == 0 else t.reshape(t.shape + (1,))
    dot = np.sum(q0 * q1, axis=-1, keepdims=True)
    q1 = np.where(dot < 0.0, -q1, q1)
    dot = np.clip(np.abs(dot), -1.0, 1.0)
    theta = np.arccos(dot)
    sin_theta = np.sin(theta)
    small = theta < 1e-6
    with np.errstate(divide="ignore", invalid="ignore"):
        w0 = np.where(small, 1.0 - tt, np.sin((1.0 - tt) * theta) / sin_theta)
        w1 = np.where(small, tt, np.sin(tt * theta) / sin_theta)
    out = w0 * q0 + w1 * q1
    return quat_normalize(out)


def rot6d_slerp(a6: np.ndarray, b6: np.ndarray, t) -> np.ndarray:
    """Slerp directly on 6D channels via quaternions; returns 6D."""
    qa = quat_from_matrix(rot6d_to_matrix(a6).data)
    qb = quat_from_matrix(rot6d_to_matrix(b6).data)
    return matrix_to_rot6d(matrix_from_quat(slerp(qa, qb, t)))


def slerp_motion(spec, n_frames: int, fps: float):
    """Reference motion interpolating the keyframe observations.

    Rotational channels (root orientation, joint rotations) are slerped
    between temporally adjacent keyframes; root translation and joint
    positions are interpolated linearly; outside the keyframe span the
    nearest keyframe pose is held constant.  Velocities are recomputed by
    finite differences of the interpolated tracks.
    """
    from .motion.sequence import (
        MotionSequence, angular_velocity, central_diff, pose_dim,
    )

    k = spec.n_keyframes
    n_joints = (spec.poses.shape[1] - 9) // 9
    if spec.poses.shape[1] != pose_dim(n_joints):
        raise ValueError("keyframe pose rows have an unexpected width")
    idx = spec.indices
    parts = spec.pose_parts(n_joints)

    kf_quat_root = quat_from_matrix(rot6d_to_matrix(parts["root_orient"]).data)
    kf_quat_joint = quat_from_matrix(rot6d_to_matrix(parts["joint_rot"]).data)

    root_trans = np.empty((n_frames, 3))
    joint_pos = np.empty((n_frames, n_joints, 3))
    root_q = np.empty((n_frames, 4))
    joint_q = np.empty((n_frames, n_joints, 4))

    seg = np.clip(np.searchsorted(idx, np.arange(n_frames), side="right") - 1,
                  0, max(k - 2, 0))
    for f in range(n_frames):
        if f <= idx[0]:
            a = b = 0
            u = 0.0
        elif f >= idx[-1]:
            a = b = k - 1
            u = 0.0
        else:
            a = int(seg[f])
            b = a + 1
            u = (f - idx[a]) / (idx[b] - idx[a])
        root_trans[f] = (1 - u) * parts["root_trans"][a] + u * parts["root_trans"][b]
        joint_pos[f] = (1 - u) * parts["joint_pos"][a] + u * parts["joint_pos"][b]
        root_q[f] = slerp(kf_quat_root[a], kf_quat_root[b], u)
        joint_q[f] = slerp(kf_quat_joint[a], kf_quat_joint[b], u)

    root_orient = matrix_to_rot6d(matrix_from_quat(root_q))
    joint_rot = matrix_to_rot6d(matrix_from_quat(joint_q))
    return MotionSequence(
        fps=fps,
        root_orient=root_orient,
        root_trans=root_trans,
        joint_rot=joint_rot,
        joint_pos=joint_pos,
        joint_vel=central_diff(joint_pos, fps),
        joint_angvel=angular_velocity(joint_rot, fps),
    )


# convenient axis rotations (used all over the tests and the generator)


def rot_x(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[1, 0, 0], [0, c, -s], [0, s, c]], dtype=np.float64)


def rot_y(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]], dtype=np.float64)


def rot_z(theta: float) -> np.ndarray:
    c, s = np.cos(theta), np.sin(theta)
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]], dtype=np.float64)
