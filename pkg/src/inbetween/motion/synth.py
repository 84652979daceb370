"""Procedural motion families for the desk-scale corpus.

Two families on the default 10-joint humanoid:

* ``walk`` -- parameterized gait (speed, turn rate, stride frequency, arm
  swing).  Legs alternate contact phase-coherently; the root height bobs
  with the gait; the root ground path is an exact line when the turn rate
  is zero.  Feet are calibrated so the lowest contact grazes y=0.
* ``reach`` -- standing pose with a timed two-arm raise.

All randomness flows through one seeded generator, so a (params, n, seed)
triple reproduces the corpus bit-exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import rotmath
from .sequence import MotionSequence, angular_velocity, central_diff
from .skeleton import Skeleton, default_humanoid, fk_local

GROUND_CLEARANCE = 0.005  # calibrated minimum foot height, meters


@dataclass
class FamilyRanges:
    """Sampling ranges for the synthetic corpus."""

    walk_fraction: float = 0.7
    speed: tuple[float, float] = (0.7, 1.6)            # m/s
    turn_rate: tuple[float, float] = (-0.6, 0.6)       # rad/s
    stride_freq: tuple[float, float] = (0.75, 1.1)     # Hz
    arm_swing: tuple[float, float] = (0.15, 0.6)       # rad
    reach_amp: tuple[float, float] = (0.8, 2.0)        # rad

    def validate(self):
        if not 0.0 <= self.walk_fraction <= 1.0:
            raise ValueError("walk_fraction must be in [0, 1]")
        for name in ("speed", "stride_freq", "reach_amp"):
            lo, hi = getattr(self, name)
            if lo <= 0 or hi < lo:
                raise ValueError(f"invalid range for {name}: ({lo}, {hi})")
        for name in ("turn_rate", "arm_swing"):
            lo, hi = getattr(self, name)
            if hi < lo:
                raise ValueError(f"invalid range for {name}: ({lo}, {hi})")


@dataclass
class WalkParams:
    speed: float
    turn_rate: float
    stride_freq: float
    arm_swing: float
    phase0: float = 0.0
    heading0: float = 0.0

    def validate(self):
        if self.speed <= 0 or self.stride_freq <= 0:
            raise ValueError("speed and stride_freq must be positive")


@dataclass
class ReachParams:
    amp: float
    start: float = 0.2      # fraction of the clip
    duration: float = 0.5   # fraction of the clip
    asym: float = 0.9       # right-arm scale
    heading0: float = 0.0

    def validate(self):
        if self.amp <= 0 or not 0 < self.duration <= 1:
            raise ValueError("invalid reach parameters")


SPEED_RIPPLE = 0.05  # fractional forward-speed oscillation at step rate


def walk_speed_profile(params: WalkParams, times: np.ndarray) -> np.ndarray:
    """Forward speed samples; exposed so tests can integrate it independently."""
    theta = 2.0 * np.pi * params.stride_freq * times + params.phase0
    return params.speed * (1.0 + SPEED_RIPPLE * np.cos(2.0 * theta))


def walk_heading(params: WalkParams, times: np.ndarray) -> np.ndarray:
    return params.heading0 + params.turn_rate * times


def _smooth01(x: np.ndarray) -> np.ndarray:
    x = np.clip(x, 0.0, 1.0)
    return x * x * (3.0 - 2.0 * x)


def _stack_rotations(per_joint: dict[int, np.ndarray], t: int, j: int) -> np.ndarray:
    mats = np.tile(np.eye(3), (t, j, 1, 1))
    for joint, track in per_joint.items():
        mats[:, joint] = track
    return mats


def _rx_track(angles: np.ndarray) -> np.ndarray:
    c, s = np.cos(angles), np.sin(angles)
    m = np.tile(np.eye(3), (angles.shape[0], 1, 1))
    m[:, 1, 1] = c
    m[:, 1, 2] = -s
    m[:, 2, 1] = s
    m[:, 2, 2] = c
    return m


def _ry_track(angles: np.ndarray) -> np.ndarray:
    c, s = np.cos(angles), np.sin(angles)
    m = np.tile(np.eye(3), (angles.shape[0], 1, 1))
    m[:, 0, 0] = c
    m[:, 0, 2] = s
    m[:, 2, 0] = -s
    m[:, 2, 2] = c
    return m


def _assemble(skeleton: Skeleton, fps: float, local_mats: np.ndarray,
              root_yaw: np.ndarray, root_xz: np.ndarray,
              bob: np.ndarray) -> MotionSequence:
    """Pack rotation tracks into a sequence; calibrate the root height so
    the lowest foot sample sits at GROUND_CLEARANCE."""
    t, j = local_mats.shape[:2]
    joint_rot = rotmath.matrix_to_rot6d(local_mats)
    joint_pos = fk_local(skeleton, joint_rot).data
    root_mats = _ry_track(root_yaw)
    root_orient = rotmath.matrix_to_rot6d(root_mats)

    # feet world height = root_y + (R_o p_local).y; solve root_y for contact
    rotated = np.einsum("tab,tjb->tja", root_mats, joint_pos)
    feet_rel = rotated[:, skeleton.foot_joints, 1]
    base = GROUND_CLEARANCE - float(np.min(feet_rel + bob[:, None]))
    root_trans = np.stack(
        [root_xz[:, 0], base + bob, root_xz[:, 1]], axis=1)

    return MotionSequence(
        fps=fps,
        root_orient=root_orient,
        root_trans=root_trans,
        joint_rot=joint_rot,
        joint_pos=joint_pos,
        joint_vel=central_diff(joint_pos, fps),
        joint_angvel=angular_velocity(joint_rot, fps),
    )


def generate_walk(params: WalkParams, skeleton: Skeleton | None = None,
                  n_frames: int = 128, fps: float = 30.0) -> MotionSequence:
    params.validate()
    skeleton = skeleton or default_humanoid()
    times = np.arange(n_frames) / fps
    theta = 2.0 * np.pi * params.stride_freq * times + params.phase0

    leg_span = float(-(skeleton.offset[4, 1] + skeleton.offset[5, 1]
                       + skeleton.offset[6, 1]))
    hip_amp = float(np.clip(params.speed / (2.0 * np.pi * params.stride_freq
                                            * leg_span), 0.12, 0.55))
    knee_amp = 1.8 * hip_amp

    hip_l = hip_amp * np.cos(theta)
    hip_r = hip_amp * np.cos(theta + np.pi)
    knee_l = knee_amp * 0.5 * (1.0 - np.sin(theta)) + 0.04
    knee_r = knee_amp * 0.5 * (1.0 - np.sin(theta + np.pi)) + 0.04
    foot_l = -0.5 * hip_l - 0.5 * knee_l
    foot_r = -0.5 * hip_r - 0.5 * knee_r

    spine_yaw = (0.08 + 0.3 * params.arm_swing) * np.sin(theta)
    spine_lean = 0.04 + 0.02 * np.sin(2.0 * theta)
    arm_l = params.arm_swing * np.cos(theta + np.pi)
    arm_r = params.arm_swing * np.cos(theta)

    spine = np.einsum("tab,tbc->tac", _ry_track(spine_yaw), _rx_track(-spine_lean))
    local = _stack_rotations(
        {
            1: spine,
            2: _rx_track(-arm_l),
            3: _rx_track(-arm_r),
            4: _rx_track(-hip_l),
            5: _rx_track(knee_l),
            6: _rx_track(foot_l),
            7: _rx_track(-hip_r),
            8: _rx_track(knee_r),
            9: _rx_track(foot_r),
        },
        n_frames, skeleton.n_joints)

    speed = walk_speed_profile(params, times)
    heading = walk_heading(params, times)
    vel = speed[:, None] * np.stack([np.sin(heading), np.cos(heading)], axis=1)
    xz = np.zeros((n_frames, 2))
    dt = 1.0 / fps
    xz[1:] = np.cumsum(0.5 * (vel[1:] + vel[:-1]) * dt, axis=0)

    bob = 0.012 * 0.5 * (1.0 - np.cos(2.0 * theta))
    return _assemble(skeleton, fps, local, heading, xz, bob)


def generate_reach(params: ReachParams, skeleton: Skeleton | None = None,
                   n_frames: int = 128, fps: float = 30.0) -> MotionSequence:
    params.validate()
    skeleton = skeleton or default_humanoid()
    frac = np.arange(n_frames) / max(n_frames - 1, 1)
    raise_frac = _smooth01((frac - params.start) / params.duration)

    arm_l = 0.1 + params.amp * raise_frac
    arm_r = 0.1 + params.amp * params.asym * raise_frac
    spine_lean = -0.06 * raise_frac
    knee = np.full(n_frames, 0.06)

    local = _stack_rotations(
        {
            1: _rx_track(-spine_lean),
            2: _rx_track(-arm_l),
            3: _rx_track(-arm_r),
            4: _rx_track(np.full(n_frames, -0.03)),
            5: _rx_track(knee),
            6: _rx_track(-0.5 * knee),
            7: _rx_track(np.full(n_frames, -0.03)),
            8: _rx_track(knee),
            9: _rx_track(-0.5 * knee),
        },
        n_frames, skeleton.n_joints)

    heading = np.full(n_frames, params.heading0)
    xz = np.zeros((n_frames, 2))
    bob = np.zeros(n_frames)
    return _assemble(skeleton, fps, local, heading, xz, bob)


def sample_walk_params(ranges: FamilyRanges, rng: np.random.Generator) -> WalkParams:
    return WalkParams(
        speed=rng.uniform(*ranges.speed),
        turn_rate=rng.uniform(*ranges.turn_rate),
        stride_freq=rng.uniform(*ranges.stride_freq),
        arm_swing=rng.uniform(*ranges.arm_swing),
        phase0=rng.uniform(0.0, 2.0 * np.pi),
        heading0=rng.uniform(0.0, 2.0 * np.pi),
    )


def sample_reach_params(ranges: FamilyRanges, rng: np.random.Generator) -> ReachParams:
    return ReachParams(
        amp=rng.uniform(*ranges.reach_amp),
        start=rng.uniform(0.05, 0.3),
        duration=rng.uniform(0.4, 0.7),
        asym=rng.uniform(0.7, 1.0),
        heading0=rng.uniform(0.0, 2.0 * np.pi),
    )


def generate_synthetic_dataset(ranges: FamilyRanges, n: int, seed: int,
                               skeleton: Skeleton | None = None,
                               n_frames: int = 128,
                               fps: float = 30.0) -> list[MotionSequence]:
    """Deterministic corpus of ``n`` sequences for one seed."""
    if n < 1:
        raise ValueError("n must be >= 1")
    ranges.validate()
    skeleton = skeleton or default_humanoid()
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(n):
        if rng.random() < ranges.walk_fraction:
            out.append(generate_walk(sample_walk_params(ranges, rng),
                                     skeleton, n_frames, fps))
        else:
            out.append(generate_reach(sample_reach_params(ranges, rng),
                                      skeleton, n_frames, fps))
    return out
