import numpy as np
import pytest

from conftest import fd_grad, max_rel_err

import inbetween.diffcore as dc
import inbetween.rotmath as rm
from inbetween.diffcore import Tape, Tensor
from inbetween.motion import (
    DatasetStats,
    FamilyRanges,
    KeyframeSpec,
    SchemaError,
    bernoulli_keyframe_mask,
    default_humanoid,
    forward_kinematics,
    generate_synthetic_dataset,
    generate_walk,
    random_keyframe_indices,
    read_dataset,
    read_motion,
    startend_keyframe_indices,
    validate_consistency,
    write_dataset,
    write_motion,
)
from inbetween.motion.synth import WalkParams, walk_heading, walk_speed_profile


IDENT6 = np.array([1.0, 0, 0, 0, 1.0, 0])


def _identity_pose(skel, frames=1):
    jr = np.tile(IDENT6, (frames, skel.n_joints, 1))
    ro = np.tile(IDENT6, (frames, 1))
    rt = np.zeros((frames, 3))
    return jr, ro, rt


def test_fk_identity_gives_cumulative_offsets():
    skel = default_humanoid()
    jr, ro, rt = _identity_pose(skel)
    pos = forward_kinematics(skel, jr, ro, rt).data[0]
    expected = np.zeros((skel.n_joints, 3))
    for j in range(1, skel.n_joints):
        expected[j] = expected[skel.parent[j]] + skel.offset[j]
    assert np.max(np.abs(pos - expected)) < 1e-14


def test_fk_root_translation_shifts_everything(rng):
    skel = default_humanoid()
    jr = rm.matrix_to_rot6d(rm.matrix_from_quat(
        rm.quat_normalize(rng.normal(size=(3, skel.n_joints, 4)))))
    ro = np.tile(IDENT6, (3, 1))
    base = forward_kinematics(skel, jr, ro, np.zeros((3, 3))).data
    shifted = forward_kinematics(
        skel, jr, ro, np.tile([1.0, 0, 0], (3, 1))).data
    assert np.allclose(shifted - base, [1.0, 0, 0], atol=1e-12)


def _fk_oracle(skel, joint_rot6d, root_orient6d, root_trans):
    """Naive per-joint matrix-chain product, one frame."""
    local = rm.rot6d_to_matrix(joint_rot6d).data
    out = np.zeros((skel.n_joints, 3))
    rots = [rm.rot6d_to_matrix(root_orient6d).data]
    out[0] = root_trans
    for j in range(1, skel.n_joints):
        p = skel.parent[j]
        out[j] = out[p] + rots[p] @ skel.offset[j]
        rots.append(rots[p] @ local[j])
    return out


def test_fk_matches_matrix_chain_oracle(rng):
    skel = default_humanoid()
    for _ in range(10):
        jr = rm.matrix_to_rot6d(rm.matrix_from_quat(
            rm.quat_normalize(rng.normal(size=(skel.n_joints, 4)))))
        ro = rm.matrix_to_rot6d(rm.matrix_from_quat(
            rm.quat_normalize(rng.normal(size=4))))
        rt = rng.normal(size=3)
        got = forward_kinematics(skel, jr, ro, rt).data
        want = _fk_oracle(skel, jr, ro, rt)
        assert np.max(np.abs(got - want)) < 1e-9


def test_fk_gradient_vs_fd(rng):
    skel = default_humanoid()
    jr0 = rm.matrix_to_rot6d(rm.matrix_from_quat(
        rm.quat_normalize(rng.normal(size=(2, skel.n_joints, 4)))))
    ro = np.tile(IDENT6, (2, 1))
    rt = rng.normal(size=(2, 3))

    def f(jr):
        with Tape():
            return dc.mean(forward_kinematics(skel, Tensor(jr), Tensor(ro),
                                              Tensor(rt))).item()

    with Tape() as tape:
        x = tape.watch(Tensor(jr0.copy()))
        loss = dc.mean(forward_kinematics(skel, x, Tensor(ro), Tensor(rt)))
        (g,) = dc.backward(loss, [x])
    assert max_rel_err(g.data, fd_grad(f, jr0)) <= 1e-4


# -- synthetic families -------------------------------------------------------


def test_walk_straight_line_when_no_turn():
    seq = generate_walk(WalkParams(1.2, 0.0, 0.9, 0.3, heading0=0.7))
    xz = seq.root_trans[:, [0, 2]]
    d = xz[-1] - xz[0]
    d = d / np.linalg.norm(d)
    dev = (xz - xz[0]) - ((xz - xz[0]) @ d)[:, None] * d
    assert np.max(np.abs(dev)) < 1e-9


def test_walk_displacement_matches_velocity_integral():
    params = WalkParams(1.2, 0.15, 0.95, 0.4, phase0=0.3)
    fps, n = 30.0, 128
    seq = generate_walk(params, n_frames=n, fps=fps)
    times = np.arange(n) / fps
    speed = walk_speed_profile(params, times)
    heading = walk_heading(params, times)
    vel = speed[:, None] * np.stack([np.sin(heading), np.cos(heading)], axis=1)
    # independent trapezoid integration of the exposed profile
    disp = np.sum(0.5 * (vel[1:] + vel[:-1]), axis=0) / fps
    got = seq.root_trans[-1, [0, 2]] - seq.root_trans[0, [0, 2]]
    assert np.allclose(got, disp, atol=1e-9)
    # ~ speed * duration, up to stride ripple
    assert np.linalg.norm(got) == pytest.approx(1.2 * (n - 1) / fps, abs=0.1)


def test_dataset_deterministic_per_seed():
    ranges = FamilyRanges()
    a = generate_synthetic_dataset(ranges, 6, seed=123)
    b = generate_synthetic_dataset(ranges, 6, seed=123)
    for sa, sb in zip(a, b):
        assert np.array_equal(sa.features(), sb.features())
    c = generate_synthetic_dataset(ranges, 6, seed=124)
    assert not np.array_equal(a[0].features(), c[0].features())


def test_generated_data_satisfies_consistency_invariants():
    skel = default_humanoid()
    for seq in generate_synthetic_dataset(FamilyRanges(), 6, seed=7):
        validate_consistency(seq, skel)


def test_feet_calibrated_to_ground():
    skel = default_humanoid()
    for seq in generate_synthetic_dataset(FamilyRanges(), 4, seed=3):
        feet_y = seq.global_positions(skel)[:, skel.foot_joints, 1]
        assert feet_y.min() == pytest.approx(0.005, abs=1e-9)


def test_invalid_params_rejected():
    with pytest.raises(ValueError):
        generate_walk(WalkParams(-1.0, 0.0, 0.9, 0.3))
    with pytest.raises(ValueError):
        generate_synthetic_dataset(FamilyRanges(walk_fraction=2.0), 2, 0)
    with pytest.raises(ValueError):
        generate_synthetic_dataset(FamilyRanges(), 0, 0)


# -- stats --------------------------------------------------------------------


def test_stats_reproducible_bit_exact():
    skel = default_humanoid()
    seqs = generate_synthetic_dataset(FamilyRanges(), 5, seed=11)
    s1 = DatasetStats.from_sequences(seqs, skel)
    s2 = DatasetStats.from_sequences(
        generate_synthetic_dataset(FamilyRanges(), 5, seed=11), skel)
    assert np.array_equal(s1.mean, s2.mean)
    assert np.array_equal(s1.std, s2.std)
    assert np.array_equal(s1.mean_joint_jerk, s2.mean_joint_jerk)


def test_normalize_roundtrip():
    skel = default_humanoid()
    seqs = generate_synthetic_dataset(FamilyRanges(), 3, seed=2)
    stats = DatasetStats.from_sequences(seqs, skel)
    f = seqs[0].features()
    assert np.max(np.abs(stats.denormalize(stats.normalize(f)) - f)) < 1e-9


# -- io -----------------------------------------------------------------------


def test_motion_roundtrip_exact(tmp_path):
    skel = default_humanoid()
    seq = generate_walk(WalkParams(1.0, 0.3, 0.9, 0.5), n_frames=16)
    p = tmp_path / "m.json"
    write_motion(p, seq, skel)
    back, skel2 = read_motion(p)
    assert back.fps == seq.fps
    assert np.array_equal(back.features(), seq.features())
    assert skel2.joint_names == skel.joint_names
    assert np.array_equal(skel2.offset, skel.offset)


def test_missing_field_names_path(tmp_path):
    import json

    skel = default_humanoid()
    seq = generate_walk(WalkParams(1.0, 0.0, 0.9, 0.5), n_frames=8)
    p = tmp_path / "m.json"
    write_motion(p, seq, skel)
    doc = json.loads(p.read_text())
    del doc["frames"]["joint_angvel"]
    p.write_text(json.dumps(doc))
    with pytest.raises(SchemaError, match="joint_angvel"):
        read_motion(p)


def test_zero_fps_rejected(tmp_path):
    import json

    skel = default_humanoid()
    seq = generate_walk(WalkParams(1.0, 0.0, 0.9, 0.5), n_frames=8)
    p = tmp_path / "m.json"
    write_motion(p, seq, skel)
    doc = json.loads(p.read_text())
    doc["fps"] = 0
    p.write_text(json.dumps(doc))
    with pytest.raises(SchemaError, match="fps"):
        read_motion(p)


def test_dataset_roundtrip(tmp_path):
    skel = default_humanoid()
    seqs = generate_synthetic_dataset(FamilyRanges(), 3, seed=5, n_frames=16)
    stats = DatasetStats.from_sequences(seqs, skel)
    write_dataset(tmp_path / "data", seqs, skel, stats)
    back, skel2, stats2 = read_dataset(tmp_path / "data")
    assert len(back) == 3
    assert np.array_equal(back[1].features(), seqs[1].features())
    assert np.array_equal(stats2.mean, stats.mean)


# -- keyframe helpers ---------------------------------------------------------


def test_startend_indices():
    assert startend_keyframe_indices(128, 2).tolist() == [0, 127]
    assert startend_keyframe_indices(128, 8).tolist() == [0, 1, 2, 3, 124, 125, 126, 127]
    assert startend_keyframe_indices(128, 3).tolist() == [0, 1, 127]


def test_random_indices_reproducible():
    a = random_keyframe_indices(128, 5, np.random.default_rng(9))
    b = random_keyframe_indices(128, 5, np.random.default_rng(9))
    assert np.array_equal(a, b)
    assert len(np.unique(a)) == 5
    with pytest.raises(ValueError):
        random_keyframe_indices(10, 11, np.random.default_rng(0))


def test_bernoulli_mask_never_empty():
    rng = np.random.default_rng(1)
    for _ in range(20):
        mask = bernoulli_keyframe_mask(128, 5.0 / 128.0, rng)
        assert mask.any()


def test_keyframe_file_roundtrip(tmp_path):
    from inbetween.motion import read_keyframes, write_keyframes

    seq = generate_walk(WalkParams(1.1, 0.2, 0.9, 0.4), n_frames=32)
    spec = KeyframeSpec.from_motion(seq, [2, 17, 31])
    p = tmp_path / "kf.json"
    write_keyframes(p, spec, seq.n_joints)
    back = read_keyframes(p)
    assert np.array_equal(back.mask, spec.mask)
    assert np.array_equal(back.poses, spec.poses)
