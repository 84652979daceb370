"""Motion autoencoder with a continuous-time decoder.

The encoder summarizes a whole normalized sequence into a local latent
(joint channels) and a global latent (root channels) via strided temporal
convolutions, mean pooling, and linear mean/logvar heads.  The decoder is
a pair of coordinate MLPs mapping (latent, sinusoidal time features) to
the normalized pose channels at any t in [0, 1], so a motion is a function
of continuous time rather than a frame grid.

Velocities are not decoded; they are derived by differencing the decoded
tracks, which keeps the velocity/position consistency testable.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass

import numpy as np

from . import diffcore as dc
from . import rotmath
from .checkpoint import load_checkpoint, save_checkpoint
from .diffcore import Tape, Tensor
from .motion import (
    DatasetStats,
    MotionSequence,
    Skeleton,
    angular_velocity,
    central_diff,
    feature_layout,
    pose_dim,
)
from .nn import (MLP, Adam, Conv1d, Linear, collect_grads, cosine_lr,
                 sinusoidal_dim, sinusoidal_features)

GLOBAL_CHANNELS = 9  # root_orient(6) + root_trans(3) lead the feature vector
ENC_TIME_BANDS = 4


@dataclass
class VaeConfig:
    d_local: int = 64
    d_global: int = 16
    width: int = 256
    depth: int = 4
    n_freq: int = 8
    enc_local_width: int = 96
    enc_global_width: int = 32
    kernel: int = 3
    beta: float = 1e-4
    warmup_frac: float = 0.1
    geo_weight: float = 0.2
    lr: float = 1e-3
    steps: int = 4000
    batch: int = 8
    times_per_step: int = 64
    val_frac: float = 0.1
    seed: int = 0

    @property
    def d_latent(self) -> int:
        return self.d_local + self.d_global

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "VaeConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown VAE config keys: {sorted(unknown)}")
        return cls(**d)


class _ConvEncoder:
    """Three stride-2 conv blocks + time-position channels + mean pool."""

    def __init__(self, rng, d_in: int, width: int, d_latent: int, kernel: int,
                 name: str):
        d_aug = d_in + sinusoidal_dim(ENC_TIME_BANDS)
        self.convs = [
            Conv1d(rng, d_aug, width, kernel, f"{name}.c0"),
            Conv1d(rng, width, width, kernel, f"{name}.c1"),
            Conv1d(rng, width, width, kernel, f"{name}.c2"),
        ]
        # logvar starts near-deterministic (sigma ~ 0.05) so reparameterization
        # noise does not put a floor under the reconstruction
        self.head_mean = Linear(rng, width, d_latent, f"{name}.mean")
        self.head_logvar = Linear(rng, width, d_latent, f"{name}.logvar",
                                  zero_init=True, bias_init=-6.0)

    def __call__(self, x: Tensor) -> tuple[Tensor, Tensor]:
        b, t, _ = x.shape
        pe = sinusoidal_features(np.arange(t) / max(t - 1, 1), ENC_TIME_BANDS)
        pe_t = dc.broadcast_to(Tensor(pe.reshape(1, t, -1)),
                               (b, t, pe.shape[1]))
        h = dc.concat([x, pe_t], axis=2)
        for conv in self.convs:
            h = dc.tanh(conv(h))
            h = h[:, ::2, :]
        pooled = dc.mean(h, axis=1)
        return self.head_mean(pooled), self.head_logvar(pooled)

    def params(self) -> dict[str, Tensor]:
        out = {}
        for c in self.convs:
            out.update(c.params())
        out.update(self.head_mean.params())
        out.update(self.head_logvar.params())
        return out


class InrVae:
    """Encoder + continuous-time decoder bundle with dataset statistics."""

    def __init__(self, config: VaeConfig, stats: DatasetStats,
                 skeleton: Skeleton, seed: int | None = None):
        self.config = config
        self.stats = stats
        self.skeleton = skeleton
        j = skeleton.n_joints
        self.n_local_channels = 9 + j * 15 - GLOBAL_CHANNELS
        rng = np.random.default_rng(config.seed if seed is None else seed)
        c = config
        self.enc_local = _ConvEncoder(rng, self.n_local_channels,
                                      c.enc_local_width, c.d_local, c.kernel,
                                      "enc_local")
        self.enc_global = _ConvEncoder(rng, GLOBAL_CHANNELS,
                                       c.enc_global_width, c.d_global, c.kernel,
                                       "enc_global")
        self.dec_local = MLP(rng, c.d_local + sinusoidal_dim(c.n_freq), c.width, c.depth,
                             j * 9, "dec_local")
        self.dec_global = MLP(rng, c.d_global + sinusoidal_dim(c.n_freq), c.width, c.depth,
                              GLOBAL_CHANNELS, "dec_global")

    # -- parameters ------------------------------------------------------

    def params(self) -> dict[str, Tensor]:
        out = {}
        for m in (self.enc_local, self.enc_global, self.dec_local, self.dec_global):
            out.update(m.params())
        return out

    def decoder_params(self) -> dict[str, Tensor]:
        out = {}
        for m in (self.dec_local, self.dec_global):
            out.update(m.params())
        return out

    # -- encoding ----------------------------------------------------------

    def encode(self, feats_norm: Tensor):
        """Normalized features (B, T, C) -> (mean, logvar) tensors (B, D)."""
        local = feats_norm[:, :, GLOBAL_CHANNELS:]
        glob = feats_norm[:, :, :GLOBAL_CHANNELS]
        mu_l, lv_l = self.enc_local(local)
        mu_g, lv_g = self.enc_global(glob)
        return dc.concat([mu_l, mu_g], axis=1), dc.concat([lv_l, lv_g], axis=1)

    def encode_mean(self, seq_or_feats) -> np.ndarray:
        """Deterministic inference-mode latent of one motion."""
        feats = (seq_or_feats.features() if isinstance(seq_or_feats, MotionSequence)
                 else np.asarray(seq_or_feats))
        normed = self.stats.normalize(feats)[None]
        mu, _ = self.encode(Tensor(normed))
        return mu.data[0].copy()

    # -- decoding ----------------------------------------------------------

    def decode(self, z, times: np.ndarray) -> Tensor:
        """Normalized pose channels (B, n, pose_dim) at times in [0, 1].

        Differentiable wrt ``z``; times are constants of the graph.
        """
        z = z if isinstance(z, Tensor) else Tensor(z)
        single = z.ndim == 1
        if single:
            z = dc.reshape(z, (1, z.shape[0]))
        times = np.asarray(times, dtype=np.float64)
        if times.size and (times.min() < 0.0 or times.max() > 1.0):
            raise ValueError("decode times must lie in [0, 1]")
        b = z.shape[0]
        n = times.shape[0]
        c = self.config
        tf = sinusoidal_features(times, c.n_freq)
        tf_t = dc.broadcast_to(Tensor(tf.reshape(1, n, -1)), (b, n, tf.shape[1]))

        z_l = dc.broadcast_to(dc.reshape(z[:, :c.d_local], (b, 1, c.d_local)),
                              (b, n, c.d_local))
        z_g = dc.broadcast_to(dc.reshape(z[:, c.d_local:], (b, 1, c.d_global)),
                              (b, n, c.d_global))
        local = self.dec_local(dc.concat([z_l, tf_t], axis=2))    # (b, n, J*9)
        glob = self.dec_global(dc.concat([z_g, tf_t], axis=2))    # (b, n, 9)
        out = dc.concat([glob, local], axis=2)
        if single:
            out = dc.reshape(out, (n, out.shape[2]))
        return out

    def decode_motion(self, z: np.ndarray, n_frames: int, fps: float) -> MotionSequence:
        """Materialize a full de-normalized motion on a uniform frame grid."""
        times = frame_times(n_frames)
        pose_norm = self.decode(z, times)
        pose = pose_norm.data if pose_norm.ndim == 2 else pose_norm.data[0]
        return self.pose_to_motion(pose, fps)

    def pose_to_motion(self, pose_norm: np.ndarray, fps: float) -> MotionSequence:
        """De-normalize decoded pose channels and derive velocity tracks."""
        j = self.skeleton.n_joints
        pd = pose_dim(j)
        pose = pose_norm * self.stats.std[:pd] + self.stats.mean[:pd]
        lay = feature_layout(j)
        t = pose.shape[0]
        joint_rot = pose[:, lay["joint_rot"]].reshape(t, j, 6)
        joint_pos = pose[:, lay["joint_pos"]].reshape(t, j, 3)
        return MotionSequence(
            fps=fps,
            root_orient=pose[:, lay["root_orient"]],
            root_trans=pose[:, lay["root_trans"]],
            joint_rot=joint_rot,
            joint_pos=joint_pos,
            joint_vel=central_diff(joint_pos, fps),
            joint_angvel=angular_velocity(joint_rot, fps),
        )

    def reconstruct(self, seq: MotionSequence) -> MotionSequence:
        z = self.encode_mean(seq)
        return self.decode_motion(z, seq.n_frames, seq.fps)

    # -- persistence -------------------------------------------------------

    def save(self, path, metrics: dict | None = None) -> None:
        save_checkpoint(
            path, "vae", self.config.to_dict(), self.params(),
            stats={"dataset": self.stats.to_dict(),
                   "skeleton": self.skeleton.to_dict()},
            metrics=metrics)

    @classmethod
    def load(cls, path) -> "InrVae":
        meta, blobs = load_checkpoint(path, expect_kind="vae")
        config = VaeConfig.from_dict(meta["config"])
        stats = DatasetStats.from_dict(meta["stats"]["dataset"])
        skeleton = Skeleton.from_dict(meta["stats"]["skeleton"])
        vae = cls(config, stats, skeleton)
        own = vae.params()
        for name, arr in blobs.items():
            own[name].data = arr.astype(np.float64)
        vae.train_metrics = meta.get("metrics", {})
        return vae


def frame_times(n_frames: int) -> np.ndarray:
    """Uniform decode grid: frame k at t = k / (n_frames - 1)."""
    return np.arange(n_frames) / max(n_frames - 1, 1)


def kl_divergence(mu: Tensor, logvar: Tensor) -> Tensor:
    """Mean over batch of KL(q || N(0, I)), summed over latent dims."""
    term = dc.sub(dc.add(1.0, logvar), dc.add(dc.mul(mu, mu), dc.exp(logvar)))
    return dc.mul(dc.mean(dc.sum_(term, axis=1)), -0.5)


def geodesic_rot_loss(pred_pose: Tensor, target_pose: np.ndarray,
                      stats: DatasetStats, n_joints: int) -> Tensor:
    """Mean geodesic distance over decoded joint rotations and root
    orientation, in radians (inputs are normalized pose channels)."""
    lay = feature_layout(n_joints)
    rot_sl = lay["joint_rot"]
    ori_sl = lay["root_orient"]

    def denorm(x: Tensor, sl: slice) -> Tensor:
        std = Tensor(stats.std[sl])
        mn = Tensor(stats.mean[sl])
        part = x[..., sl]
        return dc.add(dc.mul(part, dc.broadcast_to(std, part.shape)),
                      dc.broadcast_to(mn, part.shape))

    pred_rot = denorm(pred_pose, rot_sl)
    pred_ori = denorm(pred_pose, ori_sl)
    tgt = np.asarray(target_pose)
    tgt_rot = tgt[..., rot_sl] * stats.std[rot_sl] + stats.mean[rot_sl]
    tgt_ori = tgt[..., ori_sl] * stats.std[ori_sl] + stats.mean[ori_sl]

    shape6 = pred_rot.shape[:-1] + (n_joints, 6)
    d_rot = rotmath.geodesic_distance(
        rotmath.rot6d_to_matrix(dc.reshape(pred_rot, shape6)),
        rotmath.rot6d_to_matrix(tgt_rot.reshape(shape6)), check=False)
    d_ori = rotmath.geodesic_distance(
        rotmath.rot6d_to_matrix(pred_ori),
        rotmath.rot6d_to_matrix(tgt_ori), check=False)
    return dc.add(dc.mean(d_rot), dc.mean(d_ori))


def mean_joint_position_error(vae: InrVae, seqs: list[MotionSequence]) -> float:
    """Mean world-space joint position error of reconstructions, meters."""
    from .motion.skeleton import apply_root_transform

    errs = []
    for seq in seqs:
        rec = vae.reconstruct(seq)
        g_true = seq.global_positions(vae.skeleton)
        g_rec = apply_root_transform(rec.joint_pos, rec.root_orient,
                                     rec.root_trans).data
        errs.append(np.linalg.norm(g_true - g_rec, axis=-1).mean())
    return float(np.mean(errs))


def latent_roundtrip_rel_l2(vae: InrVae, seqs: list[MotionSequence]) -> float:
    """Relative L2 between z and encode(decode(z)) on given motions."""
    rels = []
    for seq in seqs:
        z = vae.encode_mean(seq)
        back = vae.encode_mean(vae.decode_motion(z, seq.n_frames, seq.fps))
        rels.append(np.linalg.norm(back - z) / max(np.linalg.norm(z), 1e-12))
    return float(np.mean(rels))


def train_vae(seqs: list[MotionSequence], skeleton: Skeleton,
              config: VaeConfig, stats: DatasetStats | None = None,
              log_every: int = 200, progress=None):
    """Train on normalized features; returns (vae, metrics, loss_curve).

    Divergence (non-finite loss) restores the last good snapshot and stops.
    """
    if len(seqs) < 1:
        raise ValueError("empty training set")
    if stats is None:
        stats = DatasetStats.from_sequences(seqs, skeleton)
    vae = InrVae(config, stats, skeleton)
    params = vae.params()
    opt = Adam(params, lr=config.lr)
    rng = np.random.default_rng(config.seed)

    feats = np.stack([stats.normalize(s.features()) for s in seqs])
    n, t, _ = feats.shape
    pd = pose_dim(skeleton.n_joints)
    n_val = max(1, int(round(config.val_frac * n))) if n >= 5 else 0
    order = rng.permutation(n)
    val_idx = order[:n_val]
    train_idx = order[n_val:] if n_val else order
    times_all = frame_times(t)

    curve = []
    snapshot = {k: v.data.copy() for k, v in params.items()}
    snap_step = 0
    aborted_at = None
    warm_steps = max(1, int(config.warmup_frac * config.steps))

    for step in range(config.steps):
        if config.batch >= len(train_idx):
            batch = train_idx
        else:
            batch = rng.choice(train_idx, size=config.batch, replace=False)
        tsel = np.sort(rng.choice(t, size=min(config.times_per_step, t),
                                  replace=False))
        eps = rng.standard_normal((len(batch), config.d_latent))
        beta_t = config.beta * min(1.0, (step + 1) / warm_steps)
        lr_t = cosine_lr(step, config.steps, config.lr)
        try:
            with Tape():
                x = Tensor(feats[batch])
                mu, logvar = vae.encode(x)
                z = dc.add(mu, dc.mul(dc.exp(dc.mul(logvar, 0.5)), Tensor(eps)))
                pred = vae.decode(z, times_all[tsel])
                target = feats[batch][:, tsel, :pd]
                diff = dc.sub(pred, Tensor(target))
                sq = dc.mul(diff, diff)
                # per-block means: root orientation, root translation, and
                # joint channels each carry equal weight, else the 3 root
                # translation channels are swamped by the 90 joint channels
                mse = dc.div(dc.add(dc.add(dc.mean(sq[:, :, :6]),
                                           dc.mean(sq[:, :, 6:GLOBAL_CHANNELS])),
                                    dc.mean(sq[:, :, GLOBAL_CHANNELS:])), 3.0)
                geo = geodesic_rot_loss(pred, target, stats, skeleton.n_joints)
                kl = kl_divergence(mu, logvar)
                loss = dc.add(dc.add(mse, dc.mul(geo, config.geo_weight)),
                              dc.mul(kl, beta_t))
                if not np.isfinite(loss.data):
                    raise dc.NonFiniteError("loss is not finite")
                grads = collect_grads(loss, params)
            opt.step(grads, lr=lr_t)
        except dc.NonFiniteError:
            for k, v in params.items():
                v.data = snapshot[k].copy()
            aborted_at = step
            break
        if (step + 1) % log_every == 0 or step == config.steps - 1:
            curve.append({
                "step": step + 1, "loss": float(loss.data),
                "mse": float(mse.data), "geodesic": float(geo.data),
                "kl": float(kl.data), "lr": lr_t, "beta": beta_t,
            })
            if progress is not None:
                progress(curve[-1])
            snapshot = {k: v.data.copy() for k, v in params.items()}
            snap_step = step + 1

    val_seqs = [seqs[i] for i in val_idx] if n_val else seqs[: min(4, n)]
    metrics = {
        "recon_joint_error_m": mean_joint_position_error(vae, val_seqs),
        "latent_roundtrip_rel_l2": latent_roundtrip_rel_l2(vae, val_seqs),
        "final_loss": curve[-1]["loss"] if curve else None,
        "aborted_at": aborted_at,
        "snapshot_step": snap_step,
        "n_train": int(len(train_idx)),
        "n_val": int(len(val_idx)),
    }
    return vae, metrics, curve
