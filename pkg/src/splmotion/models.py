"""Recurrent base models (RNN and shared-cell Seq2seq), their heads, and the zero-velocity baseline."""

from dataclasses import asdict, dataclass, fields

import numpy as np

from .data import NormStats, apply_norm
from .gradcore import ParameterStore, Tensor, dense, make_cell
from .gradcore import ops as T
from .rotmath import REPRESENTATIONS
from .spl import FEEDINGS, HIERARCHIES, SplConfig, SplLayer, mean_squared_loss, per_joint_loss

FAMILIES = ("rnn", "seq2seq", "zero_velocity")
HEADS = ("spl", "dense")
SEQ2SEQ_FEEDING = ("groundtruth", "sampling", "dropout")


@dataclass(frozen=True)
class ModelConfig:
    family: str = "rnn"
    head: str = "spl"
    cell: str = "lstm"
    cell_units: int = 1024
    input_proj: int = 256
    input_dropout: float = 0.1
    dense_hidden: int = 960
    residual: bool = True
    hierarchy: str = "kinematic"
    feeding: str = "sparse"
    spl_hidden: int = 64
    hierarchy_seed: int = 0
    seq2seq_feeding: str = "groundtruth"
    loss: str = "per_joint"
    rep: str = "rotmat"

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"model family must be one of {FAMILIES}, got {self.family!r}")
        if self.head not in HEADS:
            raise ValueError(f"head must be one of {HEADS}, got {self.head!r}")
        if self.seq2seq_feeding not in SEQ2SEQ_FEEDING:
            raise ValueError(f"seq2seq feeding must be one of {SEQ2SEQ_FEEDING}")
        if self.loss not in ("per_joint", "mean"):
            raise ValueError(f"loss must be 'per_joint' or 'mean', got {self.loss!r}")
        if not 0.0 <= self.input_dropout < 1.0:
            raise ValueError("input dropout must lie in [0, 1)")
        if self.rep not in REPRESENTATIONS:
            raise ValueError(f"unknown representation {self.rep!r}")
        if self.hierarchy not in HIERARCHIES:
            raise ValueError(f"hierarchy must be one of {HIERARCHIES}, got {self.hierarchy!r}")
        if self.feeding not in FEEDINGS:
            raise ValueError(f"feeding must be one of {FEEDINGS}, got {self.feeding!r}")
        if min(self.cell_units, self.input_proj, self.dense_hidden, self.spl_hidden) < 1:
            raise ValueError("layer sizes must be positive")

    @property
    def joint_size(self):
        return REPRESENTATIONS[self.rep]

    @property
    def train_dropout(self):
        if self.family == "seq2seq" and self.seq2seq_feeding != "dropout":
            return 0.0
        return self.input_dropout

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})

    def label(self):
        if self.family == "zero_velocity":
            return "zero_velocity"
        name = self.family
        if self.family == "seq2seq":
            name += f"-{self.seq2seq_feeding}"
        if self.head == "spl":
            name += "-spl"
            if self.hierarchy != "kinematic":
                name += f"-{self.hierarchy}"
        elif self.loss == "per_joint":
            name += "-pjl"
        return name


class MotionModel:
    """Input dropout -> linear projection -> one recurrent cell -> SPL or dense head.

    Features are in normalised space. With ``residual`` the head predicts a
    delta that is added to the input frame.
    """

    def __init__(self, cfg, skel, norm, store=None, seed=0):
        if cfg.family == "zero_velocity":
            raise ValueError("the zero-velocity baseline has no parameters; use zero_velocity_predict")
        self.cfg, self.skel, self.norm = cfg, skel, norm
        self.store = store if store is not None else ParameterStore(seed)
        N = skel.num_joints * cfg.joint_size
        self.pose_dim = N
        self.proj = dense(self.store, "input_proj", N, cfg.input_proj)
        # encoder and decoder of seq2seq share this single cell
        self.cell = make_cell(cfg.cell, self.store, "cell", cfg.input_proj, cfg.cell_units)
        if cfg.head == "spl":
            spl_cfg = SplConfig(
                cfg.hierarchy, cfg.feeding, cfg.spl_hidden, cfg.joint_size, cfg.cell_units, cfg.hierarchy_seed
            )
            self.spl = SplLayer(skel, spl_cfg, self.store)
            self.head_fn = self.spl
        else:
            hidden = dense(self.store, "head/hidden", cfg.cell_units, cfg.dense_hidden)
            out = dense(self.store, "head/out", cfg.dense_hidden, N)
            self.head_fn = lambda h: out(T.relu(hidden(h)))

    def head(self, h):
        return self.head_fn(h)

    def zero_state(self, batch):
        return self.cell.zero_state(batch)

    def step(self, x, state, training=False, rng=None, dropout=None):
        """Advance the cell one frame; returns the context and the new state."""
        if x.shape[-1] != self.pose_dim:
            raise T.ShapeError(f"expected pose width {self.pose_dim}, got {x.shape[-1]}")
        rate = self.cfg.train_dropout if dropout is None else dropout
        x = T.dropout(x, rate, rng, training=training and rate > 0.0)
        return self.cell(self.proj(x), state)

    def combine(self, x_norm, delta):
        """Prediction in normalised space from the input frame and the head output."""
        return T.add(x_norm, delta) if self.cfg.residual else delta

    def to_raw(self, x_raw, delta):
        """Prediction in raw space. Residual deltas are scaled by the feature std only,
        so an all-zero delta reproduces the input frame bit for bit."""
        if self.cfg.residual:
            return x_raw + delta * self.norm.std
        return delta * self.norm.std + self.norm.mean

    def loss_fn(self, pred, target, batch):
        if self.cfg.loss == "per_joint":
            return T.scale(per_joint_loss(pred, target), 1.0 / batch)
        return mean_squared_loss(pred, target)

    # ------------------------------------------------------------ inference

    def predict(self, seed_raw, horizon, trace=None):
        """Warm the state on every seed frame, then roll out ``horizon`` frames.

        ``seed_raw`` is ``(B, S, N)`` or ``(S, N)`` in raw representation space.
        If ``trace`` is a list, the raw input fed at each roll-out step is appended.
        """
        if horizon < 1:
            raise ValueError("prediction horizon must be >= 1")
        seed_raw = np.asarray(seed_raw, dtype=np.float64)
        single = seed_raw.ndim == 2
        if single:
            seed_raw = seed_raw[None]
        B, S, N = seed_raw.shape
        if S < 1:
            raise ValueError("empty seed sequence")
        if N != self.pose_dim:
            raise ValueError(f"seed has pose width {N}, model expects {self.pose_dim}")
        state = self.zero_state(B)
        seed_norm = apply_norm(seed_raw, self.norm)
        for t in range(S - 1):
            _, state = self.step(Tensor(seed_norm[:, t]), state)
        x_raw, x_norm = seed_raw[:, -1], seed_norm[:, -1]
        out = np.empty((B, horizon, N))
        for i in range(horizon):
            if trace is not None:
                trace.append(x_raw.copy())
            h, state = self.step(Tensor(x_norm), state)
            x_raw = self.to_raw(x_raw, self.head(h).data)
            x_norm = apply_norm(x_raw, self.norm)
            out[:, i] = x_raw
        return out[0] if single else out

    def teacher_forced(self, frames_raw):
        """One-step predictions of frames 2..L given ground-truth frames 1..L-1 (no dropout)."""
        frames_raw = np.asarray(frames_raw, dtype=np.float64)
        B, L, _ = frames_raw.shape
        norm = apply_norm(frames_raw, self.norm)
        state = self.zero_state(B)
        out = np.empty((B, L - 1, self.pose_dim))
        for t in range(L - 1):
            h, state = self.step(Tensor(norm[:, t]), state)
            out[:, t] = self.to_raw(frames_raw[:, t], self.head(h).data)
        return out


def zero_velocity_predict(seed, horizon):
    """Repeat the last seed frame ``horizon`` times. Works on (S, N) or (B, S, N)."""
    seed = np.asarray(seed)
    if horizon < 1:
        raise ValueError("prediction horizon must be >= 1")
    if seed.ndim not in (2, 3):
        raise ValueError(f"seed must be (S, N) or (B, S, N), got shape {seed.shape}")
    time_axis = seed.ndim - 2
    if seed.shape[time_axis] == 0:
        raise ValueError("empty seed sequence")
    last = np.take(seed, [-1], axis=time_axis)
    return np.repeat(last, horizon, axis=time_axis)


def identity_norm(dim):
    return NormStats(np.zeros(dim), np.ones(dim))
