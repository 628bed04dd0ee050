"""Motion files, windowing, dataset splits, feature normalisation and synthetic motion."""

import logging
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .rotmath import REP_CODES, REPRESENTATIONS, aa_to_quat, aa_to_rotmat, quat_seq_canonicalize
from .skeleton import PoseSequence

log = logging.getLogger(__name__)

# ---------------------------------------------------------------- MOTN files
#
# 16-byte header, little-endian:
#   "MOTN" | u8 version | u8 representation code | u16 joints | f32 fps | u32 frames
# followed by frames * joints * M float32 values.

MOTN_MAGIC = b"MOTN"
MOTN_VERSION = 1
_HEADER = struct.Struct("<4sBBHfI")
_CODE_TO_REP = {v: k for k, v in REP_CODES.items()}


class MotnError(ValueError):
    pass


class BadMagicError(MotnError):
    pass


class UnsupportedVersionError(MotnError):
    pass


class UnknownRepresentationError(MotnError):
    pass


class TruncatedError(MotnError):
    pass


class MotnFormatError(MotnError):
    """Structurally invalid content: trailing bytes, empty dimensions, non-finite values."""


def encode_motn(seq):
    frames = np.asarray(seq.frames)
    T, K, _ = frames.shape
    header = _HEADER.pack(MOTN_MAGIC, MOTN_VERSION, REP_CODES[seq.rep], K, seq.fps, T)
    return header + frames.astype("<f4").tobytes()


def decode_motn(buf):
    if len(buf) < 4 or buf[:4] != MOTN_MAGIC:
        raise BadMagicError("missing MOTN magic")
    if len(buf) < _HEADER.size:
        raise TruncatedError(f"header needs {_HEADER.size} bytes, file has {len(buf)}")
    _, version, code, K, fps, T = _HEADER.unpack_from(buf)
    if version != MOTN_VERSION:
        raise UnsupportedVersionError(f"unsupported MOTN version {version}")
    if code not in _CODE_TO_REP:
        raise UnknownRepresentationError(f"unknown representation code {code}")
    rep = _CODE_TO_REP[code]
    if K == 0 or T == 0:
        raise MotnFormatError(f"empty motion: {T} frames x {K} joints")
    if not (math.isfinite(fps) and fps > 0):
        raise MotnFormatError(f"invalid frame rate {fps}")
    expected = T * K * REPRESENTATIONS[rep] * 4
    payload = len(buf) - _HEADER.size
    if payload < expected:
        raise TruncatedError(f"payload has {payload} bytes, header promises {expected}")
    if payload > expected:
        raise MotnFormatError(f"{payload - expected} trailing bytes after payload")
    data = np.frombuffer(buf, dtype="<f4", offset=_HEADER.size).reshape(T, K, REPRESENTATIONS[rep])
    if not np.all(np.isfinite(data)):
        raise MotnFormatError("payload contains non-finite values")
    return PoseSequence(data.astype(np.float64), float(fps), rep)


def write_motn(path, seq):
    Path(path).write_bytes(encode_motn(seq))


def read_motn(path):
    return decode_motn(Path(path).read_bytes())


def read_manifest(data_dir):
    data_dir = Path(data_dir)
    lines = (data_dir / "manifest.txt").read_text().splitlines()
    return [data_dir / ln.strip() for ln in lines if ln.strip() and not ln.startswith("#")]


def write_manifest(data_dir, rel_paths):
    Path(data_dir, "manifest.txt").write_text("".join(f"{p}\n" for p in rel_paths))


# ---------------------------------------------------------------- windows & splits


@dataclass(frozen=True)
class WindowSpec:
    seed: int = 120
    target: int = 24
    stride: int = 24

    def __post_init__(self):
        if min(self.seed, self.target, self.stride) < 1:
            raise ValueError(f"window sizes must be >= 1: {self}")


def window_starts(num_frames, spec):
    span = spec.seed + spec.target
    if num_frames < span:
        return []
    return list(range(0, num_frames - span + 1, spec.stride))


def extract_windows(frames, spec):
    """Slide a seed+target window over axis 0; returns ``[(seed, target), ...]``."""
    frames = np.asarray(frames)
    starts = window_starts(frames.shape[0], spec)
    if not starts:
        log.info("sequence of %d frames is shorter than one %d-frame window", frames.shape[0], spec.seed + spec.target)
    out = []
    for s in starts:
        out.append((frames[s : s + spec.seed], frames[s + spec.seed : s + spec.seed + spec.target]))
    return out


def split_dataset(files, ratios=(0.9, 0.05, 0.05), seed=0):
    """Seeded shuffle of the (sorted) file list, sliced into train/valid/test."""
    if not files:
        raise ValueError("cannot split an empty file list")
    if len(ratios) != 3 or abs(sum(ratios) - 1.0) > 1e-9 or min(ratios) < 0:
        raise ValueError(f"split ratios must be three non-negative numbers summing to 1, got {ratios}")
    ordered = sorted(files, key=str)
    perm = np.random.default_rng(seed).permutation(len(ordered))
    shuffled = [ordered[i] for i in perm]
    n = len(shuffled)
    n_train = min(n, round(ratios[0] * n))
    n_valid = min(n - n_train, round(ratios[1] * n))
    if n < 3:
        log.warning("only %d file(s); validation and test splits will be empty or tiny", n)
    return {
        "train": shuffled[:n_train],
        "valid": shuffled[n_train : n_train + n_valid],
        "test": shuffled[n_train + n_valid :],
    }


# ---------------------------------------------------------------- normalisation


@dataclass
class NormStats:
    mean: np.ndarray
    std: np.ndarray
    floor: float = 1e-8


def fit_norm(arrays, floor=1e-8):
    """Per-feature statistics over the last axis of every array in ``arrays``."""
    flat = np.concatenate([np.asarray(a, dtype=np.float64).reshape(-1, np.shape(a)[-1]) for a in arrays])
    mean = flat.mean(axis=0)
    std = np.maximum(flat.std(axis=0), floor)
    return NormStats(mean, std, floor)


def apply_norm(x, stats):
    return (np.asarray(x, dtype=np.float64) - stats.mean) / stats.std


def invert_norm(x, stats):
    return np.asarray(x, dtype=np.float64) * stats.std + stats.mean


# ---------------------------------------------------------------- synthetic motion


@dataclass
class JointMotion:
    """Oscillation of one joint about a fixed unit axis: sum of (amplitude, freq_hz, phase) terms."""

    axis: tuple
    harmonics: list


@dataclass
class SynthConfig:
    joints: list
    fps: float = 60.0
    num_frames: int = 600
    num_sequences: int = 1
    noise: float = 0.0
    seed: int = 0
    rep: str = "rotmat"
    tempo_jitter: float = 0.0  # per-sequence frequency scale drawn from 1 +- jitter
    amp_jitter: float = 0.0  # per-sequence, per-joint amplitude scale drawn from 1 +- jitter
    random_phase: bool = False  # per-sequence phase offset shared by all joints
    max_amplitude: float = field(default=math.pi / 2, repr=False)

    def validate(self):
        for k, jm in enumerate(self.joints):
            peak = sum(abs(a) for a, _, _ in jm.harmonics) * (1.0 + self.amp_jitter)
            if peak > self.max_amplitude + 1e-12:
                raise ValueError(f"joint {k}: peak amplitude {peak:.3f} exceeds pi/2")
            if np.linalg.norm(jm.axis) == 0:
                raise ValueError(f"joint {k}: zero rotation axis")
        if self.rep not in REPRESENTATIONS:
            raise ValueError(f"unknown representation {self.rep!r}")


def random_synth_config(skel, seed=0, base_freq=(0.6, 1.4), amp_range=(0.1, 0.5), **kwargs):
    """Draw per-joint axes, amplitudes and phases; all joints share one fundamental frequency."""
    rng = np.random.default_rng(seed)
    f0 = rng.uniform(*base_freq)
    joints = []
    for _ in range(skel.num_joints):
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        a1 = rng.uniform(*amp_range)
        a2 = rng.uniform(0.0, 0.4) * a1
        joints.append(
            JointMotion(
                tuple(axis),
                [(a1, f0, rng.uniform(0, 2 * np.pi)), (a2, 2 * f0, rng.uniform(0, 2 * np.pi))],
            )
        )
    return SynthConfig(joints=joints, seed=seed, **kwargs)


def synth_angles(cfg, rng):
    """Angle-axis frames (T, K, 3) for one sequence."""
    t = np.arange(cfg.num_frames) / cfg.fps
    tempo = 1.0 + (rng.uniform(-cfg.tempo_jitter, cfg.tempo_jitter) if cfg.tempo_jitter else 0.0)
    shift = rng.uniform(0, 2 * np.pi) if cfg.random_phase else 0.0
    out = np.zeros((cfg.num_frames, len(cfg.joints), 3))
    for k, jm in enumerate(cfg.joints):
        axis = np.asarray(jm.axis, dtype=np.float64)
        axis = axis / np.linalg.norm(axis)
        gain = 1.0 + (rng.uniform(-cfg.amp_jitter, cfg.amp_jitter) if cfg.amp_jitter else 0.0)
        angle = np.zeros_like(t)
        for amp, freq, phase in jm.harmonics:
            angle += gain * amp * np.sin(2 * np.pi * freq * tempo * t + phase + shift)
        out[:, k, :] = angle[:, None] * axis
    if cfg.noise:
        out += rng.normal(scale=cfg.noise, size=out.shape)
    return out


def synth_generate(cfg):
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    seqs = []
    for _ in range(cfg.num_sequences):
        aa = synth_angles(cfg, rng)
        if cfg.rep == "aa":
            frames = aa
        elif cfg.rep == "quat":
            frames = quat_seq_canonicalize(aa_to_quat(aa))
        else:
            frames = aa_to_rotmat(aa).reshape(aa.shape[:-1] + (9,))
        seqs.append(PoseSequence(frames, cfg.fps, cfg.rep))
    return seqs
