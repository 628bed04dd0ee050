"""Named parameters, Adam with staircase exponential decay, and checkpoint files."""

import json
import math
import struct
from dataclasses import dataclass

import numpy as np

from .tensor import Tensor

CHECKPOINT_MAGIC = b"SPLC"
CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    pass


class NonFiniteGradientError(FloatingPointError):
    def __init__(self, step, name):
        self.step = step
        self.name = name
        super().__init__(f"non-finite gradient for {name!r} at step {step}")


class ParameterStore:
    """Trainable tensors by unique name, plus Adam moment accumulators."""

    def __init__(self, seed=0):
        self.params = {}
        self.m = {}
        self.v = {}
        self.step = 0
        self.rng = np.random.default_rng(seed)

    def __contains__(self, name):
        return name in self.params

    def __getitem__(self, name):
        return self.params[name]

    def __iter__(self):
        return iter(self.params)

    def __len__(self):
        return len(self.params)

    def add(self, name, value):
        if name in self.params:
            raise KeyError(f"parameter {name!r} already exists")
        t = Tensor(np.array(value, dtype=np.float64), requires_grad=True, name=name)
        self.params[name] = t
        self.m[name] = np.zeros_like(t.data)
        self.v[name] = np.zeros_like(t.data)
        return t

    def get_or_create(self, name, shape, init="glorot"):
        if name in self.params:
            t = self.params[name]
            if t.shape != tuple(shape):
                raise ValueError(f"parameter {name!r} has shape {t.shape}, requested {tuple(shape)}")
            return t
        if init == "zeros":
            value = np.zeros(shape)
        elif init == "glorot":
            fan_in, fan_out = shape[0], shape[-1]
            limit = math.sqrt(6.0 / (fan_in + fan_out))
            value = self.rng.uniform(-limit, limit, size=shape)
        else:
            raise ValueError(f"unknown init {init!r}")
        return self.add(name, value)

    def collect(self, grads):
        """Per-name gradient arrays; parameters the loss never reached get zeros."""
        return {n: grads.get(t, np.zeros_like(t.data)) for n, t in self.params.items()}

    def state_dict(self):
        return {n: t.data for n, t in self.params.items()}

    def load_state_dict(self, state, strict=True):
        if strict and set(state) != set(self.params):
            missing = set(self.params) ^ set(state)
            raise CheckpointError(f"parameter names differ: {sorted(missing)}")
        for n, arr in state.items():
            if n in self.params:
                if self.params[n].shape != arr.shape:
                    raise CheckpointError(f"shape mismatch for {n!r}: {self.params[n].shape} vs {arr.shape}")
                self.params[n].data = np.array(arr, dtype=np.float64)

    def zero_(self):
        for t in self.params.values():
            t.data = np.zeros_like(t.data)


@dataclass(frozen=True)
class LrSchedule:
    base: float = 1e-3
    factor: float = 0.98
    interval: int = 1000

    def __post_init__(self):
        if not self.base > 0 or not 0 < self.factor <= 1 or self.interval < 1:
            raise ValueError(f"invalid learning-rate schedule {self}")

    def rate(self, step):
        return self.base * self.factor ** (step // self.interval)


ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


def adam_step(store, grads, schedule):
    """One Adam update in place. ``grads`` maps parameter names to arrays."""
    for name, g in grads.items():
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(store.step, name)
    lr = schedule.rate(store.step)
    t = store.step + 1
    c1 = 1.0 - ADAM_BETA1**t
    c2 = 1.0 - ADAM_BETA2**t
    for name, g in grads.items():
        p = store.params[name]
        if p.shape != g.shape:
            raise ValueError(f"gradient for {name!r} has shape {g.shape}, parameter {p.shape}")
        m = ADAM_BETA1 * store.m[name] + (1.0 - ADAM_BETA1) * g
        v = ADAM_BETA2 * store.v[name] + (1.0 - ADAM_BETA2) * g * g
        store.m[name], store.v[name] = m, v
        p.data = p.data - lr * (m / c1) / (np.sqrt(v / c2) + ADAM_EPS)
    store.step = t
    return store


# ---------------------------------------------------------------- checkpoint I/O
#
# layout (little-endian):
#   magic "SPLC" | u32 version | u32 header_len | header (UTF-8 JSON) | u32 count
#   per tensor: u32 name_len | name | u32 rank | u32 dims[rank] | f64 data[prod(dims)]


def save_checkpoint(path, tensors, header=None):
    blob = json.dumps(header or {}, sort_keys=True).encode()
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<II", CHECKPOINT_VERSION, len(blob)))
        f.write(blob)
        f.write(struct.pack("<I", len(tensors)))
        for name in sorted(tensors):
            arr = np.array(tensors[name], dtype="<f8", order="C")
            raw = name.encode()
            f.write(struct.pack("<I", len(raw)))
            f.write(raw)
            f.write(struct.pack("<I", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(arr.tobytes())


def load_checkpoint(path):
    """Returns ``(header_dict, {name: float64 array})``."""
    with open(path, "rb") as f:
        buf = f.read()
    pos = 0

    def take(n):
        nonlocal pos
        if pos + n > len(buf):
            raise CheckpointError(f"{path}: truncated checkpoint")
        chunk = buf[pos : pos + n]
        pos += n
        return chunk

    if take(4) != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    version, hlen = struct.unpack("<II", take(8))
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: unsupported checkpoint version {version}")
    header = json.loads(take(hlen).decode())
    (count,) = struct.unpack("<I", take(4))
    tensors = {}
    for _ in range(count):
        (nlen,) = struct.unpack("<I", take(4))
        name = take(nlen).decode()
        (rank,) = struct.unpack("<I", take(4))
        dims = struct.unpack(f"<{rank}I", take(4 * rank))
        n = int(np.prod(dims)) if rank else 1
        tensors[name] = np.frombuffer(take(8 * n), dtype="<f8").reshape(dims).astype(np.float64)
    if pos != len(buf):
        raise CheckpointError(f"{path}: trailing bytes after last tensor")
    return header, tensors
