"""Flat ``key = value`` experiment configuration."""

import dataclasses
from dataclasses import dataclass, fields
from pathlib import Path

from . import __version__
from .data import WindowSpec
from .models import ModelConfig
from .training import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = ""
    skeleton: str = "smpl15"
    representation: str = "rotmat"
    # model
    model: str = "rnn"
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
    # training
    batch_size: int = 16
    learning_rate: float = 1e-3
    lr_decay: float = 0.98
    lr_decay_steps: int = 1000
    max_steps: int = 3000
    patience: int = 10
    val_interval: int = 100
    seed: int = 42
    # windows and splits
    seed_frames: int = 120
    target_frames: int = 24
    train_stride: int = 24
    test_stride: int = 24
    split_train: float = 0.9
    split_valid: float = 0.05
    split_test: float = 0.05
    # evaluation
    horizons_ms: tuple = (100, 200, 300, 400)
    pck_max: float = 0.4
    pck_count: int = 21
    euler_exclude_root: bool = False
    # synthetic data
    fps: float = 60.0
    synth_sequences: int = 67
    synth_seconds: float = 10.0
    synth_noise: float = 0.005
    synth_tempo_jitter: float = 0.2
    synth_amp_jitter: float = 0.2
    synth_freq_min: float = 0.6
    synth_freq_max: float = 1.4
    synth_amp_min: float = 0.1
    synth_amp_max: float = 0.5

    def model_config(self):
        return ModelConfig(
            family=self.model,
            head=self.head,
            cell=self.cell,
            cell_units=self.cell_units,
            input_proj=self.input_proj,
            input_dropout=self.input_dropout,
            dense_hidden=self.dense_hidden,
            residual=self.residual,
            hierarchy=self.hierarchy,
            feeding=self.feeding,
            spl_hidden=self.spl_hidden,
            hierarchy_seed=self.hierarchy_seed,
            seq2seq_feeding=self.seq2seq_feeding,
            loss=self.loss,
            rep=self.representation,
        )

    def train_config(self):
        return TrainConfig(
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            lr_decay=self.lr_decay,
            lr_decay_steps=self.lr_decay_steps,
            max_steps=self.max_steps,
            patience=self.patience,
            val_interval=self.val_interval,
            val_horizon_ms=float(max(self.horizons_ms)),
            seed=self.seed,
        )

    def train_windows(self):
        return WindowSpec(self.seed_frames, self.target_frames, self.train_stride)

    def test_windows(self):
        return WindowSpec(self.seed_frames, self.target_frames, self.test_stride)

    @property
    def ratios(self):
        return (self.split_train, self.split_valid, self.split_test)

    @property
    def label(self):
        return self.name or self.model_config().label()

    def replace(self, **changes):
        return parse_overrides(self, changes)

    def to_text(self):
        lines = [f"# splmotion {__version__} resolved configuration"]
        for f in fields(self):
            lines.append(f"{f.name} = {_format(getattr(self, f.name))}")
        return "\n".join(lines) + "\n"


_FIELDS = {f.name: f for f in fields(ExperimentConfig)}


def _format(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ",".join(_format(v) for v in value)
    return str(value)


def _coerce(key, raw, default):
    if isinstance(raw, str):
        raw = raw.strip()
    try:
        if isinstance(default, bool):
            if isinstance(raw, bool):
                return raw
            low = str(raw).lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            items = raw.split(",") if isinstance(raw, str) else raw
            return tuple(float(v) if "." in str(v) else int(v) for v in items if str(v).strip())
        return str(raw)
    except (TypeError, ValueError):
        raise ConfigError(f"bad value for {key!r}: {raw!r}") from None


def parse_overrides(base, mapping):
    changes = {}
    for key, raw in mapping.items():
        if key not in _FIELDS:
            raise ConfigError(f"unknown config key {key!r}")
        changes[key] = _coerce(key, raw, getattr(base, key))
    cfg = dataclasses.replace(base, **changes)
    validate(cfg)
    return cfg


def parse_config_text(text, base=None):
    mapping = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in mapping:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        mapping[key] = value
    return parse_overrides(base or ExperimentConfig(), mapping)


def load_config(path, overrides=None):
    cfg = parse_config_text(Path(path).read_text())
    if overrides:
        cfg = parse_overrides(cfg, overrides)
    return cfg


def validate(cfg):
    try:
        if cfg.model != "zero_velocity":
            cfg.model_config()
        cfg.train_config()
        cfg.train_windows()
        cfg.test_windows()
    except ValueError as e:
        raise ConfigError(str(e)) from None
    if abs(sum(cfg.ratios) - 1.0) > 1e-9:
        raise ConfigError(f"split ratios must sum to 1, got {cfg.ratios}")
    if cfg.pck_count < 2 or cfg.pck_max <= 0:
        raise ConfigError("PCK grid needs pck_count >= 2 and pck_max > 0")
    if not cfg.horizons_ms:
        raise ConfigError("at least one metric horizon is required")
