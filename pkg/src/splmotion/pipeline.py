"""End-to-end steps shared by the CLI and the acceptance suite: synth, train, predict, eval."""

import csv
import hashlib
import io
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from .config import parse_config_text
from .data import (
    NormStats,
    extract_windows,
    fit_norm,
    random_synth_config,
    read_manifest,
    read_motn,
    split_dataset,
    synth_generate,
    write_manifest,
    write_motn,
)
from .gradcore import ParameterStore, load_checkpoint, save_checkpoint
from .metrics import EvalPairs, build_report, default_pck_grid
from .models import ModelConfig, MotionModel, zero_velocity_predict
from .report import PCK_FILE, PCK_SVG, REPORT_FILE, grid_text, write_pck_csv, write_pck_svg, write_report_csv
from .skeleton import PoseSequence, load_skeleton, parse_skeleton
from .training import train

log = logging.getLogger(__name__)

CONFIG_FILE = "config.txt"
CHECKPOINT_FILE = "checkpoint.bin"
TRAIN_LOG_FILE = "train_log.csv"
VERSION_FILE = "VERSION"


class PipelineError(RuntimeError):
    pass


class SkeletonMismatchError(PipelineError):
    pass


def write_run_metadata(out_dir, cfg):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / CONFIG_FILE).write_text(cfg.to_text())
    (out_dir / VERSION_FILE).write_text(f"splmotion {__version__}\n")


def config_hash(cfg):
    return hashlib.sha256(cfg.to_text().encode()).hexdigest()[:16]


# ---------------------------------------------------------------- synth


def synthesize(cfg, out_dir):
    """Generate the synthetic motion set as MOTN files plus a manifest."""
    out_dir = Path(out_dir)
    skel = load_skeleton(cfg.skeleton)
    synth = random_synth_config(
        skel,
        seed=cfg.seed,
        base_freq=(cfg.synth_freq_min, cfg.synth_freq_max),
        amp_range=(cfg.synth_amp_min, cfg.synth_amp_max),
        fps=cfg.fps,
        num_frames=int(round(cfg.synth_seconds * cfg.fps)),
        num_sequences=cfg.synth_sequences,
        noise=cfg.synth_noise,
        rep=cfg.representation,
        tempo_jitter=cfg.synth_tempo_jitter,
        amp_jitter=cfg.synth_amp_jitter,
        random_phase=True,
    )
    seqs = synth_generate(synth)
    write_run_metadata(out_dir, cfg)
    (out_dir / "skeleton.skel").write_text(skel.to_text())
    names = []
    for i, seq in enumerate(seqs):
        name = f"seq_{i:04d}.motn"
        write_motn(out_dir / name, seq)
        names.append(name)
    write_manifest(out_dir, names)
    return [out_dir / n for n in names]


# ---------------------------------------------------------------- datasets


@dataclass
class Dataset:
    skel: object
    splits: dict
    train: np.ndarray  # (W, S+P, N) raw windows
    valid: np.ndarray
    test: np.ndarray
    norm: NormStats
    fps: float


def _load_sequences(paths, rep, num_joints):
    seqs = []
    for p in paths:
        seq = read_motn(p)
        if seq.rep != rep:
            raise PipelineError(f"{p}: representation {seq.rep!r} does not match the configured {rep!r}")
        if seq.num_joints != num_joints:
            raise SkeletonMismatchError(f"{p}: {seq.num_joints} joints, skeleton has {num_joints}")
        seqs.append(seq)
    return seqs


def _windows(seqs, spec, N):
    out = [np.concatenate([s, t]) for q in seqs for s, t in extract_windows(q.flat(), spec)]
    if not out:
        return np.zeros((0, spec.seed + spec.target, N))
    return np.stack(out)


def load_dataset(cfg, data_dir):
    skel = load_skeleton(cfg.skeleton)
    files = read_manifest(data_dir)
    splits = split_dataset(files, cfg.ratios, cfg.seed)
    seqs = {k: _load_sequences(v, cfg.representation, skel.num_joints) for k, v in splits.items()}
    all_seqs = [s for v in seqs.values() for s in v]
    fps = all_seqs[0].fps
    N = all_seqs[0].flat().shape[1]
    train_w = _windows(seqs["train"], cfg.train_windows(), N)
    valid_w = _windows(seqs["valid"], cfg.test_windows(), N)
    test_w = _windows(seqs["test"], cfg.test_windows(), N)
    norm_source = [q.flat() for q in seqs["train"]] or [q.flat() for q in all_seqs]
    log.info(
        "windows: train %d, valid %d, test %d (test stride %d)",
        len(train_w),
        len(valid_w),
        len(test_w),
        cfg.test_stride,
    )
    return Dataset(skel, splits, train_w, valid_w, test_w, fit_norm(norm_source), fps)


# ---------------------------------------------------------------- models & checkpoints


def build_model(cfg, skel, norm):
    return MotionModel(cfg.model_config(), skel, norm, ParameterStore(cfg.seed))


def save_model(path, model, cfg, fps):
    tensors = dict(model.store.state_dict())
    tensors["norm/mean"] = model.norm.mean
    tensors["norm/std"] = model.norm.std
    header = {
        "tool": f"splmotion {__version__}",
        "model": model.cfg.to_dict(),
        "representation": model.cfg.rep,
        "skeleton": model.skel.to_text(),
        "skeleton_hash": model.skel.hash(),
        "fps": fps,
        "experiment": cfg.to_text(),
    }
    save_checkpoint(path, tensors, header)


def load_model(path):
    header, tensors = load_checkpoint(path)
    skel = parse_skeleton(header["skeleton"])
    if skel.hash() != header["skeleton_hash"]:
        raise SkeletonMismatchError(f"{path}: embedded skeleton does not match its recorded hash")
    norm = NormStats(tensors.pop("norm/mean"), tensors.pop("norm/std"))
    mcfg = ModelConfig.from_dict(header["model"])
    model = MotionModel(mcfg, skel, norm, ParameterStore(0))
    model.store.load_state_dict(tensors)
    cfg = parse_config_text(header["experiment"])
    return model, cfg, header


def write_train_log(path, history):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["step", "loss", "lr", "val_joint_angle"])
    for e in history:
        val = e.get("val_joint_angle")
        w.writerow([e["step"], repr(e["loss"]), repr(e["lr"]), "" if val is None else repr(val)])
    Path(path).write_text(buf.getvalue())


def run_training(cfg, data_dir, out_dir, dataset=None, progress=None):
    if cfg.model == "zero_velocity":
        raise PipelineError("the zero-velocity baseline has nothing to train")
    ds = dataset or load_dataset(cfg, data_dir)
    if len(ds.train) == 0:
        raise PipelineError("no training windows: sequences are shorter than seed + target frames")
    model = build_model(cfg, ds.skel, ds.norm)
    history = train(model, ds.train, ds.valid, cfg.seed_frames, cfg.train_config(), ds.fps, progress)
    out_dir = Path(out_dir)
    write_run_metadata(out_dir, cfg)
    save_model(out_dir / CHECKPOINT_FILE, model, cfg, ds.fps)
    write_train_log(out_dir / TRAIN_LOG_FILE, history)
    return model, history


# ---------------------------------------------------------------- prediction & evaluation


def predict_windows(model, seeds, horizon, chunk=256):
    """Autoregressive predictions for many seeds, in fixed chunks of the window order."""
    if model is None:
        return zero_velocity_predict(seeds, horizon)
    parts = [model.predict(seeds[i : i + chunk], horizon) for i in range(0, len(seeds), chunk)]
    return np.concatenate(parts) if parts else np.zeros((0, horizon, seeds.shape[-1]))


def predict_sequence(model, seed_seq, horizon):
    if seed_seq.rep != model.cfg.rep:
        raise PipelineError(f"seed is in {seed_seq.rep!r}, model was trained on {model.cfg.rep!r}")
    if seed_seq.num_joints != model.skel.num_joints:
        raise SkeletonMismatchError(f"seed has {seed_seq.num_joints} joints, model skeleton {model.skel.num_joints}")
    out = model.predict(seed_seq.flat(), horizon)
    return PoseSequence(out.reshape(horizon, seed_seq.num_joints, -1), seed_seq.fps, seed_seq.rep)


def evaluate(cfg, dataset, model=None):
    """Reports in "at" and "until" mode over the test windows; ``model=None`` is zero-velocity."""
    ds = dataset
    if len(ds.test) == 0:
        raise PipelineError("no test windows to evaluate")
    S, P = cfg.seed_frames, cfg.target_frames
    seeds, targets = ds.test[:, :S], ds.test[:, S:]
    preds = predict_windows(model, seeds, P)
    K = ds.skel.num_joints
    pairs = EvalPairs(preds.reshape(len(preds), P, K, -1), targets.reshape(len(targets), P, K, -1), cfg.representation)
    grid = default_pck_grid(cfg.pck_max, cfg.pck_count)
    return [
        build_report(pairs, ds.skel, ds.fps, cfg.horizons_ms, mode, grid, cfg.euler_exclude_root)
        for mode in ("at", "until")
    ]


def run_evaluation(cfg, data_dir, out_dir, model=None, dataset=None, label=None):
    ds = dataset or load_dataset(cfg, data_dir)
    if model is not None and model.skel.hash() != ds.skel.hash():
        raise SkeletonMismatchError("checkpoint skeleton differs from the dataset skeleton")
    reports = evaluate(cfg, ds, model)
    out_dir = Path(out_dir)
    write_run_metadata(out_dir, cfg)
    label = label or ("zero_velocity" if model is None else cfg.label)
    meta = {
        "tool": f"splmotion {__version__}",
        "model": label,
        "skeleton_hash": ds.skel.hash(),
        "pck_grid": grid_text(reports[0].grid),
        "fps": repr(float(ds.fps)),
        "ms_to_frames": "round-half-up",
        "config_hash": config_hash(cfg),
        "test_windows": str(len(ds.test)),
        "euler_exclude_root": str(cfg.euler_exclude_root).lower(),
    }
    write_report_csv(out_dir / REPORT_FILE, reports, meta)
    write_pck_csv(out_dir / PCK_FILE, reports)
    write_pck_svg(out_dir / PCK_SVG, reports[1], title=f"PCK ({label}, until)")
    return reports
