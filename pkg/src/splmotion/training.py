"""Teacher-forced and seq2seq training with Adam, staircase decay and early stopping."""

import logging
import math
from dataclasses import dataclass

import numpy as np

from .data import apply_norm
from .gradcore import LrSchedule, NonFiniteGradientError, Tape, Tensor, adam_step, backward
from .gradcore import ops as T
from .metrics import EvalPairs, joint_angle_metric, ms_to_frames

log = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    def __init__(self, step, message):
        self.step = step
        super().__init__(f"step {step}: {message}")


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 16
    learning_rate: float = 1e-3
    lr_decay: float = 0.98
    lr_decay_steps: int = 1000
    max_steps: int = 3000
    patience: int = 10
    val_interval: int = 100
    val_horizon_ms: float = 400.0
    seed: int = 42

    def __post_init__(self):
        for name in ("batch_size", "max_steps", "patience", "val_interval", "lr_decay_steps"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")

    @property
    def schedule(self):
        return LrSchedule(self.learning_rate, self.lr_decay, self.lr_decay_steps)


def batches(num_windows, batch_size, rng):
    """Endless stream of index batches: reshuffled each epoch, last partial batch kept."""
    while True:
        perm = rng.permutation(num_windows)
        for i in range(0, num_windows, batch_size):
            yield perm[i : i + batch_size]


def rnn_loss(model, windows_raw, rng, training=True):
    """Teacher forcing over the whole window: inputs 1..L-1 predict frames 2..L."""
    B, L, N = windows_raw.shape
    x = apply_norm(windows_raw, model.norm)
    state = model.zero_state(B)
    contexts = []
    for t in range(L - 1):
        h, state = model.step(Tensor(x[:, t]), state, training=training, rng=rng)
        contexts.append(h)
    # time-major stacking so the head runs once over every step
    delta = model.head(T.concat(contexts, axis=0))
    inputs = np.swapaxes(x[:, :-1], 0, 1).reshape(-1, N)
    targets = np.swapaxes(x[:, 1:], 0, 1).reshape(-1, N)
    pred = model.combine(Tensor(inputs), delta)
    return model.loss_fn(pred, targets, B)


def seq2seq_loss(model, windows_raw, seed_len, rng, training=True, trace=None):
    """Encoder reads seed frames 1..S-1; the decoder predicts the P target frames.

    If ``trace`` is a list, one ``(decoder_input, decoder_output)`` pair of
    normalised arrays is appended per decoder step.
    """
    B, L, N = windows_raw.shape
    P = L - seed_len
    x = apply_norm(windows_raw, model.norm)
    state = model.zero_state(B)
    for t in range(seed_len - 1):
        _, state = model.step(Tensor(x[:, t]), state, training=training, rng=rng)
    targets = np.swapaxes(x[:, seed_len:], 0, 1).reshape(-1, N)

    inputs = []
    if model.cfg.seq2seq_feeding == "sampling":
        preds = []
        inp = Tensor(x[:, seed_len - 1])
        for i in range(P):
            inputs.append(inp.data)
            h, state = model.step(inp, state, training=training, rng=rng)
            inp = model.combine(inp, model.head(h))
            preds.append(inp)
        pred = T.concat(preds, axis=0)
    else:
        contexts = []
        for i in range(P):
            inp = x[:, seed_len - 1 + i]
            inputs.append(inp)
            h, state = model.step(Tensor(inp), state, training=training, rng=rng)
            contexts.append(h)
        pred = model.combine(Tensor(np.concatenate(inputs)), model.head(T.concat(contexts, axis=0)))
    if trace is not None:
        for i in range(P):
            trace.append((inputs[i].copy(), pred.data[i * B : (i + 1) * B].copy()))
    return model.loss_fn(pred, targets, B)


def validation_metric(model, seeds_raw, targets_raw, fps, horizon_ms=400.0):
    """Until-mode joint-angle metric of autoregressive predictions."""
    P = targets_raw.shape[1]
    preds = model.predict(seeds_raw, P)
    K, M = model.skel.num_joints, model.cfg.joint_size
    pairs = EvalPairs(preds.reshape(-1, P, K, M), targets_raw.reshape(-1, P, K, M), model.cfg.rep)
    t = max(1, min(P, ms_to_frames(horizon_ms, fps)))
    return joint_angle_metric(pairs, model.skel, t, "until")


def train(model, train_windows, valid_windows, seed_len, cfg, fps, progress=None):
    """Train in place; the best-validation parameters are restored at the end.

    ``train_windows`` / ``valid_windows`` are raw ``(W, S+P, N)`` arrays.
    Returns the training log: one dict per step with ``step``, ``loss``, ``lr``
    and, at validation steps, ``val_joint_angle``.
    """
    rng = np.random.default_rng(cfg.seed)
    schedule = cfg.schedule
    store = model.store
    stream = batches(len(train_windows), cfg.batch_size, rng)
    has_valid = valid_windows is not None and len(valid_windows) > 0
    if has_valid:
        v_seed, v_target = valid_windows[:, :seed_len], valid_windows[:, seed_len:]

    history = []
    best, best_state, stale = math.inf, None, 0
    for step in range(1, cfg.max_steps + 1):
        idx = next(stream)
        batch = train_windows[idx]
        with Tape() as tape:
            if model.cfg.family == "seq2seq":
                loss = seq2seq_loss(model, batch, seed_len, rng)
            else:
                loss = rnn_loss(model, batch, rng)
        value = float(loss.data)
        if not math.isfinite(value):
            raise TrainingError(step, "loss is not finite")
        lr = schedule.rate(store.step)
        try:
            adam_step(store, store.collect(backward(tape, loss)), schedule)
        except NonFiniteGradientError as e:
            raise TrainingError(step, str(e)) from e
        entry = {"step": step, "loss": value, "lr": lr}

        if has_valid and (step % cfg.val_interval == 0 or step == cfg.max_steps):
            metric = validation_metric(model, v_seed, v_target, fps, cfg.val_horizon_ms)
            entry["val_joint_angle"] = metric
            if metric < best:
                best, stale = metric, 0
                best_state = {n: a.copy() for n, a in store.state_dict().items()}
            else:
                stale += 1
            log.info("step %d loss %.5f val_joint_angle %.5f", step, value, metric)
        history.append(entry)
        if progress is not None:
            progress(entry)
        if has_valid and stale >= cfg.patience:
            log.info("early stop at step %d: no improvement for %d validations", step, stale)
            break

    if best_state is not None:
        store.load_state_dict(best_state)
    return history
