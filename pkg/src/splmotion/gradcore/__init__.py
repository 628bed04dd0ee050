from . import tensor as ops
from .gradcheck import GradCheckPrecondition, GradCheckReport, grad_check
from .layers import GRUCell, LSTMCell, dense, gru_step, lstm_step, make_cell
from .params import (
    CheckpointError,
    LrSchedule,
    NonFiniteGradientError,
    ParameterStore,
    adam_step,
    load_checkpoint,
    save_checkpoint,
)
from .tensor import ShapeError, Tape, Tensor, backward

__all__ = [
    "CheckpointError",
    "GRUCell",
    "GradCheckPrecondition",
    "GradCheckReport",
    "LSTMCell",
    "LrSchedule",
    "NonFiniteGradientError",
    "ParameterStore",
    "ShapeError",
    "Tape",
    "Tensor",
    "adam_step",
    "backward",
    "dense",
    "grad_check",
    "gru_step",
    "load_checkpoint",
    "lstm_step",
    "make_cell",
    "ops",
    "save_checkpoint",
]
