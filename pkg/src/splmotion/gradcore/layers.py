"""Dense layers and gated recurrent cells built from tape primitives."""

import numpy as np

from . import tensor as T


def dense(store, name, in_dim, out_dim):
    """Return ``x -> x @ W + b`` with W, b created in ``store`` on first use."""
    w = store.get_or_create(f"{name}/w", (in_dim, out_dim))
    b = store.get_or_create(f"{name}/b", (out_dim,), init="zeros")

    def apply(x):
        if x.shape[-1] != in_dim:
            raise T.ShapeError(f"dense {name!r}: expected input width {in_dim}, got {x.shape[-1]}")
        return T.bias_add(T.matmul(x, w), b)

    return apply


class LSTMCell:
    """Single LSTM cell; gate blocks in the fused weight are ordered i, f, g, o."""

    def __init__(self, store, name, in_dim, units):
        self.in_dim, self.units = in_dim, units
        self.w = store.get_or_create(f"{name}/w", (in_dim + units, 4 * units))
        self.b = store.get_or_create(f"{name}/b", (4 * units,), init="zeros")

    def zero_state(self, batch):
        z = np.zeros((batch, self.units))
        return (T.Tensor(z), T.Tensor(z))

    def __call__(self, x, state):
        h, c = state
        if x.shape[-1] != self.in_dim or h.shape[-1] != self.units:
            raise T.ShapeError(f"lstm: expected ({self.in_dim}, {self.units}), got {x.shape}, {h.shape}")
        u = self.units
        z = T.bias_add(T.matmul(T.concat([x, h]), self.w), self.b)
        i = T.sigmoid(T.slice_last(z, 0, u))
        f = T.sigmoid(T.slice_last(z, u, 2 * u))
        g = T.tanh(T.slice_last(z, 2 * u, 3 * u))
        o = T.sigmoid(T.slice_last(z, 3 * u, 4 * u))
        c_new = T.add(T.mul(f, c), T.mul(i, g))
        h_new = T.mul(o, T.tanh(c_new))
        return h_new, (h_new, c_new)


class GRUCell:
    """GRU with the reset gate applied to the previous state before the candidate matmul."""

    def __init__(self, store, name, in_dim, units):
        self.in_dim, self.units = in_dim, units
        self.w_gates = store.get_or_create(f"{name}/w_gates", (in_dim + units, 2 * units))
        self.b_gates = store.get_or_create(f"{name}/b_gates", (2 * units,), init="zeros")
        self.w_cand = store.get_or_create(f"{name}/w_cand", (in_dim + units, units))
        self.b_cand = store.get_or_create(f"{name}/b_cand", (units,), init="zeros")

    def zero_state(self, batch):
        return (T.Tensor(np.zeros((batch, self.units))),)

    def __call__(self, x, state):
        (h,) = state
        if x.shape[-1] != self.in_dim or h.shape[-1] != self.units:
            raise T.ShapeError(f"gru: expected ({self.in_dim}, {self.units}), got {x.shape}, {h.shape}")
        u = self.units
        gates = T.sigmoid(T.bias_add(T.matmul(T.concat([x, h]), self.w_gates), self.b_gates))
        r = T.slice_last(gates, 0, u)
        z = T.slice_last(gates, u, 2 * u)
        n = T.tanh(T.bias_add(T.matmul(T.concat([x, T.mul(r, h)]), self.w_cand), self.b_cand))
        # h' = (1 - z) * n + z * h  ==  n + z * (h - n)
        h_new = T.add(n, T.mul(z, T.sub(h, n)))
        return h_new, (h_new,)


def make_cell(kind, store, name, in_dim, units):
    if kind == "lstm":
        return LSTMCell(store, name, in_dim, units)
    if kind == "gru":
        return GRUCell(store, name, in_dim, units)
    raise ValueError(f"unknown cell type {kind!r}")


def lstm_step(store, x, h, c, name="lstm"):
    cell = LSTMCell(store, name, x.shape[-1], h.shape[-1])
    h_new, (_, c_new) = cell(x, (h, c))
    return h_new, c_new


def gru_step(store, x, h, name="gru"):
    cell = GRUCell(store, name, x.shape[-1], h.shape[-1])
    h_new, _ = cell(x, (h,))
    return h_new
