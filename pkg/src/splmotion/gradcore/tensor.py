"""Tape-based reverse-mode differentiation over dense float64 arrays.

Operations are recorded on the innermost active :class:`Tape` when at least
one input requires a gradient. Outside a tape everything runs as plain
numpy, which is what inference uses.
"""

import numpy as np

_TAPES = []


class ShapeError(ValueError):
    pass


class Tensor:
    __slots__ = ("data", "requires_grad", "name", "__weakref__")

    def __init__(self, data, requires_grad=False, name=None):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    def numpy(self):
        return self.data

    def __repr__(self):
        label = f" {self.name!r}" if self.name else ""
        return f"Tensor{label}(shape={self.data.shape})"


class Tape:
    """Ordered record of primitive operations for reverse traversal."""

    def __init__(self):
        self.records = []

    def __enter__(self):
        _TAPES.append(self)
        return self

    def __exit__(self, *exc):
        _TAPES.pop()
        return False

    def __len__(self):
        return len(self.records)


def active_tape():
    return _TAPES[-1] if _TAPES else None


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def _emit(op, data, inputs, backward_fn):
    out = Tensor(data)
    tape = active_tape()
    if tape is not None and any(t.requires_grad for t in inputs):
        out.requires_grad = True
        tape.records.append((op, out, inputs, backward_fn))
    return out


def _check(op, cond, *shapes):
    if not cond:
        raise ShapeError(f"{op}: incompatible shapes {', '.join(str(s) for s in shapes)}")


# ---------------------------------------------------------------- primitives


def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check("matmul", a.data.ndim == 2 and b.data.ndim == 2 and a.shape[1] == b.shape[0], a.shape, b.shape)
    ad, bd = a.data, b.data

    def backward(g):
        return (g @ bd.T if a.requires_grad else None, ad.T @ g if b.requires_grad else None)

    return _emit("matmul", ad @ bd, (a, b), backward)


def add(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check("add", a.shape == b.shape, a.shape, b.shape)
    return _emit("add", a.data + b.data, (a, b), lambda g: (g, g))


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check("sub", a.shape == b.shape, a.shape, b.shape)
    return _emit("sub", a.data - b.data, (a, b), lambda g: (g, -g))


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    _check("mul", a.shape == b.shape, a.shape, b.shape)
    ad, bd = a.data, b.data
    return _emit("mul", ad * bd, (a, b), lambda g: (g * bd, g * ad))


def scale(a, c):
    a = as_tensor(a)
    c = float(c)
    return _emit("scale", a.data * c, (a,), lambda g: (g * c,))


def bias_add(x, b):
    """Row-wise bias: x of shape (B, F) plus b of shape (F,)."""
    x, b = as_tensor(x), as_tensor(b)
    _check("bias_add", x.data.ndim == 2 and b.shape == (x.shape[1],), x.shape, b.shape)
    return _emit("bias_add", x.data + b.data, (x, b), lambda g: (g, g.sum(axis=0)))


def concat(tensors, axis=-1):
    tensors = [as_tensor(t) for t in tensors]
    if len(tensors) == 1:
        return tensors[0]
    nd = tensors[0].data.ndim
    ax = axis % nd
    for t in tensors[1:]:
        same = t.data.ndim == nd and all(t.shape[i] == tensors[0].shape[i] for i in range(nd) if i != ax)
        _check("concat", same, *(u.shape for u in tensors))
    sizes = [t.shape[ax] for t in tensors]
    bounds = np.cumsum([0] + sizes)

    def backward(g):
        index = [slice(None)] * nd
        out = []
        for i, t in enumerate(tensors):
            if t.requires_grad:
                index[ax] = slice(bounds[i], bounds[i + 1])
                out.append(g[tuple(index)])
            else:
                out.append(None)
        return out

    return _emit("concat", np.concatenate([t.data for t in tensors], axis=ax), tuple(tensors), backward)


def slice_last(x, start, stop):
    x = as_tensor(x)
    _check("slice", 0 <= start < stop <= x.shape[-1], x.shape, (start, stop))
    shape = x.shape

    def backward(g):
        full = np.zeros(shape)
        full[..., start:stop] = g
        return (full,)

    return _emit("slice", x.data[..., start:stop], (x,), backward)


def relu(x):
    x = as_tensor(x)
    mask = x.data > 0.0
    return _emit("relu", np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def sigmoid(x):
    x = as_tensor(x)
    y = 0.5 * (np.tanh(0.5 * x.data) + 1.0)
    return _emit("sigmoid", y, (x,), lambda g: (g * y * (1.0 - y),))


def tanh(x):
    x = as_tensor(x)
    y = np.tanh(x.data)
    return _emit("tanh", y, (x,), lambda g: (g * (1.0 - y * y),))


def dropout(x, rate, rng, training=True):
    """Inverted dropout: survivors are scaled by 1/(1 - rate) at train time."""
    x = as_tensor(x)
    if not training or rate == 0.0:
        return x
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return _emit("dropout", x.data * keep, (x,), lambda g: (g * keep,))


def square(x):
    x = as_tensor(x)
    xd = x.data
    return _emit("square", xd * xd, (x,), lambda g: (2.0 * xd * g,))


def sum(x):  # noqa: A001 - mirrors the numpy name
    x = as_tensor(x)
    shape = x.shape
    return _emit("sum", np.asarray(x.data.sum()), (x,), lambda g: (np.full(shape, float(g)),))


def mean(x):
    x = as_tensor(x)
    shape, n = x.shape, x.data.size
    return _emit("mean", np.asarray(x.data.mean()), (x,), lambda g: (np.full(shape, float(g) / n),))


# ---------------------------------------------------------------- reverse pass


def backward(tape, loss):
    """Reverse-mode sweep from a scalar ``loss``.

    Returns a dict mapping every gradient-requiring leaf reached to its
    gradient array. Leaves not reached are absent; :meth:`ParameterStore.collect`
    fills those with zeros.
    """
    if loss.data.size != 1:
        raise ShapeError(f"backward needs a scalar loss, got shape {loss.shape}")
    grads = {id(loss): np.ones_like(loss.data)}
    leaves = {}
    produced = set()
    for _, out, _, _ in tape.records:
        produced.add(id(out))
    for _, out, inputs, fn in reversed(tape.records):
        g = grads.pop(id(out), None)
        if g is None:
            continue
        for inp, gi in zip(inputs, fn(g)):
            if gi is None or not inp.requires_grad:
                continue
            key = id(inp)
            if key in grads:
                grads[key] = grads[key] + gi
            else:
                grads[key] = gi
            if key not in produced:
                leaves[key] = inp
    return {leaves[k]: grads[k] for k in leaves if k in grads} if leaves else {}
