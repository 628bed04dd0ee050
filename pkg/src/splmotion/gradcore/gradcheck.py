"""Central finite-difference check of reverse-mode gradients."""

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tape, backward


class GradCheckPrecondition(ValueError):
    pass


@dataclass
class GradCheckReport:
    errors: dict = field(default_factory=dict)
    tol: float = 1e-4

    @property
    def max_error(self):
        return max(self.errors.values(), default=0.0)

    @property
    def passed(self):
        return {n: e < self.tol for n, e in self.errors.items()}

    @property
    def ok(self):
        return all(self.passed.values())


def relative_error(analytic, numeric, floor=1e-8):
    """max |a - n| over the tensor, relative to the larger of the two max magnitudes."""
    scale = max(np.abs(analytic).max(initial=0.0), np.abs(numeric).max(initial=0.0), floor)
    return float(np.abs(analytic - numeric).max(initial=0.0) / scale)


def grad_check(fn, store, eps=1e-5, tol=1e-4, names=None, uses_dropout=False):
    """Compare ``backward`` against central differences for every parameter in ``store``.

    ``fn`` builds the scalar loss from the current parameter values and must be
    deterministic; pass ``uses_dropout=True`` and the check refuses to run.
    """
    if uses_dropout:
        raise GradCheckPrecondition("grad_check requires a deterministic function; disable dropout")
    with Tape() as tape:
        loss = fn()
    grads = store.collect(backward(tape, loss))

    report = GradCheckReport(tol=tol)
    for name in names or list(store):
        p = store[name]
        numeric = np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + eps
            up = float(fn().data)
            flat[i] = orig - eps
            down = float(fn().data)
            flat[i] = orig
            numeric.reshape(-1)[i] = (up - down) / (2.0 * eps)
        report.errors[name] = relative_error(grads[name], numeric)
    return report
