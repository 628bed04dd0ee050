"""Euler, joint-angle, positional and PCK metrics with "at" / "until" aggregation."""

import math
from dataclasses import dataclass, field

import numpy as np

from .rotmath import REPRESENTATIONS, rotation_angle, rotmat_to_euler_zyx, to_rotmat
from .skeleton import forward_kinematics, local_to_global, normalize_bones

METRICS = ("euler", "joint_angle", "positional", "pck_auc")
MODES = ("at", "until")
DEFAULT_HORIZONS_MS = (100, 200, 300, 400)


class MetricError(ValueError):
    pass


def default_pck_grid(max_rho=0.4, count=21):
    return np.linspace(0.0, max_rho, count)


class EvalPairs:
    """Predicted and target pose windows, each ``(n, P, K, M)`` in one representation.

    Derived quantities (rotation matrices, global rotations, joint positions)
    are computed once and cached, so the four metrics share the work.
    """

    def __init__(self, pred, target, rep):
        pred = np.asarray(pred, dtype=np.float64)
        target = np.asarray(target, dtype=np.float64)
        if pred.shape != target.shape:
            raise MetricError(f"prediction {pred.shape} and target {target.shape} differ in shape")
        if pred.ndim != 4 or pred.shape[-1] != REPRESENTATIONS[rep]:
            raise MetricError(f"expected (n, P, K, {REPRESENTATIONS[rep]}) arrays, got {pred.shape}")
        self.pred, self.target, self.rep = pred, target, rep
        self._cache = {}

    @property
    def horizon(self):
        return self.pred.shape[1]

    def _cached(self, key, fn):
        if key not in self._cache:
            self._cache[key] = fn()
        return self._cache[key]

    def local_rotmats(self):
        return self._cached("local", lambda: (to_rotmat(self.pred, self.rep), to_rotmat(self.target, self.rep)))

    def global_rotmats(self, skel):
        def compute():
            p, t = self.local_rotmats()
            return local_to_global(skel, p), local_to_global(skel, t)

        return self._cached(("global", skel.hash()), compute)

    def joint_distances(self, skel):
        """Per-joint Euclidean distances (n, P, K) after forward kinematics."""

        def compute():
            (pl, tl), (pg, tg) = self.local_rotmats(), self.global_rotmats(skel)
            pp = forward_kinematics(skel, pl, pg)
            tp = forward_kinematics(skel, tl, tg)
            return np.linalg.norm(pp - tp, axis=-1)

        return self._cached(("dist", skel.hash()), compute)


def _check_t(pairs, t):
    if not 1 <= t <= pairs.horizon:
        raise MetricError(f"time step {t} outside the prediction horizon 1..{pairs.horizon}")


def _aggregate(per_frame, t, mode, reduce="sum"):
    """per_frame is (n, P); t is 1-based."""
    if mode == "at":
        per_pair = per_frame[:, t - 1]
    elif mode == "until":
        chunk = per_frame[:, :t]
        per_pair = chunk.sum(axis=1) if reduce == "sum" else chunk.mean(axis=1)
    else:
        raise MetricError(f"mode must be 'at' or 'until', got {mode!r}")
    return float(np.mean(per_pair))


def euler_per_frame(pairs, exclude_root=False):
    def compute():
        p, t = pairs.local_rotmats()
        diff = rotmat_to_euler_zyx(p) - rotmat_to_euler_zyx(t)
        if exclude_root:
            diff = diff[:, :, 1:]
        return np.sqrt(np.sum(diff**2, axis=(-2, -1)))

    return pairs._cached(("euler", exclude_root), compute)


def joint_angle_per_frame(pairs, skel):
    def compute():
        pg, tg = pairs.global_rotmats(skel)
        rel = np.einsum("...ij,...kj->...ik", pg, tg)
        return rotation_angle(rel).mean(axis=-1)

    return pairs._cached(("angle", skel.hash()), compute)


def _require_normalized(skel):
    if not skel.is_normalized():
        raise MetricError("positional metrics need a bone-normalised skeleton (see normalize_bones)")


def positional_per_frame(pairs, skel):
    _require_normalized(skel)
    return pairs.joint_distances(skel).mean(axis=-1)


def pck_per_frame(pairs, skel, rho):
    _require_normalized(skel)
    if rho < 0:
        raise MetricError(f"PCK threshold must be non-negative, got {rho}")
    return (pairs.joint_distances(skel) <= rho).mean(axis=-1)


def euler_metric(pairs, t, mode="until", exclude_root=False):
    _check_t(pairs, t)
    return _aggregate(euler_per_frame(pairs, exclude_root), t, mode)


def joint_angle_metric(pairs, skel, t, mode="until"):
    _check_t(pairs, t)
    return _aggregate(joint_angle_per_frame(pairs, skel), t, mode)


def positional_metric(pairs, skel, t, mode="until"):
    _check_t(pairs, t)
    return _aggregate(positional_per_frame(pairs, skel), t, mode)


def pck(pairs, skel, t, rho, mode="until"):
    """Fraction of joints within ``rho``; "until" averages (not sums) frames 1..t."""
    _check_t(pairs, t)
    return _aggregate(pck_per_frame(pairs, skel, rho), t, mode, reduce="mean")


def pck_curve(pairs, skel, t, grid, mode="until"):
    return np.array([pck(pairs, skel, t, rho, mode) for rho in grid])


def auc(grid, values):
    """Trapezoidal area under ``values`` over ``grid``, divided by the grid span."""
    grid = np.asarray(grid, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if grid.ndim != 1 or grid.size < 2 or np.any(np.diff(grid) <= 0):
        raise MetricError("PCK grid needs at least two strictly ascending thresholds")
    area = np.sum((values[1:] + values[:-1]) * np.diff(grid)) / 2.0
    # PCK values lie in [0, 1]; clipping only removes floating-point excess
    return float(np.clip(area / (grid[-1] - grid[0]), 0.0, 1.0))


def pck_auc(pairs, skel, t, grid, mode="until"):
    return auc(grid, pck_curve(pairs, skel, t, grid, mode))


def ms_to_frames(ms, fps):
    """Round half up: 400 ms at 60 fps is frame 24."""
    return int(math.floor(ms * fps / 1000.0 + 0.5))


@dataclass
class MetricReport:
    fps: float
    horizons_ms: list
    frames: list
    mode: str
    grid: np.ndarray
    values: dict = field(default_factory=dict)  # metric -> list aligned with horizons
    pck_curves: dict = field(default_factory=dict)  # horizon_ms -> array aligned with grid
    exclude_root_euler: bool = False

    def value(self, metric, horizon_ms):
        return self.values[metric][self.horizons_ms.index(horizon_ms)]


def build_report(pairs, skel, fps, horizons_ms=DEFAULT_HORIZONS_MS, mode="until", grid=None, exclude_root_euler=False):
    """All four metrics at each horizon. The skeleton is bone-normalised here."""
    skel = normalize_bones(skel)
    grid = default_pck_grid() if grid is None else np.asarray(grid, dtype=np.float64)
    frames = [ms_to_frames(ms, fps) for ms in horizons_ms]
    for ms, f in zip(horizons_ms, frames):
        if not 1 <= f <= pairs.horizon:
            raise MetricError(f"horizon {ms} ms = frame {f} is beyond the {pairs.horizon}-frame prediction")
    report = MetricReport(fps, list(horizons_ms), frames, mode, grid, exclude_root_euler=exclude_root_euler)
    report.values = {m: [] for m in METRICS}
    for ms, f in zip(horizons_ms, frames):
        curve = pck_curve(pairs, skel, f, grid, mode)
        report.values["euler"].append(euler_metric(pairs, f, mode, exclude_root_euler))
        report.values["joint_angle"].append(joint_angle_metric(pairs, skel, f, mode))
        report.values["positional"].append(positional_metric(pairs, skel, f, mode))
        report.values["pck_auc"].append(auc(grid, curve))
        report.pck_curves[ms] = curve
    return report
