"""Kinematic trees: parsing, traversal, forward kinematics and bone normalisation.

Skeleton text format, one joint per line::

    name  parent_name|root  offset_x offset_y offset_z  [unit]

``#`` starts a comment. Exactly one line carries the ``unit`` marker; that
joint's offset is the bone used to normalise lengths.
"""

import hashlib
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .rotmath import REPRESENTATIONS, to_rotmat


class SkeletonError(ValueError):
    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)


@dataclass(frozen=True)
class Joint:
    name: str
    parent: int | None
    offset: tuple[float, float, float]


@dataclass(frozen=True)
class SkeletonSpec:
    joints: tuple[Joint, ...]
    unit_bone: int

    def __post_init__(self):
        roots = [i for i, j in enumerate(self.joints) if j.parent is None]
        if len(roots) != 1:
            raise SkeletonError(f"expected exactly one root, found {len(roots)}")
        for i, j in enumerate(self.joints):
            if j.parent is not None and not 0 <= j.parent < i:
                raise SkeletonError(f"joint {j.name!r} is not topologically sorted")
        if np.linalg.norm(self.joints[self.unit_bone].offset) <= 0.0:
            raise SkeletonError("unit bone has zero length")

    @property
    def num_joints(self):
        return len(self.joints)

    @property
    def names(self):
        return [j.name for j in self.joints]

    @property
    def parents(self):
        return [j.parent for j in self.joints]

    @property
    def offsets(self):
        return np.array([j.offset for j in self.joints], dtype=np.float64)

    def children(self, k):
        return [i for i, j in enumerate(self.joints) if j.parent == k]

    def ancestors(self, k):
        """Ancestors of joint k ordered root first."""
        out = []
        p = self.joints[k].parent
        while p is not None:
            out.append(p)
            p = self.joints[p].parent
        return out[::-1]

    def depth(self, k):
        return len(self.ancestors(k))

    def descendants(self, k):
        out = []
        for i in range(k + 1, self.num_joints):
            if k in self.ancestors(i):
                out.append(i)
        return out

    def is_normalized(self, tol=1e-9):
        return abs(np.linalg.norm(self.joints[self.unit_bone].offset) - 1.0) <= tol

    def to_text(self):
        lines = []
        for i, j in enumerate(self.joints):
            parent = "root" if j.parent is None else self.joints[j.parent].name
            off = " ".join(repr(float(v)) for v in j.offset)
            mark = " unit" if i == self.unit_bone else ""
            lines.append(f"{j.name} {parent} {off}{mark}")
        return "\n".join(lines) + "\n"

    def hash(self):
        return hashlib.sha256(self.to_text().encode()).hexdigest()[:16]


def parse_skeleton(text):
    entries = []
    seen = {}
    unit_name = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) not in (5, 6):
            raise SkeletonError(f"expected 'name parent x y z [unit]', got {raw.strip()!r}", lineno)
        name, parent = parts[0], parts[1]
        if name == "root":
            raise SkeletonError("'root' is reserved for the parent column", lineno)
        if name in seen:
            raise SkeletonError(f"duplicate joint name {name!r}", lineno)
        try:
            offset = tuple(float(v) for v in parts[2:5])
        except ValueError:
            raise SkeletonError(f"bad offset for joint {name!r}", lineno) from None
        if len(parts) == 6:
            if parts[5] != "unit":
                raise SkeletonError(f"unexpected token {parts[5]!r}", lineno)
            if unit_name is not None:
                raise SkeletonError("more than one unit bone", lineno)
            unit_name = name
        seen[name] = lineno
        entries.append((name, None if parent == "root" else parent, offset, lineno))

    if not entries:
        raise SkeletonError("empty skeleton")
    if unit_name is None:
        # unmarked files fall back to the first non-root bone with a nonzero offset
        unit_name = next((n for n, p, off, _ in entries if p is not None and any(off)), None)
        if unit_name is None:
            raise SkeletonError("no joint carries the 'unit' marker and no bone has nonzero length")
    for name, parent, _, lineno in entries:
        if parent is not None and parent not in seen:
            raise SkeletonError(f"joint {name!r} references undefined parent {parent!r}", lineno)

    # topological re-index, stable w.r.t. file order
    by_name = {e[0]: e for e in entries}
    order, placed = [], set()
    while len(order) < len(entries):
        progressed = False
        for name, parent, _, _ in entries:
            if name not in placed and (parent is None or parent in placed):
                order.append(name)
                placed.add(name)
                progressed = True
        if not progressed:
            stuck = next(e for e in entries if e[0] not in placed)
            raise SkeletonError(f"cycle involving joint {stuck[0]!r}", stuck[3])

    index = {name: i for i, name in enumerate(order)}
    joints = []
    for name in order:
        _, parent, offset, lineno = by_name[name]
        joints.append(Joint(name, None if parent is None else index[parent], offset))
    if np.linalg.norm(by_name[unit_name][2]) <= 0.0:
        raise SkeletonError(f"unit bone {unit_name!r} has zero length", by_name[unit_name][3])
    return SkeletonSpec(tuple(joints), index[unit_name])


def load_skeleton(path_or_name):
    """Load a skeleton file, or a bundled fixture by name (``smpl15``, ``h36m21``)."""
    p = Path(path_or_name)
    if p.is_file():
        return parse_skeleton(p.read_text())
    fixture = resources.files("splmotion.skeletons") / f"{path_or_name}.skel"
    if fixture.is_file():
        return parse_skeleton(fixture.read_text())
    raise FileNotFoundError(f"no skeleton file or bundled fixture named {path_or_name!r}")


def normalize_bones(skel):
    scale = 1.0 / np.linalg.norm(skel.joints[skel.unit_bone].offset)
    joints = tuple(Joint(j.name, j.parent, tuple(float(v) * scale for v in j.offset)) for j in skel.joints)
    return SkeletonSpec(joints, skel.unit_bone)


def local_to_global(skel, rotmats):
    """Compose local joint rotations (..., K, 3, 3) down the tree into global rotations."""
    rotmats = np.asarray(rotmats, dtype=np.float64)
    if rotmats.shape[-3:] != (skel.num_joints, 3, 3):
        raise SkeletonError(f"expected (..., {skel.num_joints}, 3, 3) rotations, got {rotmats.shape}")
    out = np.empty_like(rotmats)
    for k, j in enumerate(skel.joints):
        if j.parent is None:
            out[..., k, :, :] = rotmats[..., k, :, :]
        else:
            out[..., k, :, :] = out[..., j.parent, :, :] @ rotmats[..., k, :, :]
    return out


def forward_kinematics(skel, rotmats, global_rots=None):
    """Joint positions (..., K, 3) with the root pinned at the origin."""
    if global_rots is None:
        global_rots = local_to_global(skel, rotmats)
    offsets = skel.offsets
    pos = np.zeros(global_rots.shape[:-2] + (3,))
    for k, j in enumerate(skel.joints):
        if j.parent is not None:
            pos[..., k, :] = pos[..., j.parent, :] + global_rots[..., j.parent, :, :] @ offsets[k]
    return pos


@dataclass
class PoseSequence:
    """T frames of K per-joint rotations, each a block of M numbers in one representation."""

    frames: np.ndarray  # (T, K, M)
    fps: float
    rep: str = "rotmat"

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.rep not in REPRESENTATIONS:
            raise ValueError(f"unknown representation {self.rep!r}")
        if self.frames.ndim != 3 or self.frames.shape[2] != REPRESENTATIONS[self.rep]:
            raise ValueError(f"frames must be (T, K, {REPRESENTATIONS[self.rep]}), got {self.frames.shape}")
        if self.frames.shape[0] < 1:
            raise ValueError("a pose sequence needs at least one frame")

    @property
    def num_frames(self):
        return self.frames.shape[0]

    @property
    def num_joints(self):
        return self.frames.shape[1]

    def flat(self):
        return self.frames.reshape(self.num_frames, -1)

    def rotmats(self):
        return to_rotmat(self.frames, self.rep)
