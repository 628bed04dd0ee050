"""Structured prediction layer: one small network per joint, wired along a hierarchy."""

from dataclasses import dataclass

import numpy as np

from .gradcore import dense
from .gradcore import ops as T

HIERARCHIES = ("kinematic", "independent", "reverse", "random")
FEEDINGS = ("sparse", "dense")


@dataclass(frozen=True)
class SplConfig:
    hierarchy: str = "kinematic"
    feeding: str = "sparse"
    hidden: int = 64
    joint_size: int = 9
    context_dim: int = 64
    seed: int = 0  # only used by the random hierarchy

    def __post_init__(self):
        if self.hierarchy not in HIERARCHIES:
            raise ValueError(f"hierarchy must be one of {HIERARCHIES}, got {self.hierarchy!r}")
        if self.feeding not in FEEDINGS:
            raise ValueError(f"feeding must be one of {FEEDINGS}, got {self.feeding!r}")
        if self.hidden < 1 or self.joint_size < 1 or self.context_dim < 1:
            raise ValueError("hidden, joint_size and context_dim must be positive")


def hierarchy_plan(skel, hierarchy, feeding="sparse", seed=0):
    """Traversal order and the joints fed into each joint's network.

    Returns ``(order, fed)`` where ``fed[k]`` lists the joints whose predictions
    are concatenated (in traversal order) after the context for joint ``k``.

    * kinematic: the skeleton's own parent relation, evaluated root first.
    * independent: nothing is fed; every joint sees only the context.
    * reverse: every edge flipped, so a joint is fed by its former children and
      evaluation starts from the deepest leaves.
    * random: a seeded permutation chained as a list.
    """
    K = skel.num_joints
    if hierarchy == "independent":
        return list(range(K)), [[] for _ in range(K)]

    if hierarchy == "kinematic":
        order = list(range(K))
        direct = [[] if p is None else [p] for p in skel.parents]
    elif hierarchy == "reverse":
        depth = [skel.depth(k) for k in range(K)]
        order = sorted(range(K), key=lambda k: (-depth[k], k))
        direct = [skel.children(k) for k in range(K)]
    elif hierarchy == "random":
        order = [int(k) for k in np.random.default_rng(seed).permutation(K)]
        direct = [[] for _ in range(K)]
        for prev, k in zip(order, order[1:]):
            direct[k] = [prev]
    else:
        raise ValueError(f"unknown hierarchy {hierarchy!r}")

    rank = {k: i for i, k in enumerate(order)}
    if feeding == "sparse":
        fed = [sorted(d, key=rank.get) for d in direct]
    else:
        fed = []
        for k in range(K):
            seen, stack = set(), list(direct[k])
            while stack:
                j = stack.pop()
                if j not in seen:
                    seen.add(j)
                    stack.extend(direct[j])
            fed.append(sorted(seen, key=rank.get))
    for k in range(K):
        assert all(rank[j] < rank[k] for j in fed[k])
    return order, fed


class SplLayer:
    """Per-joint ``Linear(H)-ReLU-Linear(M)`` networks evaluated along a hierarchy."""

    def __init__(self, skel, cfg, store, prefix="spl"):
        self.cfg = cfg
        self.num_joints = skel.num_joints
        self.order, self.fed = hierarchy_plan(skel, cfg.hierarchy, cfg.feeding, cfg.seed)
        M, D, H = cfg.joint_size, cfg.context_dim, cfg.hidden
        self.hidden_layers = []
        self.output_layers = []
        for k in range(self.num_joints):
            self.hidden_layers.append(dense(store, f"{prefix}/joint{k:02d}/hidden", self.input_dim(k), H))
            self.output_layers.append(dense(store, f"{prefix}/joint{k:02d}/out", H, M))
        self.output_dim = self.num_joints * M

    def input_dim(self, k):
        return self.cfg.context_dim + self.cfg.joint_size * len(self.fed[k])

    def __call__(self, h):
        if h.shape[-1] != self.cfg.context_dim:
            raise T.ShapeError(f"spl: context width {h.shape[-1]} != {self.cfg.context_dim}")
        preds = [None] * self.num_joints
        for k in self.order:
            inp = T.concat([h] + [preds[j] for j in self.fed[k]])
            preds[k] = self.output_layers[k](T.relu(self.hidden_layers[k](inp)))
        return T.concat(preds)


def build_spl(skel, cfg, store, prefix="spl"):
    return SplLayer(skel, cfg, store, prefix)


def per_joint_loss(pred, target):
    """Sum over time and joints of each joint's squared Euclidean error.

    Summing per-joint squared distances is the same as summing every squared
    component, so this is computed as one reduction.
    """
    pred, target = T.as_tensor(pred), T.as_tensor(target)
    return T.sum(T.square(T.sub(pred, target)))


def mean_squared_loss(pred, target):
    """Squared error averaged over every time step and pose component."""
    pred, target = T.as_tensor(pred), T.as_tensor(target)
    return T.mean(T.square(T.sub(pred, target)))


def residual_combine(input_pose, delta):
    """Add a predicted delta to the input pose in representation space."""
    return T.add(input_pose, delta)
