"""Embedding-space minority over-sampling: same-class nearest neighbors and
convex interpolation between a seed node and its neighbor.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .graph import ClassStats


@dataclass
class OversamplePlan:
    per_class_new_count: np.ndarray  # length m
    scale_mode: str                  # "uniform" | "class_balanced"

    @property
    def total(self) -> int:
        return int(self.per_class_new_count.sum())


@dataclass
class SyntheticBatch:
    """Synthetic rows plus the recipe that produced them.

    ``parents[i] = (seed node, partner node)`` and ``deltas[i]`` reproduce
    row i as ``(1 - delta) * emb[seed] + delta * emb[partner]``; the trainer
    uses the recipe to rebuild rows differentiably. ``label_rows`` is None
    for same-class over-sampling and holds mixed distributions for
    cross-class interpolation.
    """

    embeddings: np.ndarray           # k x h snapshot
    labels: np.ndarray               # k hard labels (mix: minority-side label)
    parents: np.ndarray              # k x 2 node indices
    deltas: np.ndarray               # k interpolation coefficients
    label_rows: np.ndarray | None = None

    def __len__(self) -> int:
        return self.embeddings.shape[0]


def empty_batch(h: int) -> SyntheticBatch:
    return SyntheticBatch(embeddings=np.zeros((0, h)), labels=np.zeros(0, dtype=np.int64),
                          parents=np.zeros((0, 2), dtype=np.intp), deltas=np.zeros(0))


def nearest_same_class(embeddings, labels, train_mask, v: int) -> int:
    """Closest labeled train node of v's class by Euclidean distance.

    Returns v itself when it is the only labeled node of its class; ties
    break toward the smallest node index.
    """
    emb = np.asarray(embeddings, dtype=np.float64)
    y = np.asarray(labels)
    idx = np.asarray(train_mask, dtype=np.intp)
    candidates = idx[(y[idx] == y[v]) & (idx != v)]
    if candidates.size == 0:
        return int(v)
    d = np.linalg.norm(emb[candidates] - emb[v], axis=1)
    return int(candidates[np.argmin(d)])


def interpolate(h_v, h_nn, delta: float) -> np.ndarray:
    if not 0.0 <= delta <= 1.0:
        raise ValueError(f"delta must lie in [0, 1], got {delta}")
    return (1.0 - delta) * np.asarray(h_v, dtype=np.float64) \
        + delta * np.asarray(h_nn, dtype=np.float64)


def minority_classes(stats: ClassStats) -> np.ndarray:
    """Classes whose labeled train count is strictly below the largest one."""
    return np.flatnonzero(stats.sizes < stats.sizes.max())


def build_plan(stats: ClassStats, mode: str, scale: float,
               n_train: int, m: int) -> OversamplePlan:
    """Synthetic-node counts per class.

    uniform: round(scale * |C_c|) for each minority class.
    class_balanced: max(0, round(n_train / m) - |C_c|), so classes end
    equal-sized up to rounding.
    """
    counts = np.zeros(m, dtype=np.int64)
    if mode == "uniform":
        if scale <= 0:
            raise ValueError("uniform over-sampling scale must be positive")
        for c in minority_classes(stats):
            counts[c] = int(round(scale * stats.sizes[c]))
    elif mode == "class_balanced":
        target = int(round(n_train / m))
        counts = np.maximum(0, target - stats.sizes).astype(np.int64)
    else:
        raise ValueError(f"unknown plan mode {mode!r}")
    return OversamplePlan(per_class_new_count=counts, scale_mode=mode)


def oversample(embeddings, labels, train_mask, plan: OversamplePlan,
               rng: np.random.Generator) -> SyntheticBatch:
    """Generate plan.total synthetic rows by seeded same-class interpolation.

    Seed nodes are drawn uniformly with replacement from each class's train
    nodes; nearest neighbors are taken in the current embedding space.
    """
    emb = np.asarray(embeddings, dtype=np.float64)
    y = np.asarray(labels)
    idx = np.asarray(train_mask, dtype=np.intp)
    rows, labs, parents, deltas = [], [], [], []
    for c in np.flatnonzero(plan.per_class_new_count):
        members = idx[y[idx] == c]
        if members.size == 0:
            raise ValueError(f"over-sampling class {c} has no labeled train nodes")
        # one exhaustive scan per distinct seed, classes are small
        nn_cache: dict[int, int] = {}
        seeds = rng.choice(members, size=int(plan.per_class_new_count[c]), replace=True)
        for v in seeds:
            v = int(v)
            u = nn_cache.get(v)
            if u is None:
                u = nearest_same_class(emb, y, idx, v)
                nn_cache[v] = u
            delta = float(rng.random())
            rows.append(interpolate(emb[v], emb[u], delta))
            labs.append(c)
            parents.append((v, u))
            deltas.append(delta)
    if not rows:
        return empty_batch(emb.shape[1])
    return SyntheticBatch(embeddings=np.vstack(rows),
                          labels=np.array(labs, dtype=np.int64),
                          parents=np.array(parents, dtype=np.intp),
                          deltas=np.array(deltas))
