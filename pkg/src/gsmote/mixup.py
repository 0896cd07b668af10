"""Cross-class node interpolation: pseudo-label obtention, mixed-node
generation with two-point label distributions, and the mixed-node loss.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Value
from .edgegen import (AugmentPiece, AugmentedGraph, EdgeGenerator, PROV_MIXED,
                      assemble_augmented, soft_strip_value,
                      synthetic_rows_value, threshold_strip)
from .graph import AttributedGraph, ClassStats, UNKNOWN_LABEL
from .smote import SyntheticBatch, minority_classes

INSERTION_STRATEGIES = ("vanilla", "heuristic", "predicted")


@dataclass
class MixupConfig:
    interpolation_scale: float = 0.5    # b: delta' ~ U(0, b)
    mixup_ratio: float = 1.0            # mixed count / labeled train count
    confidence: float = 0.3             # pseudo-label threshold
    weight: float = 0.1                 # loss weight for the mixed term
    use_pseudo: bool = True             # False restricts parents to labeled nodes
    insertion: str = "predicted"
    majority_only: bool = True          # partners restricted to majority classes

    def validate(self) -> None:
        if not 0.0 < self.interpolation_scale <= 1.0:
            raise ValueError("interpolation scale must lie in (0, 1]")
        if not 0.0 <= self.confidence < 1.0:
            raise ValueError("confidence threshold must lie in [0, 1)")
        if self.mixup_ratio < 0:
            raise ValueError("mixup ratio must be nonnegative")
        if self.insertion not in INSERTION_STRATEGIES:
            raise ValueError(f"unknown insertion strategy {self.insertion!r}")


def pseudo_labels(probs, labels, train_mask, confidence: float) -> np.ndarray:
    """Per-node effective label: ground truth on train nodes, the argmax
    prediction on other nodes whose top probability exceeds ``confidence``,
    UNKNOWN_LABEL elsewhere."""
    p = np.asarray(probs, dtype=np.float64)
    out = np.full(p.shape[0], UNKNOWN_LABEL, dtype=np.int64)
    confident = p.max(axis=1) > confidence
    out[confident] = p[confident].argmax(axis=1)
    idx = np.asarray(train_mask, dtype=np.intp)
    out[idx] = np.asarray(labels)[idx]
    return out


def mix_nodes(embeddings, effective_labels, stats: ClassStats,
              config: MixupConfig, rng: np.random.Generator) -> SyntheticBatch:
    """Interpolate minority nodes toward differently-labeled partners.

    Draws round(mixup_ratio * labeled-train-count) samples. The seed v comes
    from minority-class nodes (any class when the split is balanced); the
    partner u prefers majority classes, falling back to any other class. The
    mixed label puts mass (1 - delta') on v's class and delta' on u's.
    """
    config.validate()
    emb = np.asarray(embeddings, dtype=np.float64)
    y = np.asarray(effective_labels)
    m = stats.sizes.shape[0]
    count = int(round(config.mixup_ratio * int(stats.sizes.sum())))
    if count == 0:
        return SyntheticBatch(embeddings=np.zeros((0, emb.shape[1])),
                              labels=np.zeros(0, dtype=np.int64),
                              parents=np.zeros((0, 2), dtype=np.intp),
                              deltas=np.zeros(0),
                              label_rows=np.zeros((0, m)))
    labeled = np.flatnonzero(y != UNKNOWN_LABEL)
    minority = minority_classes(stats)
    v_pool = labeled[np.isin(y[labeled], minority)] if minority.size else labeled
    if v_pool.size == 0:
        raise ValueError("mix_nodes: no eligible minority-labeled node")
    majority_set = np.setdiff1d(np.arange(m), minority)

    rows, labs, parents, deltas, dist_rows = [], [], [], [], []
    for _ in range(count):
        v = int(rng.choice(v_pool))
        pool = labeled
        if config.majority_only and minority.size:
            pref = labeled[np.isin(y[labeled], majority_set)]
            if pref.size:
                pool = pref
        candidates = pool[y[pool] != y[v]]
        if candidates.size == 0:
            candidates = labeled[y[labeled] != y[v]]
        if candidates.size == 0:
            raise ValueError("mix_nodes: no differently-labeled partner available")
        u = int(rng.choice(candidates))
        d = float(rng.random() * config.interpolation_scale)
        rows.append((1.0 - d) * emb[v] + d * emb[u])
        labs.append(y[v])
        parents.append((v, u))
        deltas.append(d)
        dist = np.zeros(m)
        dist[y[v]] = 1.0 - d
        dist[y[u]] = d
        dist_rows.append(dist)
    return SyntheticBatch(embeddings=np.vstack(rows),
                          labels=np.array(labs, dtype=np.int64),
                          parents=np.array(parents, dtype=np.intp),
                          deltas=np.array(deltas),
                          label_rows=np.vstack(dist_rows))


def mix_loss(probs_mixed: Value, label_rows) -> Value:
    """Mean cross-entropy between mixed label distributions and predictions."""
    rows = np.asarray(label_rows, dtype=np.float64)
    if probs_mixed.shape[0] == 0:
        raise ValueError("mix_loss: empty mixed set")
    if rows.shape != probs_mixed.shape:
        raise ValueError("mix_loss: label rows must align with predictions")
    return ad.masked_cross_entropy(probs_mixed, rows, np.arange(rows.shape[0]))


def mixed_strip(gen: EdgeGenerator, batch: SyntheticBatch, graph: AttributedGraph,
                strategy: str, h_real: Value | None = None, eta: float = 0.5,
                soft: bool = False, parent_edges=None):
    """Synthetic-to-real edge rows for mixed nodes under one insertion strategy."""
    k = len(batch)
    if strategy == "vanilla":
        return np.zeros((k, graph.n))
    if strategy == "heuristic":
        if parent_edges is None:
            a = graph.adjacency
            rows_v = a[batch.parents[:, 0]].toarray()
            rows_u = a[batch.parents[:, 1]].toarray()
        else:
            rows_v, rows_u = parent_edges
        d = batch.deltas[:, None]
        return (1.0 - d) * rows_v + d * rows_u
    if strategy == "predicted":
        if h_real is None:
            raise ValueError("predicted insertion needs the real embeddings")
        h_syn = synthetic_rows_value(h_real, batch)
        if soft:
            return soft_strip_value(gen, h_syn, h_real) if k \
                else np.zeros((0, graph.n))
        return threshold_strip(gen, h_syn.data, h_real.data, eta)
    raise ValueError(f"unknown insertion strategy {strategy!r}")


def insert_mixed(gen: EdgeGenerator, batch: SyntheticBatch, graph: AttributedGraph,
                 strategy: str, h_real: Value, eta: float = 0.5,
                 soft: bool = False, parent_edges=None) -> AugmentedGraph:
    """Augmented graph containing only the mixed nodes from ``batch``."""
    strip = mixed_strip(gen, batch, graph, strategy, h_real=h_real, eta=eta,
                        soft=soft, parent_edges=parent_edges)
    piece = AugmentPiece(embeddings=synthetic_rows_value(h_real, batch),
                         strip=strip, labels=batch.labels,
                         label_rows=batch.label_rows, provenance=PROV_MIXED)
    return assemble_augmented(graph, h_real, [piece])
