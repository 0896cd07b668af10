"""Bilinear edge scoring, adjacency reconstruction loss, and insertion of
synthetic nodes into an augmented adjacency.

The augmented adjacency [[A, B^T], [B, 0]] is kept in block form: the
real-real block is the original sparse adjacency, B is the synthetic-to-real
strip (one row per synthetic node, mirrored for symmetry), and synthetic
nodes never connect to each other. In soft mode the strip is a tracked Value
so classifier gradients reach the edge scores; in threshold mode it is a
detached binary array.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.special import expit

from . import autodiff as ad
from .autodiff import Value
from .graph import AttributedGraph, UNKNOWN_LABEL
from .smote import SyntheticBatch

PROV_REAL = 0
PROV_SMOTE = 1
PROV_MIXED = 2


EDGE_ACTIVATIONS = ("relu", "leaky_relu", "identity")
LEAKY_SLOPE = 0.01


def _leaky(x: np.ndarray) -> np.ndarray:
    return np.where(x > 0.0, x, LEAKY_SLOPE * x)


@dataclass
class EdgeGenerator:
    """Weighted inner-product edge scorer: score(u, v) = sigmoid(act(h_u @ S @ h_v)).

    The inner rectifier is what keeps the all-pairs reconstruction loss
    trainable on sparse graphs: it compresses non-edge scores to just below
    0.5 so the overwhelming zero-entries of the adjacency cannot drag the
    whole score matrix into sigmoid saturation (identity) or an absorbing
    zero-gradient plateau (plain relu); positive pairs always retain a
    gradient and separate strictly above 0.5. ``relu`` and ``identity`` are
    kept for ablation.
    """

    weight: Value  # h x h interaction matrix S
    activation: str = "relu"


def predict_edges(gen: EdgeGenerator, h_a, h_b) -> Value:
    """Pairwise edge probabilities, entry (i, j) = sigmoid(act(h_a[i] @ S @ h_b[j]))."""
    a = h_a if isinstance(h_a, Value) else Value(h_a)
    b = h_b if isinstance(h_b, Value) else Value(h_b)
    h = gen.weight.shape[0]
    if a.shape[1] != h or b.shape[1] != h:
        raise ValueError(f"embedding dim must match the {h}x{h} interaction matrix")
    x = ad.matmul(ad.matmul(a, gen.weight), ad.transpose(b))
    if gen.activation == "leaky_relu":
        x = ad.leaky_relu(x, LEAKY_SLOPE)
    elif gen.activation == "relu":
        x = ad.relu(x)
    elif gen.activation != "identity":
        raise ValueError(f"unknown edge activation {gen.activation!r}")
    return ad.sigmoid(x)


def _reconstruction_loss(m: Value, h: Value, a_dense: np.ndarray,
                         activation: str) -> Value:
    """Fused sum((sigmoid(act(M @ H^T)) - A)^2) over the n x n score matrix.

    Equivalent to composing matmul/rectifier/sigmoid/squared_error_sum but
    with one tape node and reused n^2 buffers; the score matrices dominate
    the per-epoch cost at full scale.
    """
    logits = m.data @ h.data.T
    if activation == "leaky_relu":
        slope = np.where(logits > 0.0, 1.0, LEAKY_SLOPE)
        logits *= slope
    elif activation == "relu":
        slope = (logits > 0.0).astype(np.float64)
        np.maximum(logits, 0.0, out=logits)
    else:
        slope = None
    e = expit(logits, out=logits)
    diff = e - a_dense
    loss = float((diff * diff).sum())

    def vjp(g):
        dlogit = diff * e
        dlogit *= 1.0 - e
        if slope is not None:
            dlogit *= slope
        dlogit *= 2.0 * g[0, 0]
        dm = dlogit @ h.data if m.requires_grad else None
        dh = dlogit.T @ m.data if h.requires_grad else None
        return (dm, dh)

    return ad._make(np.array([[loss]]), (m, h), "reconstruction_loss", vjp)


def edge_loss(gen: EdgeGenerator, embeddings: Value, adjacency) -> Value:
    """Squared Frobenius norm of (predicted edges - adjacency), unnormalized.

    Covers real nodes only; pass the graph adjacency (sparse or dense).
    """
    a_dense = adjacency.toarray() if sp.issparse(adjacency) else \
        np.asarray(adjacency, dtype=np.float64)
    emb = embeddings if isinstance(embeddings, Value) else Value(embeddings)
    m = ad.matmul(emb, gen.weight)
    return _reconstruction_loss(m, emb, a_dense, gen.activation)


def synthetic_rows_value(h_real: Value, batch: SyntheticBatch) -> Value:
    """Rebuild batch rows differentiably from the parent recipe."""
    if len(batch) == 0:
        return Value(np.zeros((0, h_real.shape[1])))
    seed_rows = ad.take_rows(h_real, batch.parents[:, 0])
    partner_rows = ad.take_rows(h_real, batch.parents[:, 1])
    return ad.add(ad.row_scale(seed_rows, 1.0 - batch.deltas),
                  ad.row_scale(partner_rows, batch.deltas))


class BlockAdjacency:
    """(n+k) x (n+k) adjacency [[A, B^T], [B, 0]] without materializing it."""

    def __init__(self, real: sp.csr_matrix, strip):
        self.real = real
        self.strip = strip  # Value or ndarray, k x n
        self.n = real.shape[0]
        self.k = strip.shape[0]
        if strip.shape[1] != self.n:
            raise ValueError("strip column count must equal the real node count")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n + self.k, self.n + self.k)

    def _strip_value(self) -> Value:
        s = self.strip
        return s if isinstance(s, Value) else Value(s)

    def propagate(self, x: Value) -> Value:
        """Adjacency-matrix product with a (n+k) x h Value."""
        if x.shape[0] != self.n + self.k:
            raise ValueError("propagate: row count mismatch")
        if self.k == 0:
            return ad.sparse_matmul(self.real, x)
        x_real = ad.take_rows(x, np.arange(self.n))
        x_syn = ad.take_rows(x, np.arange(self.n, self.n + self.k))
        s = self._strip_value()
        top = ad.add(ad.sparse_matmul(self.real, x_real),
                     ad.matmul(ad.transpose(s), x_syn))
        bottom = ad.matmul(s, x_real)
        return ad.concat_rows(top, bottom)

    def strip_data(self) -> np.ndarray:
        s = self.strip
        return s.data if isinstance(s, Value) else np.asarray(s)

    def row_sums(self) -> np.ndarray:
        """Detached degree vector (used for aggregation scaling only)."""
        s = self.strip_data()
        real_deg = np.asarray(self.real.sum(axis=1)).ravel() + s.sum(axis=0)
        return np.concatenate([real_deg, s.sum(axis=1)])

    def to_dense(self) -> np.ndarray:
        s = self.strip_data()
        total = self.n + self.k
        out = np.zeros((total, total))
        out[: self.n, : self.n] = self.real.toarray()
        out[: self.n, self.n:] = s.T
        out[self.n:, : self.n] = s
        return out


@dataclass
class AugmentedGraph:
    """Original graph plus synthetic rows: adjacency, stacked embeddings,
    labels (distribution rows for mixed nodes), and per-node provenance."""

    adjacency_aug: BlockAdjacency
    embeddings_aug: Value            # (n+k) x h
    labels_aug: np.ndarray           # hard labels, UNKNOWN_LABEL where absent
    label_rows: np.ndarray | None    # (n+k) x m distribution rows, or None
    provenance: np.ndarray           # PROV_REAL / PROV_SMOTE / PROV_MIXED
    n_real: int

    @property
    def n_total(self) -> int:
        return self.labels_aug.shape[0]

    def synthetic_indices(self, kind: int) -> np.ndarray:
        return np.flatnonzero(self.provenance == kind)


@dataclass
class AugmentPiece:
    """One group of synthetic nodes ready for assembly."""

    embeddings: Value                # k x h, tracked
    strip: object                    # Value or ndarray, k x n
    labels: np.ndarray               # k hard labels (or UNKNOWN_LABEL)
    label_rows: np.ndarray | None    # k x m for mixed nodes
    provenance: int


def _stack_strips(strips: list) -> object:
    if all(not isinstance(s, Value) for s in strips):
        return np.vstack([np.asarray(s) for s in strips])
    lifted = [s if isinstance(s, Value) else Value(s) for s in strips]
    out = lifted[0]
    for s in lifted[1:]:
        out = ad.concat_rows(out, s)
    return out


def assemble_augmented(graph: AttributedGraph, h_real: Value,
                       pieces: list[AugmentPiece], num_classes: int | None = None
                       ) -> AugmentedGraph:
    """Stack real embeddings with synthetic pieces into one augmented graph."""
    n = graph.n
    m = num_classes or graph.num_classes
    pieces = [p for p in pieces if p.embeddings.shape[0] > 0]
    if not pieces:
        strip = np.zeros((0, n))
        return AugmentedGraph(
            adjacency_aug=BlockAdjacency(graph.adjacency, strip),
            embeddings_aug=h_real,
            labels_aug=graph.labels.copy(),
            label_rows=None,
            provenance=np.full(n, PROV_REAL, dtype=np.int8),
            n_real=n,
        )
    emb = h_real
    labels = [graph.labels]
    prov = [np.full(n, PROV_REAL, dtype=np.int8)]
    strips = []
    any_rows = any(p.label_rows is not None for p in pieces)
    rows = [np.zeros((n, m))] if any_rows else None
    for p in pieces:
        emb = ad.concat_rows(emb, p.embeddings)
        labels.append(p.labels)
        prov.append(np.full(len(p.labels), p.provenance, dtype=np.int8))
        strips.append(p.strip)
        if any_rows:
            k = len(p.labels)
            if p.label_rows is not None:
                rows.append(p.label_rows)
            else:
                hot = np.zeros((k, m))
                known = p.labels != UNKNOWN_LABEL
                hot[np.flatnonzero(known), p.labels[known]] = 1.0
                rows.append(hot)
    return AugmentedGraph(
        adjacency_aug=BlockAdjacency(graph.adjacency, _stack_strips(strips)),
        embeddings_aug=emb,
        labels_aug=np.concatenate(labels),
        label_rows=np.vstack(rows) if any_rows else None,
        provenance=np.concatenate(prov),
        n_real=n,
    )


def soft_strip_value(gen: EdgeGenerator, h_syn: Value, h_real: Value) -> Value:
    """Differentiable synthetic-to-real edge weights in [0, 1).

    Weights are the edge scores rescaled as 2 * (score - 1/2), clamped at
    zero. Under the rectified scorer, pairs with nonpositive bilinear score
    sit exactly at score 0.5; inserting the raw score would wire every
    synthetic node to the entire graph with half-weight edges, which swamps
    the classifier. The rescaled weight keeps those pairs at exactly zero,
    stays differentiable through the active pairs, and approaches the
    binarized insertion as scores separate.
    """
    scores = predict_edges(gen, h_syn, h_real)
    half = Value(np.full(scores.shape, 0.5))
    return ad.relu(ad.scale(ad.sub(scores, half), 2.0))


def threshold_strip(gen: EdgeGenerator, syn_embeddings: np.ndarray,
                    real_embeddings: np.ndarray, eta: float) -> np.ndarray:
    """Detached binary synthetic-to-real edges: 1 where score > eta."""
    if not 0.0 < eta < 1.0:
        raise ValueError("threshold eta must lie strictly inside (0, 1)")
    x = syn_embeddings @ gen.weight.data @ real_embeddings.T
    if gen.activation == "leaky_relu":
        x = _leaky(x)
    elif gen.activation == "relu":
        np.maximum(x, 0.0, out=x)
    scores = expit(x)
    return (scores > eta).astype(np.float64)


def augment_threshold(gen: EdgeGenerator, batch: SyntheticBatch,
                      graph: AttributedGraph, eta: float, h_real: Value
                      ) -> AugmentedGraph:
    """Insert batch nodes with binarized, gradient-detached edges."""
    h_syn = synthetic_rows_value(h_real, batch)
    strip = threshold_strip(gen, h_syn.data, h_real.data, eta)
    piece = AugmentPiece(embeddings=h_syn, strip=strip, labels=batch.labels,
                         label_rows=batch.label_rows, provenance=PROV_SMOTE)
    return assemble_augmented(graph, h_real, [piece])


def augment_soft(gen: EdgeGenerator, batch: SyntheticBatch,
                 graph: AttributedGraph, h_real: Value) -> AugmentedGraph:
    """Insert batch nodes with continuous, differentiable edge weights."""
    h_syn = synthetic_rows_value(h_real, batch)
    if len(batch) == 0:
        strip = np.zeros((0, graph.n))
    else:
        strip = soft_strip_value(gen, h_syn, h_real)
    piece = AugmentPiece(embeddings=h_syn, strip=strip, labels=batch.labels,
                         label_rows=batch.label_rows, provenance=PROV_SMOTE)
    return assemble_augmented(graph, h_real, [piece])
