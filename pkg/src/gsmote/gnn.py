"""GraphSage-style encoder/classifier blocks and the GCN alternative.

Each forward accepts the adjacency as a scipy sparse matrix, a dense ndarray,
a tracked Value (soft real-valued edges), or any object exposing
``propagate(Value) -> Value`` (block-structured augmented adjacency).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from . import autodiff as ad
from .autodiff import Value


@dataclass
class SageBlock:
    """One message-passing block: out = relu(concat(X, A @ X) @ weight)."""

    weight: Value  # (2 * in_dim) x out_dim


@dataclass
class ClassifierHead:
    """Linear head over concat(H, A @ H) followed by relu and row softmax."""

    weight: Value  # (2 * hidden_dim) x m


def neighbor_matmul(adjacency, x: Value) -> Value:
    """Aggregate neighbor rows: A @ X for any supported adjacency kind."""
    if hasattr(adjacency, "propagate"):
        return adjacency.propagate(x)
    if sp.issparse(adjacency):
        return ad.sparse_matmul(adjacency, x)
    if isinstance(adjacency, Value):
        return ad.matmul(adjacency, x)
    return ad.matmul(Value(np.asarray(adjacency, dtype=np.float64)), x)


def _adjacency_row_sums(adjacency) -> np.ndarray:
    if hasattr(adjacency, "row_sums"):
        return adjacency.row_sums()
    if sp.issparse(adjacency):
        return np.asarray(adjacency.sum(axis=1)).ravel()
    data = adjacency.data if isinstance(adjacency, Value) else np.asarray(adjacency)
    return data.sum(axis=1)


def sage_forward(block: SageBlock, adjacency, features: Value,
                 aggregator: str = "sum") -> Value:
    """relu(concat(X, agg(A, X)) @ W); ``mean`` divides by row degree."""
    features = features if isinstance(features, Value) else Value(features)
    neighbor = neighbor_matmul(adjacency, features)
    if aggregator == "mean":
        deg = _adjacency_row_sums(adjacency)
        inv = np.where(deg > 0, 1.0 / np.maximum(deg, 1e-12), 0.0)
        neighbor = ad.row_scale(neighbor, inv)
    elif aggregator != "sum":
        raise ValueError(f"unknown aggregator {aggregator!r}")
    stacked = ad.concat_cols(features, neighbor)
    if stacked.shape[1] != block.weight.shape[0]:
        raise ValueError(f"sage_forward: concat width {stacked.shape[1]} does not "
                         f"match weight rows {block.weight.shape[0]}")
    return ad.relu(ad.matmul(stacked, block.weight))


def renorm_propagate(adjacency, x: Value) -> Value:
    """D^-1/2 (A + I) D^-1/2 @ X, the renormalized propagation.

    Degree scaling coefficients come from current adjacency values and are
    treated as constants; gradients still flow through the propagation
    product itself (and, for soft edges, into the edge scores).
    """
    x = x if isinstance(x, Value) else Value(x)
    s = 1.0 / np.sqrt(_adjacency_row_sums(adjacency) + 1.0)
    scaled = ad.row_scale(x, s)
    return ad.row_scale(ad.add(neighbor_matmul(adjacency, scaled), scaled), s)


def gcn_forward(weight: Value, adjacency, features: Value) -> Value:
    """relu(D^-1/2 (A + I) D^-1/2 @ X @ W)."""
    features = features if isinstance(features, Value) else Value(features)
    if features.shape[1] != weight.shape[0]:
        raise ValueError("gcn_forward: feature dim does not match weight rows")
    return ad.relu(ad.matmul(renorm_propagate(adjacency, features), weight))


def classify(head: ClassifierHead, block2_out: Value, adjacency,
             aggregator: str = "sum", renormalize: bool = False) -> Value:
    """Per-row class distribution: softmax(relu(concat(H, A @ H) @ Wc))."""
    h = block2_out if isinstance(block2_out, Value) else Value(block2_out)
    if renormalize:
        neighbor = renorm_propagate(adjacency, h)
    else:
        neighbor = neighbor_matmul(adjacency, h)
        if aggregator == "mean":
            deg = _adjacency_row_sums(adjacency)
            inv = np.where(deg > 0, 1.0 / np.maximum(deg, 1e-12), 0.0)
            neighbor = ad.row_scale(neighbor, inv)
        elif aggregator != "sum":
            raise ValueError(f"unknown aggregator {aggregator!r}")
    stacked = ad.concat_cols(h, neighbor)
    if stacked.shape[1] != head.weight.shape[0]:
        raise ValueError("classify: concat width does not match head weight rows")
    return ad.row_softmax(ad.relu(ad.matmul(stacked, head.weight)))


def one_hot_rows(labels, mask, num_rows: int, num_classes: int) -> np.ndarray:
    """Distribution-row matrix with one-hot targets on the masked rows."""
    t = np.zeros((num_rows, num_classes))
    idx = np.asarray(mask, dtype=np.intp)
    t[idx, np.asarray(labels)[idx]] = 1.0
    return t


def node_loss(probs: Value, labels, mask, weights=None) -> Value:
    """Mean negative log-likelihood of the true class over the mask."""
    idx = np.asarray(mask, dtype=np.intp)
    if idx.size == 0:
        raise ValueError("node_loss: empty mask")
    targets = one_hot_rows(labels, idx, probs.shape[0], probs.shape[1])
    return ad.masked_cross_entropy(probs, targets, idx, weights=weights)
