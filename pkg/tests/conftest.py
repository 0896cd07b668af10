import numpy as np
import pytest

from gsmote.graph import (AttributedGraph, generate_synthetic_graph,
                          make_imbalanced_split, _symmetrize)


@pytest.fixture
def tiny_graph():
    """12-node, 3-class fixture for gradient checks."""
    return generate_synthetic_graph(seed=11, n=12, m=3, d=6,
                                    intra_p=0.5, inter_p=0.1)


@pytest.fixture
def tiny_masks(tiny_graph):
    return make_imbalanced_split(tiny_graph, minority_count=1,
                                 imbalance_ratio=0.5, majority_train_size=2,
                                 seed=2)


@pytest.fixture
def small_graph():
    """60-node, 3-class fixture for behavioral tests."""
    return generate_synthetic_graph(seed=7, n=60, m=3, d=8,
                                    intra_p=0.3, inter_p=0.03)


@pytest.fixture
def small_masks(small_graph):
    return make_imbalanced_split(small_graph, minority_count=1,
                                 imbalance_ratio=0.5, majority_train_size=8,
                                 seed=1)


def make_cora_like(seed: int, n: int = 420, m: int = 7, d: int = 120,
                   words: int = 8, intra_p: float = 0.025,
                   inter_p: float = 0.002) -> AttributedGraph:
    """Citation-network-shaped fixture: sparse binary bag-of-words features
    with class-specific topics, low average degree."""
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % m
    topic = rng.random((m, d)) ** 3
    topic /= topic.sum(axis=1, keepdims=True)
    feats = np.zeros((n, d))
    for i in range(n):
        idx = rng.choice(d, size=words, replace=False, p=topic[labels[i]])
        feats[i, idx] = 1.0
    iu, ju = np.triu_indices(n, k=1)
    p = np.where(labels[iu] == labels[ju], intra_p, inter_p)
    keep = rng.random(iu.size) < p
    adjacency, _ = _symmetrize(iu[keep], ju[keep], n)
    return AttributedGraph(adjacency=adjacency, features=feats,
                           labels=labels.astype(np.int64), num_classes=m)


@pytest.fixture(scope="session")
def cora_like_graph():
    return make_cora_like(seed=0)
