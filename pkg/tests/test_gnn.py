import numpy as np
import pytest
import scipy.sparse as sp

from gsmote import autodiff as ad
from gsmote.autodiff import Value, grad_check
from gsmote.gnn import (ClassifierHead, SageBlock, classify, gcn_forward,
                        node_loss, sage_forward)


def random_graph(rng, n, density=0.3):
    a = (rng.random((n, n)) < density).astype(float)
    a = np.triu(a, k=1)
    a = a + a.T
    return sp.csr_matrix(a)


def sage_oracle(a_dense, feats, w):
    """Per-node loop evaluation of relu(concat(F[v], sum_u A[vu] F[u]) @ W)."""
    rows = []
    for v in range(feats.shape[0]):
        agg = sum(a_dense[v, u] * feats[u] for u in range(feats.shape[0]))
        pre = np.concatenate([feats[v], agg]) @ w
        rows.append(np.maximum(pre, 0.0))
    return np.vstack(rows)


def test_sage_isolated_node_neighbor_half_is_zero():
    rng = np.random.default_rng(0)
    feats = rng.normal(size=(3, 2))
    a = sp.csr_matrix((3, 3))  # no edges at all
    w = np.vstack([np.eye(2), np.eye(2)])  # pass-through stack
    block = SageBlock(weight=Value(w))
    out = sage_forward(block, a, Value(feats))
    # neighbor half contributes nothing, so output = relu(F)
    assert np.allclose(out.data, np.maximum(feats, 0.0))


def test_sage_two_node_sum_aggregation():
    feats = np.array([[1.0], [2.0]])
    a = sp.csr_matrix(np.array([[0.0, 1.0], [1.0, 0.0]]))
    # weight that extracts only the neighbor half
    w = np.array([[0.0], [1.0]])
    block = SageBlock(weight=Value(w))
    out = sage_forward(block, a, Value(feats))
    assert np.allclose(out.data, [[2.0], [1.0]])


@pytest.mark.parametrize("seed", range(10))
def test_sage_matches_per_node_oracle(seed):
    rng = np.random.default_rng(seed)
    a = random_graph(rng, 10)
    feats = rng.normal(size=(10, 4))
    w = rng.normal(size=(8, 3))
    out = sage_forward(SageBlock(weight=Value(w)), a, Value(feats))
    assert np.allclose(out.data, sage_oracle(a.toarray(), feats, w), atol=1e-12)


def test_sage_mean_aggregator_divides_by_degree():
    feats = np.array([[1.0], [3.0], [5.0]])
    a = sp.csr_matrix(np.array([[0, 1, 1], [1, 0, 0], [1, 0, 0]], dtype=float))
    w = np.array([[0.0], [1.0]])
    out = sage_forward(SageBlock(weight=Value(w)), a, Value(feats),
                       aggregator="mean")
    assert np.allclose(out.data, [[4.0], [1.0], [1.0]])


def test_gcn_single_node_no_edges():
    rng = np.random.default_rng(1)
    feats = rng.normal(size=(1, 3))
    w = rng.normal(size=(3, 2))
    out = gcn_forward(Value(w), sp.csr_matrix((1, 1)), Value(feats))
    assert np.allclose(out.data, np.maximum(feats @ w, 0.0))


@pytest.mark.parametrize("seed", range(10))
def test_gcn_matches_explicit_normalization_oracle(seed):
    rng = np.random.default_rng(seed)
    a = random_graph(rng, 5)
    feats = rng.normal(size=(5, 3))
    w = rng.normal(size=(3, 2))
    a_hat = a.toarray() + np.eye(5)
    d_inv_sqrt = np.diag(1.0 / np.sqrt(a_hat.sum(axis=1)))
    want = np.maximum(d_inv_sqrt @ a_hat @ d_inv_sqrt @ feats @ w, 0.0)
    out = gcn_forward(Value(w), a, Value(feats))
    assert np.allclose(out.data, want, atol=1e-12)


def test_gcn_propagation_matrix_symmetric():
    rng = np.random.default_rng(2)
    a = random_graph(rng, 6)
    a_hat = a.toarray() + np.eye(6)
    d = 1.0 / np.sqrt(a_hat.sum(axis=1))
    prop = d[:, None] * a_hat * d[None, :]
    assert np.allclose(prop, prop.T)


def test_classify_zero_head_gives_uniform():
    rng = np.random.default_rng(3)
    a = random_graph(rng, 6)
    h2 = Value(rng.normal(size=(6, 4)))
    head = ClassifierHead(weight=Value(np.zeros((8, 5))))
    out = classify(head, h2, a)
    assert np.allclose(out.data, 0.2)


def test_classify_rows_sum_to_one():
    rng = np.random.default_rng(4)
    a = random_graph(rng, 7)
    h2 = Value(rng.normal(size=(7, 4)))
    head = ClassifierHead(weight=Value(rng.normal(size=(8, 3))))
    out = classify(head, h2, a)
    assert np.allclose(out.data.sum(axis=1), 1.0, atol=1e-9)


@pytest.mark.parametrize("seed", range(10))
def test_classify_matches_per_node_oracle(seed):
    rng = np.random.default_rng(seed)
    a = random_graph(rng, 8)
    h2 = rng.normal(size=(8, 4))
    wc = rng.normal(size=(8, 3))
    out = classify(ClassifierHead(weight=Value(wc)), Value(h2), a)
    a_dense = a.toarray()
    for v in range(8):
        agg = a_dense[v] @ h2
        logits = np.maximum(np.concatenate([h2[v], agg]) @ wc, 0.0)
        e = np.exp(logits - logits.max())
        assert np.allclose(out.data[v], e / e.sum(), atol=1e-12)


def test_node_loss_perfect_prediction_is_zero():
    probs = Value(np.eye(3))
    assert node_loss(probs, [0, 1, 2], [0, 1, 2]).item() == 0.0


def test_node_loss_uniform_is_log_m():
    m = 7
    probs = Value(np.full((4, m), 1.0 / m))
    loss = node_loss(probs, [0, 1, 2, 3], [0, 1, 2, 3])
    assert loss.item() == pytest.approx(np.log(m), abs=1e-12)


@pytest.mark.parametrize("seed", range(10))
def test_node_loss_matches_scalar_oracle(seed):
    rng = np.random.default_rng(seed)
    n, m = 9, 4
    probs = rng.random((n, m))
    probs /= probs.sum(axis=1, keepdims=True)
    labels = rng.integers(0, m, size=n)
    mask = rng.choice(n, size=5, replace=False)
    got = node_loss(Value(probs), labels, mask).item()
    want = -np.mean([np.log(probs[v, labels[v]]) for v in mask])
    assert got == pytest.approx(want, abs=1e-12)


def test_node_loss_empty_mask():
    with pytest.raises(ValueError):
        node_loss(Value(np.ones((2, 2)) / 2), [0, 1], [])


@pytest.mark.parametrize("seed", range(5))
def test_permutation_equivariance(seed):
    rng = np.random.default_rng(seed)
    n = 9
    a = random_graph(rng, n)
    feats = rng.normal(size=(n, 4))
    w = rng.normal(size=(8, 3))
    block = SageBlock(weight=Value(w))
    out = sage_forward(block, a, Value(feats)).data
    perm = rng.permutation(n)
    p = np.eye(n)[perm]
    a_perm = sp.csr_matrix(p @ a.toarray() @ p.T)
    out_perm = sage_forward(block, a_perm, Value(feats[perm])).data
    assert np.allclose(out_perm, out[perm], atol=1e-12)


def test_end_to_end_gradients_through_both_blocks(tiny_graph):
    rng = np.random.default_rng(0)
    d, h, m = tiny_graph.num_features, 5, tiny_graph.num_classes
    w1 = ad.parameter(rng.normal(size=(2 * d, h)) * 0.3)
    w2 = ad.parameter(rng.normal(size=(2 * h, h)) * 0.3)
    wc = ad.parameter(rng.normal(size=(2 * h, m)) * 0.3)
    a = tiny_graph.adjacency
    labels = tiny_graph.labels
    mask = np.arange(tiny_graph.n)

    def loss():
        h1 = sage_forward(SageBlock(weight=w1), a, Value(tiny_graph.features))
        h2 = sage_forward(SageBlock(weight=w2), a, h1)
        probs = classify(ClassifierHead(weight=wc), h2, a)
        return node_loss(probs, labels, mask)

    for p in (w1, w2, wc):
        assert grad_check(loss, p, h=1e-6) < 1e-4
