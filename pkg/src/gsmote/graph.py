"""Attributed-graph representation, dataset I/O, and split construction.

Dataset directory format (UTF-8, LF):
  edges.tsv     one edge per line, two tab-separated 0-based node indices
  features.csv  one row per node, comma-separated decimals
  labels.csv    one integer per line, -1 for unknown
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.sparse as sp

log = logging.getLogger(__name__)

UNKNOWN_LABEL = -1


class DatasetError(Exception):
    """Raised for malformed or missing dataset files."""


@dataclass
class AttributedGraph:
    """Sparse symmetric adjacency + dense features + partial labels."""

    adjacency: sp.csr_matrix   # n x n, binary, zero diagonal
    features: np.ndarray       # n x d, float64
    labels: np.ndarray         # length n, class index or UNKNOWN_LABEL
    num_classes: int

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def num_features(self) -> int:
        return self.features.shape[1]

    def validate(self) -> None:
        n = self.n
        if self.adjacency.shape != (n, n):
            raise DatasetError(f"adjacency is {self.adjacency.shape}, expected {(n, n)}")
        if self.labels.shape != (n,):
            raise DatasetError("labels length does not match node count")
        diff = self.adjacency - self.adjacency.T
        if diff.nnz and np.abs(diff.data).max() > 0:
            raise DatasetError("adjacency is not symmetric")
        if self.adjacency.nnz:
            vals = np.unique(self.adjacency.data)
            if not np.all(np.isin(vals, [0.0, 1.0])):
                raise DatasetError("adjacency entries must be 0/1")
        if self.adjacency.diagonal().any():
            raise DatasetError("adjacency has self-loops")
        known = self.labels[self.labels != UNKNOWN_LABEL]
        if known.size and (known.min() < 0 or known.max() >= self.num_classes):
            raise DatasetError("label class index out of range")


@dataclass
class SplitMasks:
    """Disjoint train/validation/test node-index sets."""

    train: np.ndarray
    validation: np.ndarray
    test: np.ndarray

    def validate(self, graph: AttributedGraph) -> None:
        parts = [self.train, self.validation, self.test]
        allidx = np.concatenate(parts)
        if allidx.size != np.unique(allidx).size:
            raise ValueError("split masks overlap")
        if allidx.size and (allidx.min() < 0 or allidx.max() >= graph.n):
            raise ValueError("split index out of range")
        if np.any(graph.labels[self.train] == UNKNOWN_LABEL):
            raise ValueError("train mask contains unlabeled nodes")


@dataclass
class ClassStats:
    """Per-class labeled training counts and min/max imbalance ratio."""

    sizes: np.ndarray
    imbalance_ratio: float


def class_stats(graph: AttributedGraph, train_mask) -> ClassStats:
    idx = np.asarray(train_mask, dtype=np.intp)
    if idx.size == 0:
        raise ValueError("class_stats: empty train mask")
    y = graph.labels[idx]
    if np.any(y == UNKNOWN_LABEL):
        raise ValueError("class_stats: train mask contains unlabeled nodes")
    sizes = np.bincount(y, minlength=graph.num_classes)
    if sizes.min() == 0:
        raise ValueError("class_stats: a class has zero labeled training nodes")
    return ClassStats(sizes=sizes, imbalance_ratio=float(sizes.min() / sizes.max()))


# ---------------------------------------------------------------------------
# dataset I/O


def _symmetrize(rows: np.ndarray, cols: np.ndarray, n: int) -> tuple[sp.csr_matrix, int]:
    """Build a binary symmetric zero-diagonal adjacency; returns (A, self-loop count)."""
    self_loops = int((rows == cols).sum())
    keep = rows != cols
    rows, cols = rows[keep], cols[keep]
    all_r = np.concatenate([rows, cols])
    all_c = np.concatenate([cols, rows])
    a = sp.coo_matrix((np.ones(all_r.size), (all_r, all_c)), shape=(n, n)).tocsr()
    a.data[:] = 1.0  # collapse duplicates
    a.sum_duplicates()
    a.data[:] = 1.0
    return a, self_loops


def load_graph(dataset_dir, normalize_features: bool = False) -> AttributedGraph:
    """Load and validate a dataset directory; symmetrizes and dedupes edges."""
    d = Path(dataset_dir)
    edges_f, feats_f, labels_f = d / "edges.tsv", d / "features.csv", d / "labels.csv"
    for f in (edges_f, feats_f, labels_f):
        if not f.is_file():
            raise DatasetError(f"missing dataset file: {f}")

    try:
        features = np.loadtxt(feats_f, delimiter=",", dtype=np.float64, ndmin=2)
    except ValueError as e:
        raise DatasetError(f"non-numeric feature value in {feats_f}: {e}") from e
    n = features.shape[0]

    try:
        raw_labels = np.loadtxt(labels_f, dtype=np.int64, ndmin=1)
    except ValueError as e:
        raise DatasetError(f"bad label value in {labels_f}: {e}") from e
    if raw_labels.shape[0] != n:
        raise DatasetError(
            f"row-count mismatch: {n} feature rows vs {raw_labels.shape[0]} labels")
    known = raw_labels[raw_labels != UNKNOWN_LABEL]
    if known.size == 0:
        raise DatasetError("dataset has no labeled nodes")
    if known.min() < 0:
        raise DatasetError("negative label that is not the unknown sentinel -1")
    m = int(known.max()) + 1

    text = edges_f.read_text(encoding="utf-8").strip()
    if text:
        try:
            pairs = np.array([line.split("\t") for line in text.split("\n")],
                             dtype=np.int64)
        except ValueError as e:
            raise DatasetError(f"bad edge line in {edges_f}: {e}") from e
        if pairs.ndim != 2 or pairs.shape[1] != 2:
            raise DatasetError("edges.tsv lines must hold exactly two indices")
        if pairs.min() < 0 or pairs.max() >= n:
            raise DatasetError(f"edge index out of range 0..{n - 1}")
        adjacency, dropped = _symmetrize(pairs[:, 0], pairs[:, 1], n)
        if dropped:
            log.warning("dropped %d self-loop edge(s) while loading %s", dropped, d)
    else:
        adjacency = sp.csr_matrix((n, n))

    if normalize_features:
        norms = np.abs(features).sum(axis=1, keepdims=True)
        norms[norms == 0] = 1.0
        features = features / norms

    graph = AttributedGraph(adjacency=adjacency, features=features,
                            labels=raw_labels, num_classes=m)
    graph.validate()
    return graph


def save_graph(graph: AttributedGraph, out_dir) -> None:
    """Write a graph back in the dataset directory format (round-trips with load)."""
    d = Path(out_dir)
    d.mkdir(parents=True, exist_ok=True)
    upper = sp.triu(graph.adjacency, k=1).tocoo()
    order = np.lexsort((upper.col, upper.row))
    lines = [f"{r}\t{c}" for r, c in zip(upper.row[order], upper.col[order])]
    (d / "edges.tsv").write_text("\n".join(lines) + ("\n" if lines else ""),
                                 encoding="utf-8")
    with (d / "features.csv").open("w", encoding="utf-8", newline="\n") as f:
        for row in graph.features:
            f.write(",".join(repr(float(x)) for x in row) + "\n")
    with (d / "labels.csv").open("w", encoding="utf-8", newline="\n") as f:
        for y in graph.labels:
            f.write(f"{y}\n")


def prepare_cora(src_dir, out_dir) -> dict:
    """Convert the public Cora distribution (cora.content + cora.cites).

    Node order follows cora.content line order; class names map to indices
    in sorted order. Returns conversion stats.
    """
    src = Path(src_dir)
    content_f, cites_f = src / "cora.content", src / "cora.cites"
    for f in (content_f, cites_f):
        if not f.is_file():
            raise DatasetError(f"missing source file: {f}")

    ids: list[str] = []
    feat_rows: list[np.ndarray] = []
    class_names: list[str] = []
    for line in content_f.read_text(encoding="utf-8").strip().split("\n"):
        parts = line.split()
        if len(parts) < 3:
            raise DatasetError(f"short line in cora.content: {line[:50]!r}")
        ids.append(parts[0])
        feat_rows.append(np.array(parts[1:-1], dtype=np.float64))
        class_names.append(parts[-1])
    id_to_idx = {pid: i for i, pid in enumerate(ids)}
    classes = sorted(set(class_names))
    labels = np.array([classes.index(c) for c in class_names], dtype=np.int64)
    features = np.vstack(feat_rows)

    raw_edges = 0
    edge_pairs: list[tuple[int, int]] = []
    for line in cites_f.read_text(encoding="utf-8").strip().split("\n"):
        a, b = line.split()
        raw_edges += 1
        if a not in id_to_idx or b not in id_to_idx:
            raise DatasetError(f"citation references unknown paper id: {line!r}")
        edge_pairs.append((id_to_idx[a], id_to_idx[b]))

    pairs = np.array(edge_pairs, dtype=np.int64)
    adjacency, dropped = _symmetrize(pairs[:, 0], pairs[:, 1], len(ids))
    graph = AttributedGraph(adjacency=adjacency, features=features,
                            labels=labels, num_classes=len(classes))
    graph.validate()
    save_graph(graph, out_dir)
    return {
        "nodes": graph.n,
        "feature_dim": graph.num_features,
        "classes": graph.num_classes,
        "raw_citation_lines": raw_edges,
        "undirected_edges": int(graph.adjacency.nnz // 2),
        "self_loops_dropped": dropped,
        "class_names": classes,
    }


# ---------------------------------------------------------------------------
# splits and fixtures


def make_imbalanced_split(graph: AttributedGraph, minority_count: int,
                          imbalance_ratio: float, majority_train_size: int,
                          seed: int, val_fraction: float = 0.5) -> SplitMasks:
    """Down-sample randomly chosen minority classes in the training set.

    Majority classes contribute ``majority_train_size`` labeled train nodes;
    each of ``minority_count`` randomly selected classes contributes
    ``round(majority_train_size * imbalance_ratio)``. Remaining labeled nodes
    are split per class into validation/test by ``val_fraction``.
    """
    m = graph.num_classes
    if minority_count >= m:
        raise ValueError("minority_count must be smaller than the class count")
    minority_size = int(round(majority_train_size * imbalance_ratio))
    if minority_size < 1:
        raise ValueError("majority_train_size * imbalance_ratio must be >= 1")
    rng = np.random.default_rng(seed)
    minority_classes = set(rng.choice(m, size=minority_count, replace=False).tolist())

    train, val, test = [], [], []
    for c in range(m):
        members = np.flatnonzero(graph.labels == c)
        want = minority_size if c in minority_classes else majority_train_size
        if members.size < want:
            raise ValueError(f"class {c} has {members.size} labeled nodes, "
                             f"needs {want} for the train split")
        members = rng.permutation(members)
        train.append(members[:want])
        rest = members[want:]
        n_val = int(round(rest.size * val_fraction))
        val.append(rest[:n_val])
        test.append(rest[n_val:])

    masks = SplitMasks(train=np.sort(np.concatenate(train)),
                       validation=np.sort(np.concatenate(val)),
                       test=np.sort(np.concatenate(test)))
    masks.validate(graph)
    return masks


def generate_synthetic_graph(seed: int, n: int, m: int, d: int,
                             intra_p: float, inter_p: float) -> AttributedGraph:
    """Stochastic block model with class-conditional Gaussian features.

    Deterministic per seed; a fast fully-labeled fixture for tests.
    """
    if n < m:
        raise ValueError("need at least one node per class")
    if not (0.0 <= inter_p < intra_p <= 1.0) and not (intra_p == inter_p == 0.0):
        raise ValueError("require 0 <= inter_p < intra_p <= 1 (or both zero)")
    rng = np.random.default_rng(seed)
    labels = np.arange(n) % m
    means = rng.normal(0.0, 1.0, size=(m, d))
    features = means[labels] + 0.4 * rng.normal(0.0, 1.0, size=(n, d))

    iu, ju = np.triu_indices(n, k=1)
    same = labels[iu] == labels[ju]
    p = np.where(same, intra_p, inter_p)
    keep = rng.random(iu.size) < p
    adjacency, _ = _symmetrize(iu[keep], ju[keep], n)

    graph = AttributedGraph(adjacency=adjacency, features=features,
                            labels=labels.astype(np.int64), num_classes=m)
    graph.validate()
    return graph
