"""Evaluation for imbalanced classification: accuracy, macro AUC-ROC, macro F1.

AUC uses the exact pairwise-ranking definition (ties count one half),
computed via average ranks; no trapezoidal approximation.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.stats import rankdata

log = logging.getLogger(__name__)


@dataclass
class EvalReport:
    accuracy: float
    macro_auc: float
    macro_f: float
    per_class: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"accuracy": self.accuracy, "macro_auc": self.macro_auc,
                "macro_f": self.macro_f, "per_class": self.per_class}


def accuracy(pred_class, true_class, mask) -> float:
    idx = np.asarray(mask, dtype=np.intp)
    if idx.size == 0:
        raise ValueError("accuracy: empty mask")
    pred = np.asarray(pred_class)[idx]
    true = np.asarray(true_class)[idx]
    return float((pred == true).mean())


def _binary_auc(scores: np.ndarray, positives: np.ndarray) -> float:
    """P(score of a positive > score of a negative), ties counting 1/2."""
    n_pos = int(positives.sum())
    n_neg = positives.size - n_pos
    ranks = rankdata(scores)
    rank_sum = ranks[positives].sum()
    u = rank_sum - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def macro_auc_roc(probs, true_class, mask) -> float:
    """Unweighted mean of one-vs-rest AUCs over classes present in the mask."""
    idx = np.asarray(mask, dtype=np.intp)
    if idx.size == 0:
        raise ValueError("macro_auc_roc: empty mask")
    p = np.asarray(probs, dtype=np.float64)[idx]
    y = np.asarray(true_class)[idx]
    m = p.shape[1]
    aucs = []
    for c in range(m):
        pos = y == c
        n_pos = int(pos.sum())
        if n_pos == 0 or n_pos == y.size:
            log.warning("macro_auc_roc: class %d absent or trivial in mask; skipped", c)
            continue
        aucs.append(_binary_auc(p[:, c], pos))
    if not aucs:
        raise ValueError("macro_auc_roc: no class has both positives and negatives")
    return float(np.mean(aucs))


def macro_f1(pred_class, true_class, mask) -> float:
    """Unweighted mean per-class F1 over classes present in the true labels."""
    idx = np.asarray(mask, dtype=np.intp)
    if idx.size == 0:
        raise ValueError("macro_f1: empty mask")
    pred = np.asarray(pred_class)[idx]
    true = np.asarray(true_class)[idx]
    f1s = []
    for c in np.unique(true):
        tp = int(((pred == c) & (true == c)).sum())
        fp = int(((pred == c) & (true != c)).sum())
        fn = int(((pred != c) & (true == c)).sum())
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        f1s.append(f1)
    return float(np.mean(f1s))


def evaluate(probs, true_class, mask) -> EvalReport:
    """Full report from predicted class probabilities over a node mask."""
    idx = np.asarray(mask, dtype=np.intp)
    p = np.asarray(probs, dtype=np.float64)
    pred = p.argmax(axis=1)
    true = np.asarray(true_class)
    per_class: dict = {}
    for c in np.unique(true[idx]):
        pm = pred[idx]
        tm = true[idx]
        tp = int(((pm == c) & (tm == c)).sum())
        fp = int(((pm == c) & (tm != c)).sum())
        fn = int(((pm != c) & (tm == c)).sum())
        precision = tp / (tp + fp) if tp + fp else 0.0
        recall = tp / (tp + fn) if tp + fn else 0.0
        f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
        pos = tm == c
        auc = _binary_auc(p[idx][:, c], pos) if 0 < pos.sum() < pos.size else float("nan")
        per_class[int(c)] = {"precision": precision, "recall": recall,
                             "f1": f1, "auc": auc}
    return EvalReport(
        accuracy=accuracy(pred, true, idx),
        macro_auc=macro_auc_roc(p, true, idx),
        macro_f=macro_f1(pred, true, idx),
        per_class=per_class,
    )
