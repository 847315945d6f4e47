"""Partition-quality metrics: pair-counting F1 and normalized mutual information.

Both are computed from the truth x prediction contingency table and are
invariant to relabeling of either argument.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class ContingencyTable:
    counts: np.ndarray  # (U, V) ints
    truth_sizes: np.ndarray  # (U,)
    pred_sizes: np.ndarray  # (V,)
    n: int


def contingency_table(truth, pred) -> ContingencyTable:
    truth = np.asarray(truth)
    pred = np.asarray(pred)
    if truth.shape != pred.shape or truth.ndim != 1:
        raise ValueError("labelings must be equal-length 1-d arrays")
    _, ti = np.unique(truth, return_inverse=True)
    _, pi = np.unique(pred, return_inverse=True)
    u = int(ti.max()) + 1
    v = int(pi.max()) + 1
    counts = np.bincount(ti * v + pi, minlength=u * v).reshape(u, v)
    return ContingencyTable(
        counts=counts,
        truth_sizes=counts.sum(axis=1),
        pred_sizes=counts.sum(axis=0),
        n=truth.shape[0],
    )


def _pairs(counts) -> int:
    counts = np.asarray(counts, dtype=np.int64)
    return int(np.sum(counts * (counts - 1) // 2))


def pairwise_f1(truth, pred) -> float:
    """F-measure over the N(N-1)/2 point pairs.

    A pair is a true positive when it is co-clustered in both partitions;
    precision and recall follow from the pair counts. If both partitions have
    no co-clustered pairs at all (all singletons) the partitions agree on
    every pair and the score is 1.
    """
    table = contingency_table(truth, pred)
    if table.n < 2:
        raise ValueError("need at least two samples to count pairs")
    tp = _pairs(table.counts)
    tp_fp = _pairs(table.pred_sizes)
    tp_fn = _pairs(table.truth_sizes)
    if tp_fp == 0 and tp_fn == 0:
        return 1.0
    if tp == 0:
        return 0.0
    precision = tp / tp_fp
    recall = tp / tp_fn
    return 2 * precision * recall / (precision + recall)


def _entropy(sizes, n) -> float:
    s = sizes[sizes > 0].astype(float)
    return float(np.sum((s / n) * (np.log(n) - np.log(s))))


def nmi(truth, pred) -> float:
    """Mutual information normalized by the mean of the two label entropies.

    Natural log; empty cells contribute nothing (0 ln 0 = 0). Two constant
    partitions are identical, hence 1; if only one partition is constant the
    mutual information, and so the score, is 0.
    """
    table = contingency_table(truth, pred)
    if table.n < 2:
        raise ValueError("need at least two samples")
    n = table.n
    h_truth = _entropy(table.truth_sizes, n)
    h_pred = _entropy(table.pred_sizes, n)
    if h_truth == 0.0 and h_pred == 0.0:
        return 1.0
    denom = 0.5 * (h_truth + h_pred)

    counts = table.counts
    nz = counts > 0
    c = counts[nz].astype(float)
    outer_t = np.broadcast_to(table.truth_sizes[:, None], counts.shape)[nz].astype(float)
    outer_p = np.broadcast_to(table.pred_sizes[None, :], counts.shape)[nz].astype(float)
    # grouped so that identical partitions give bitwise info == entropy
    info = float(
        np.sum((c / n) * ((np.log(c) - np.log(outer_t)) + (np.log(n) - np.log(outer_p))))
    )
    value = info / denom
    return float(min(max(value, 0.0), 1.0))
