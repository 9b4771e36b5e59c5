"""Partition-agreement metrics over integer label vectors.

ARI is the chance-adjusted pair-counting index from the contingency table;
NMI normalizes mutual information by the arithmetic mean of the marginal
entropies (in nats). Conventions: two single-cluster partitions agree
perfectly (ARI/NMI 1); a single-cluster prediction against a multi-cluster
truth scores 0 in both metrics.
"""

from __future__ import annotations

import numpy as np


def _contingency(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 1 or a.shape != b.shape:
        raise ValueError("label vectors must be 1-d and of equal length")
    if a.shape[0] < 1:
        raise ValueError("label vectors must be non-empty")
    _, ai = np.unique(a, return_inverse=True)
    _, bi = np.unique(b, return_inverse=True)
    table = np.zeros((ai.max() + 1, bi.max() + 1), dtype=np.int64)
    np.add.at(table, (ai, bi), 1)
    return table


def _comb2(x):
    return x * (x - 1) / 2.0


def ari(a, b) -> float:
    """Adjusted Rand index in [-1, 1]."""
    table = _contingency(a, b)
    n = table.sum()
    sum_ij = _comb2(table).sum()
    sum_a = _comb2(table.sum(axis=1)).sum()
    sum_b = _comb2(table.sum(axis=0)).sum()
    total = _comb2(n)
    expected = sum_a * sum_b / total if total > 0 else 0.0
    denom = 0.5 * (sum_a + sum_b) - expected
    if denom == 0.0:
        # both partitions degenerate in the same way; identical => perfect
        return 1.0 if sum_ij == sum_a == sum_b else 0.0
    return float((sum_ij - expected) / denom)


def nmi(a, b) -> float:
    """Normalized mutual information in [0, 1], arithmetic-mean normalization."""
    table = _contingency(a, b)
    n = table.sum()
    pa = table.sum(axis=1) / n
    pb = table.sum(axis=0) / n
    ha = -np.sum(pa[pa > 0] * np.log(pa[pa > 0]))
    hb = -np.sum(pb[pb > 0] * np.log(pb[pb > 0]))
    if ha == 0.0 and hb == 0.0:
        return 1.0  # both single-cluster: identical partitions
    if ha == 0.0 or hb == 0.0:
        return 0.0
    pj = table / n
    mask = pj > 0
    outer = np.outer(pa, pb)
    info = float(np.sum(pj[mask] * np.log(pj[mask] / outer[mask])))
    value = info / ((ha + hb) / 2.0)
    return float(min(1.0, max(0.0, value)))
