"""Clustering evaluation: adjusted Rand index, posterior similarity,
Binder-loss point estimate and the posterior over the number of clusters.
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .sampler import ChainTrace


def adjusted_rand_index(a, b) -> float:
    """Chance-corrected pair-counting agreement of two labelings.

    Computed from exact integer pair counts; 1.0 for identical partitions
    (up to relabeling), 0 expected under independent random labelings.
    """
    a = np.asarray(a).ravel()
    b = np.asarray(b).ravel()
    if a.size != b.size:
        raise DataError(f"label vectors differ in length: {a.size} vs {b.size}")
    if a.size < 2:
        raise DataError("need at least two observations")
    n = int(a.size)
    joint = Counter(zip(a.tolist(), b.tolist()))
    rows = Counter(a.tolist())
    cols = Counter(b.tolist())
    comb = lambda m: m * (m - 1) // 2
    sum_ij = sum(comb(c) for c in joint.values())
    sum_a = sum(comb(c) for c in rows.values())
    sum_b = sum(comb(c) for c in cols.values())
    total = comb(n)
    num = 2 * (total * sum_ij - sum_a * sum_b)
    den = total * (sum_a + sum_b) - 2 * sum_a * sum_b
    if den == 0:
        return 1.0  # both partitions trivial and identical
    return num / den


def posterior_similarity(trace: ChainTrace) -> np.ndarray:
    """Pairwise co-clustering frequency over the retained sweeps."""
    if not trace.records:
        raise DataError("empty trace")
    n = trace.n
    sim = np.zeros((n, n))
    for rec in trace.records:
        sim += rec.labels[:, None] == rec.labels[None, :]
    sim /= len(trace.records)
    return sim


def binder_loss(labels, similarity: np.ndarray) -> float:
    """Pairwise disagreement of a partition against a similarity matrix."""
    labels = np.asarray(labels)
    iu = np.triu_indices(labels.size, 1)
    s = similarity[iu]
    same = (labels[:, None] == labels[None, :])[iu]
    return float(s.sum() + (same * (1.0 - 2.0 * s)).sum())


def map_partition(trace: ChainTrace) -> np.ndarray:
    """Point-estimate partition: the sampled partition minimizing Binder loss
    against the posterior similarity matrix; ties break to the earliest sweep.
    """
    sim = posterior_similarity(trace)
    best_labels = None
    best_loss = math.inf
    seen: set = set()
    for rec in trace.records:
        key = rec.labels.tobytes()
        if key in seen:
            continue
        seen.add(key)
        loss = binder_loss(rec.labels, sim)
        if loss < best_loss:
            best_loss = loss
            best_labels = rec.labels
    return best_labels.copy()


@dataclass(frozen=True)
class KPosterior:
    """Normalized histogram of the cluster count across retained sweeps."""

    freqs: dict
    mode: int

    def __getitem__(self, k: int) -> float:
        return self.freqs.get(k, 0.0)


def k_posterior(trace: ChainTrace) -> KPosterior:
    if not trace.records:
        raise DataError("empty trace")
    counts = Counter(int(r.k) for r in trace.records)
    total = sum(counts.values())
    freqs = {k: c / total for k, c in sorted(counts.items())}
    best = max(counts.values())
    mode = min(k for k, c in counts.items() if c == best)
    return KPosterior(freqs=freqs, mode=mode)


def sign_test_pvalue(a, b) -> float:
    """One-sided sign test that paired values in ``a`` exceed those in ``b``.

    Ties are dropped; the p-value is P(Binomial(m, 1/2) >= wins).
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise DataError("paired samples must have equal length")
    wins = int(np.sum(a > b))
    losses = int(np.sum(a < b))
    m = wins + losses
    if m == 0:
        return 1.0
    return sum(math.comb(m, k) for k in range(wins, m + 1)) / 2.0**m


def lower_median(values) -> float:
    """Median with the lower-median convention for even-length inputs."""
    vals = sorted(float(v) for v in values)
    if not vals:
        raise DataError("median of empty sequence")
    return vals[(len(vals) - 1) // 2]
