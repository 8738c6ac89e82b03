"""Clustering agreement, a k-means clusterer for factor rows, recommender MAE and CV folds."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ContractError


@dataclass(frozen=True)
class PairCounts:
    """Co-clustering pair counts.

    ``a``: together in both labelings; ``b``: together in the reference only;
    ``c``: together in the prediction only.
    """

    a: int
    b: int
    c: int


@dataclass(frozen=True)
class ClusterMetrics:
    """Jaccard, Fowlkes-Mallows and F1 scores. ``None`` marks a degenerate denominator."""

    jc: Optional[float]
    fm: Optional[float]
    f1: Optional[float]


def _comb2(x):
    x = np.asarray(x, dtype=np.int64)
    return int((x * (x - 1) // 2).sum())


def pair_counts(predicted, truth):
    """Pair counts from the contingency table of two labelings."""
    predicted = np.asarray(predicted)
    truth = np.asarray(truth)
    if predicted.shape != truth.shape or predicted.ndim != 1:
        raise ContractError(f"label vectors differ in shape: {predicted.shape} vs {truth.shape}")
    if predicted.size < 2:
        raise ContractError("need at least two points")
    _, p_idx = np.unique(predicted, return_inverse=True)
    _, t_idx = np.unique(truth, return_inverse=True)
    table = np.zeros((p_idx.max() + 1, t_idx.max() + 1), dtype=np.int64)
    np.add.at(table, (p_idx, t_idx), 1)
    both = _comb2(table)
    same_truth = _comb2(table.sum(axis=0))
    same_pred = _comb2(table.sum(axis=1))
    return PairCounts(both, same_truth - both, same_pred - both)


def cluster_metrics(pc: PairCounts):
    a, b, c = pc.a, pc.b, pc.c
    jc = a / (a + b + c) if a + b + c > 0 else None
    fm = math.sqrt((a / (a + b)) * (a / (a + c))) if (a + b > 0 and a + c > 0) else None
    f1_den = 2 * a * a + a * c + a * b
    f1 = 2 * a * a / f1_den if f1_den > 0 else None
    return ClusterMetrics(jc, fm, f1)


def _wcss(X, labels, centers):
    return float(((X - centers[labels]) ** 2).sum())


def _assign(X, centers):
    d = ((X[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    # argmin takes the first (lowest-index) centre on ties
    return d.argmin(axis=1), d


def _kmeans_pp(X, k, rng):
    P = X.shape[0]
    centers = np.empty((k, X.shape[1]))
    centers[0] = X[rng.integers(P)]
    closest = ((X - centers[0]) ** 2).sum(axis=1)
    for j in range(1, k):
        tot = closest.sum()
        if tot <= 0:
            idx = rng.integers(P)
        else:
            idx = int(np.searchsorted(np.cumsum(closest), rng.random() * tot, side="right"))
            idx = min(idx, P - 1)
        centers[j] = X[idx]
        closest = np.minimum(closest, ((X - centers[j]) ** 2).sum(axis=1))
    return centers


def _lloyd(X, centers, max_iter):
    k = centers.shape[0]
    labels, d = _assign(X, centers)
    for _ in range(max_iter):
        new_centers = centers.copy()
        for j in range(k):
            members = labels == j
            if members.any():
                new_centers[j] = X[members].mean(axis=0)
            else:
                # empty cluster: reseed at the point farthest from its centre
                far = int(d[np.arange(len(X)), labels].argmax())
                new_centers[j] = X[far]
                labels[far] = j
        new_labels, d = _assign(X, new_centers)
        centers = new_centers
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
    return labels, centers


def kmeans_assign(rows, n_clusters, seed=0, restarts=10, max_iter=300):
    """Lloyd's algorithm from k-means++ starts; best of ``restarts`` by within-cluster SS."""
    X = np.asarray(rows, dtype=float)
    if X.ndim != 2:
        raise ContractError("rows must be a 2-D array")
    P = X.shape[0]
    if not 1 <= n_clusters <= P:
        raise ContractError(f"n_clusters must be in [1, {P}], got {n_clusters}")
    rng = np.random.default_rng(seed)
    best_labels, best_score = None, math.inf
    for _ in range(restarts):
        labels, centers = _lloyd(X, _kmeans_pp(X, n_clusters, rng), max_iter)
        score = _wcss(X, labels, centers)
        if score < best_score:
            best_labels, best_score = labels, score
    return best_labels


def mae(Y_rec, Y_test, test_mask):
    """Unnormalised L1 error over the held-out entries."""
    Y_rec = np.asarray(Y_rec, dtype=float)
    Y_test = np.asarray(Y_test, dtype=float)
    test_mask = np.asarray(test_mask)
    if not (Y_rec.shape == Y_test.shape == test_mask.shape):
        raise ContractError("reconstruction, test data and mask must share a shape")
    sel = test_mask != 0
    if not sel.any():
        raise ContractError("test mask selects no entries")
    return float(np.abs(Y_rec[sel] - Y_test[sel]).sum())


def cv_split(ratings, folds, seed=0):
    """Partition the observed ratings into ``folds`` disjoint test sets.

    ``ratings`` is a :class:`~dibpnmf.dataio.RatingTriplets` (or anything with
    ``rows``, ``cols`` and ``shape``). Returns ``[(train_mask, test_mask), ...]``
    with int8 masks; each training mask is the fold's complement within the
    observed entries.
    """
    rows = np.asarray(ratings.rows)
    cols = np.asarray(ratings.cols)
    n = rows.size
    if folds < 2:
        raise ContractError("need at least 2 folds")
    if folds > n:
        raise ContractError(f"{folds} folds requested for {n} ratings")
    order = np.random.default_rng(seed).permutation(n)
    observed = np.zeros(ratings.shape, dtype=np.int8)
    observed[rows, cols] = 1
    out = []
    for part in np.array_split(order, folds):
        test = np.zeros(ratings.shape, dtype=np.int8)
        test[rows[part], cols[part]] = 1
        out.append((observed - test, test))
    return out
