"""Spectral co-clustering and biclustering of weight-style matrices.

Co-clustering treats |W| as a bipartite graph between reference atoms (rows)
and markers (columns) and partitions both sides from the top singular vectors
of the degree-normalized matrix. The biclustering variant keeps the sign
structure of the input when computing spectral features, so checkerboards of
opposite-signed blocks are still separable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.cluster import KMeans

DEGREE_FLOOR = 1e-12
KMEANS_RESTARTS = 20


class BiclusterFitError(RuntimeError):
    """A fitted cluster came out empty; try smaller K or L."""


@dataclass
class BiclusterAssignment:
    row_labels: np.ndarray   # m values in 0..K-1
    col_labels: np.ndarray   # d values in 0..L-1
    K: int
    L: int

    def row_cluster(self, k):
        return np.flatnonzero(self.row_labels == k)

    def col_cluster(self, l):
        return np.flatnonzero(self.col_labels == l)


def _kmeans_labels(features, k, seed):
    if k == 1:
        return np.zeros(features.shape[0], dtype=int)
    km = KMeans(n_clusters=k, init="k-means++", n_init=KMEANS_RESTARTS,
                random_state=int(seed))
    return km.fit_predict(features)


def _spectral_features(A, K, L):
    """Degree-normalize, SVD, return row/col spectral coordinates.

    ``A`` supplies the affinities whose absolute values define degrees;
    the normalized matrix itself may be signed.
    """
    r = np.abs(A).sum(axis=1) + DEGREE_FLOOR
    c = np.abs(A).sum(axis=0) + DEGREE_FLOOR
    dr = 1.0 / np.sqrt(r)
    dc = 1.0 / np.sqrt(c)
    An = dr[:, None] * A * dc[None, :]
    U, s, Vt = np.linalg.svd(An, full_matrices=False)
    return dr, dc, U, Vt


def _validate(labels, k, side):
    counts = np.bincount(labels, minlength=k)
    if np.any(counts == 0):
        raise BiclusterFitError(
            f"empty {side} cluster with K/L too large; reduce the requested count"
        )


def spectral_cocluster(W, K, L, seed=0):
    """Bipartite spectral partition of |W| into K row and L column clusters.

    Singular vectors 2..(1 + ceil(log2(max(K, L)))) of the normalized
    affinity provide the embedding; both sides are clustered by seeded
    k-means with restarts, so the result is deterministic for a fixed seed.
    """
    W = np.asarray(W, dtype=float)
    m, d = W.shape
    if not (1 <= K <= m and 1 <= L <= d):
        raise ValueError(f"need 1 <= K <= {m} and 1 <= L <= {d}")
    if not np.any(W):
        raise ValueError("cannot co-cluster an all-zero matrix")
    if K == 1 and L == 1:
        return BiclusterAssignment(np.zeros(m, dtype=int), np.zeros(d, dtype=int), 1, 1)

    A = np.abs(W)
    dr, dc, U, Vt = _spectral_features(A, K, L)
    n_vec = int(np.ceil(np.log2(max(K, L)))) + 1
    hi = min(1 + n_vec, min(m, d))
    sel = slice(1, max(hi, 2))
    row_feats = dr[:, None] * U[:, sel]
    col_feats = dc[:, None] * Vt.T[:, sel]

    row_labels = _kmeans_labels(row_feats, K, seed)
    col_labels = _kmeans_labels(col_feats, L, seed + 1)
    _validate(row_labels, K, "row")
    _validate(col_labels, L, "column")
    return BiclusterAssignment(row_labels, col_labels, K, L)


def spectral_bicluster(M, K, L, seed=0):
    """Checkerboard-style partition that respects signed values.

    Degrees come from |M| but the normalized signed matrix is decomposed, so
    the leading singular vectors (including the first) carry the block sign
    pattern; row/col projections are clustered by seeded k-means.
    """
    M = np.asarray(M, dtype=float)
    m, d = M.shape
    if not (1 <= K <= m and 1 <= L <= d):
        raise ValueError(f"need 1 <= K <= {m} and 1 <= L <= {d}")
    if K == 1 and L == 1:
        return BiclusterAssignment(np.zeros(m, dtype=int), np.zeros(d, dtype=int), 1, 1)
    if not np.any(M):
        raise ValueError("cannot bicluster an all-zero matrix")

    dr, dc, U, Vt = _spectral_features(M, K, L)
    n_vec = int(np.ceil(np.log2(max(K, L)))) + 1
    hi = min(n_vec, min(m, d))
    sel = slice(0, max(hi, 1))
    row_feats = dr[:, None] * U[:, sel]
    col_feats = dc[:, None] * Vt.T[:, sel]

    row_labels = _kmeans_labels(row_feats, K, seed)
    col_labels = _kmeans_labels(col_feats, L, seed + 1)
    _validate(row_labels, K, "row")
    _validate(col_labels, L, "column")
    return BiclusterAssignment(row_labels, col_labels, K, L)


def bicluster_importance(W, assignment):
    """K x L grid of mean absolute weight per bicluster."""
    W = np.asarray(W, dtype=float)
    if W.shape != (assignment.row_labels.size, assignment.col_labels.size):
        raise ValueError("assignment does not match matrix shape")
    A = np.abs(W)
    grid = np.zeros((assignment.K, assignment.L))
    for k in range(assignment.K):
        rows = assignment.row_cluster(k)
        for l in range(assignment.L):
            cols = assignment.col_cluster(l)
            grid[k, l] = A[np.ix_(rows, cols)].mean()
    return grid


def reorder_heatmap(W, assignment):
    """Rows/cols sorted by (cluster label, original index).

    Returns (permuted matrix, row order, col order).
    """
    W = np.asarray(W, dtype=float)
    if W.shape != (assignment.row_labels.size, assignment.col_labels.size):
        raise ValueError("assignment does not match matrix shape")
    row_order = np.lexsort((np.arange(W.shape[0]), assignment.row_labels))
    col_order = np.lexsort((np.arange(W.shape[1]), assignment.col_labels))
    return W[np.ix_(row_order, col_order)], row_order, col_order
