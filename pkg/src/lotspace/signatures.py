"""Cluster activation signatures with KS tests and BH false-discovery control."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import kolmogorov

PERMUTATION_CUTOFF = 25   # effective sample size below which p is permuted
PERMUTATION_ROUNDS = 1000


@dataclass
class ClusterSignature:
    cluster_id: int
    marker_names: tuple
    z_by_group: dict          # group name -> standardized d-vector
    n_cells: dict             # group name -> pooled row count
    zero_sigma_markers: tuple = ()


@dataclass
class FeatureTestRow:
    feature: str
    ks_stat: float
    ks_p: float
    q: float
    sign: str
    significant: bool


def cluster_signature(fields, row_cluster, groups, marker_names, cluster_id=0):
    """Standardized per-group mean activation over one row cluster.

    ``fields`` is a list of m x d displacement matrices (one per sample),
    ``groups`` maps sample index -> group name. Pools the selected rows per
    group, then standardizes the group means against the global per-marker
    mean/std (population convention) scaled by sqrt(pooled rows).
    """
    row_cluster = np.asarray(row_cluster, dtype=int)
    if row_cluster.size == 0:
        raise ValueError("row cluster is empty")
    stacked = np.vstack(fields)                       # all samples, all atoms
    mu_global = stacked.mean(axis=0)
    sigma_global = stacked.std(axis=0)                # 1/N convention
    zero_sigma = sigma_global == 0

    by_group: dict = {}
    for i, f in enumerate(fields):
        by_group.setdefault(groups[i], []).append(np.asarray(f)[row_cluster])

    z_by_group = {}
    n_cells = {}
    for g, blocks in by_group.items():
        pooled = np.vstack(blocks)
        n = pooled.shape[0]
        x_group = pooled.mean(axis=0)
        z = np.zeros_like(x_group)
        ok = ~zero_sigma
        z[ok] = (x_group[ok] - mu_global[ok]) / (sigma_global[ok] / np.sqrt(n))
        z_by_group[g] = z
        n_cells[g] = n
    return ClusterSignature(cluster_id, tuple(marker_names), z_by_group, n_cells,
                            tuple(np.asarray(marker_names)[zero_sigma]))


def pooled_cluster_values(fields, row_cluster, groups):
    """Raw pooled rows per group for one cluster: group -> (n_g x d) matrix."""
    row_cluster = np.asarray(row_cluster, dtype=int)
    out: dict = {}
    for i, f in enumerate(fields):
        out.setdefault(groups[i], []).append(np.asarray(f)[row_cluster])
    return {g: np.vstack(b) for g, b in out.items()}


def ks_statistic(x, y):
    """Two-sample sup-difference of empirical CDFs."""
    x = np.sort(np.asarray(x, dtype=float).ravel())
    y = np.sort(np.asarray(y, dtype=float).ravel())
    if x.size == 0 or y.size == 0:
        raise ValueError("both samples must be nonempty")
    grid = np.concatenate([x, y])
    cdf_x = np.searchsorted(x, grid, side="right") / x.size
    cdf_y = np.searchsorted(y, grid, side="right") / y.size
    return float(np.abs(cdf_x - cdf_y).max())


def ks_two_sample(x, y, mode="auto", seed=0):
    """KS statistic and two-sided p-value.

    The asymptotic Kolmogorov distribution is used at effective size
    n_e = n_x * n_y / (n_x + n_y); below PERMUTATION_CUTOFF a seeded
    permutation p-value replaces it (mode="auto"). mode="asymptotic" or
    "permutation" forces one route.
    """
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    d = ks_statistic(x, y)
    n_e = x.size * y.size / (x.size + y.size)
    if mode == "asymptotic" or (mode == "auto" and n_e >= PERMUTATION_CUTOFF):
        p = float(kolmogorov(np.sqrt(n_e) * d))
    else:
        rng = np.random.default_rng(seed)
        pooled = np.concatenate([x, y])
        hits = 0
        for _ in range(PERMUTATION_ROUNDS):
            perm = rng.permutation(pooled.size)
            if ks_statistic(pooled[perm[:x.size]], pooled[perm[x.size:]]) >= d - 1e-15:
                hits += 1
        p = (hits + 1) / (PERMUTATION_ROUNDS + 1)
    return d, min(max(p, 0.0), 1.0)


def bh_fdr(pvals):
    """Benjamini-Hochberg step-up adjusted q-values, in the input order."""
    p = np.asarray(pvals, dtype=float).ravel()
    if p.size == 0:
        return np.array([])
    if np.any(p < 0) or np.any(p > 1):
        raise ValueError("p-values must lie in [0, 1]")
    n = p.size
    order = np.argsort(p, kind="stable")
    q_sorted = p[order] * n / np.arange(1, n + 1)
    q_sorted = np.minimum.accumulate(q_sorted[::-1])[::-1]
    q = np.empty(n)
    q[order] = np.minimum(q_sorted, 1.0)
    return q


def signature_report(signature, pooled_values, group_a, group_b,
                     fdr_threshold=0.05, seed=0):
    """Per-marker KS tests of group A vs group B pooled cluster values.

    Rows are sorted by q ascending; sign is the direction of the standardized
    group-A mean relative to group B.
    """
    a = pooled_values[group_a]
    b = pooled_values[group_b]
    names = signature.marker_names
    stats, pvals = [], []
    for k in range(len(names)):
        d, p = ks_two_sample(a[:, k], b[:, k], seed=seed + k)
        stats.append(d)
        pvals.append(p)
    qvals = bh_fdr(pvals)
    z_a = signature.z_by_group[group_a]
    z_b = signature.z_by_group[group_b]
    rows = [
        FeatureTestRow(names[k], stats[k], pvals[k], float(qvals[k]),
                       "+" if z_a[k] - z_b[k] > 0 else "-",
                       bool(qvals[k] <= fdr_threshold) and fdr_threshold > 0)
        for k in range(len(names))
    ]
    rows.sort(key=lambda r: (r.q, r.ks_p, r.feature))
    return rows
