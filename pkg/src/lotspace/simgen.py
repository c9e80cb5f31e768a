"""Synthetic cohorts: Gaussian-mixture point clouds under class perturbations."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data_model import PointCloud

JITTER_FRACTION = 0.1   # per-sample shift as a fraction of the class separation


@dataclass
class MixtureSpec:
    means: np.ndarray          # k x d component means
    covariances: np.ndarray    # k x d x d SPD matrices
    proportions: np.ndarray    # k, sums to 1

    def __post_init__(self):
        self.means = np.atleast_2d(np.asarray(self.means, dtype=float))
        self.covariances = np.asarray(self.covariances, dtype=float)
        if self.covariances.ndim == 2:
            self.covariances = self.covariances[None]
        self.proportions = np.asarray(self.proportions, dtype=float).ravel()
        if abs(self.proportions.sum() - 1.0) > 1e-9:
            raise ValueError("mixture proportions must sum to 1")
        for S in self.covariances:
            if not np.allclose(S, S.T):
                raise ValueError("covariance must be symmetric")
            if np.any(np.linalg.eigvalsh(S) < -1e-12):
                raise ValueError("covariance must be positive semidefinite")

    @property
    def d(self):
        return self.means.shape[1]


@dataclass
class CohortSpec:
    mixture: MixtureSpec
    n_samples_per_class: int
    cells_per_sample: int
    shift: np.ndarray | None = None       # class-1 perturbation
    rotation: np.ndarray | None = None
    scale: float | None = None
    jitter: bool = True
    seed: int = 0


def sample_cloud(mixture, n, seed, group_key=(), label=None):
    """Draw n iid cells from the mixture; deterministic under the seed."""
    if n < 1:
        raise ValueError("cloud size must be at least 1")
    rng = np.random.default_rng(seed)
    comps = rng.choice(mixture.proportions.size, size=n, p=mixture.proportions)
    pts = np.empty((n, mixture.d))
    for k in range(mixture.proportions.size):
        mask = comps == k
        if mask.any():
            pts[mask] = rng.multivariate_normal(
                mixture.means[k], mixture.covariances[k], size=int(mask.sum()),
                method="svd")
    return PointCloud(pts, np.full(n, 1.0 / n), group_key=group_key, label=label)


def perturb_cloud(cloud, shift=None, rotation=None, scale=None):
    """Apply x -> R x (+ c) or s * x pointwise; weights unchanged."""
    pts = cloud.points
    if rotation is not None:
        R = np.asarray(rotation, dtype=float)
        if np.abs(R.T @ R - np.eye(R.shape[0])).max() > 1e-10:
            raise ValueError("rotation matrix must be orthogonal")
        pts = pts @ R.T
    if scale is not None:
        pts = scale * pts
    if shift is not None:
        pts = pts + np.asarray(shift, dtype=float)
    return PointCloud(pts, cloud.weights.copy(), cloud.group_key, cloud.label)


def make_two_class_cohort(spec):
    """Labeled cohort: class 0 = base mixture, class 1 = perturbed draws.

    Per-sample jitter (a small random shift, JITTER_FRACTION of the class
    separation) keeps within-class samples from being identical clouds.
    Sample i uses derived seed spec.seed + i.
    """
    clouds = []
    shift = np.zeros(spec.mixture.d) if spec.shift is None else np.asarray(spec.shift, dtype=float)
    jitter_scale = JITTER_FRACTION * np.linalg.norm(shift)
    idx = 0
    for label in (0, 1):
        for s in range(spec.n_samples_per_class):
            seed = spec.seed + idx
            cloud = sample_cloud(spec.mixture, spec.cells_per_sample, seed,
                                 group_key=(f"sample{idx:03d}", str(label)),
                                 label=label)
            if label == 1:
                cloud = perturb_cloud(cloud, shift=spec.shift,
                                      rotation=spec.rotation, scale=spec.scale)
            if spec.jitter and jitter_scale > 0:
                rng = np.random.default_rng(10_000_019 + seed)
                c = rng.normal(0.0, jitter_scale / np.sqrt(spec.mixture.d),
                               size=spec.mixture.d)
                cloud = perturb_cloud(cloud, shift=c)
            clouds.append(cloud)
            idx += 1
    return clouds


def cohort_to_rows(clouds, marker_names):
    """Flatten a cohort to (meta rows, marker matrix) in the canonical
    cell-table layout: columns Sample, Label + markers."""
    meta, values = [], []
    for c in clouds:
        sample_id = c.group_key[0] if c.group_key else "sample"
        for x in c.points:
            meta.append((sample_id, str(c.label)))
            values.append(x)
    return meta, np.asarray(values)
