"""Linear optimal transport embeddings against a shared reference.

Each sample distribution is transported to a fixed reference; the per-atom
displacements of the barycentric map, flattened reference-point-major, give a
fixed-length Euclidean vector. All embedding-space algebra (barycenter,
interpolation, pre-image) requires identical reference hashes.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np
from sklearn.cluster import KMeans

from .data_model import PointCloud
from . import ot_solver


class DegenerateMapError(RuntimeError):
    """A reference atom received zero mass under the transport plan."""


class ReferenceMismatchError(ValueError):
    """Embeddings built against different references were combined."""


def _hash_reference(points, weights):
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(points, dtype=float).tobytes())
    h.update(np.ascontiguousarray(weights, dtype=float).tobytes())
    return h.hexdigest()[:16]


@dataclass
class Reference:
    points: np.ndarray       # m x d
    weights: np.ndarray      # m, sums to 1
    provenance: dict = field(default_factory=dict)
    marker_names: tuple = ()

    def __post_init__(self):
        self.points = np.atleast_2d(np.asarray(self.points, dtype=float))
        self.weights = np.asarray(self.weights, dtype=float).ravel()
        if self.points.shape[0] < 2:
            raise ValueError("reference needs at least 2 points")
        if abs(self.weights.sum() - 1.0) > 1e-9 or np.any(self.weights < 0):
            raise ValueError("reference weights must be nonnegative and sum to 1")
        self.hash = _hash_reference(self.points, self.weights)

    @property
    def m(self):
        return self.points.shape[0]

    @property
    def d(self):
        return self.points.shape[1]


@dataclass
class LOTEmbedding:
    z: np.ndarray            # length m*d, row-major over (reference atom, marker)
    reference_hash: str
    m: int
    d: int
    group_key: tuple = ()
    label: object = None

    def __post_init__(self):
        self.z = np.asarray(self.z, dtype=float).ravel()
        if self.z.size != self.m * self.d:
            raise ValueError(f"embedding length {self.z.size} != m*d = {self.m * self.d}")
        if not np.all(np.isfinite(self.z)):
            raise ValueError("non-finite embedding values")

    def displacement_field(self):
        """View of z as the m x d displacement matrix."""
        return self.z.reshape(self.m, self.d)


def build_reference(pool, m, method="kmeans", seed=0, max_pool=100_000):
    """Construct the shared reference from a pool of point clouds.

    kmeans: k-means++ seeded centers, tol 1e-4, up to 300 iterations.
    subsample: draw m pooled cells without replacement.
    """
    if m < 2:
        raise ValueError("reference size must be at least 2")
    cells = np.vstack([c.points for c in pool])
    if cells.shape[0] < m:
        raise ValueError(f"pool has {cells.shape[0]} cells, fewer than m={m}")
    rng = np.random.default_rng(seed)
    if cells.shape[0] > max_pool:
        sel = rng.choice(cells.shape[0], size=max_pool, replace=False)
        cells = cells[np.sort(sel)]

    if method == "kmeans":
        km = KMeans(n_clusters=m, init="k-means++", n_init=1, max_iter=300,
                    tol=1e-4, random_state=int(seed))
        km.fit(cells)
        pts = km.cluster_centers_
    elif method == "subsample":
        sel = rng.choice(cells.shape[0], size=m, replace=False)
        pts = cells[np.sort(sel)]
    else:
        raise ValueError(f"unknown reference method {method!r}")

    marker_names = getattr(pool[0], "marker_names", ())
    return Reference(pts, np.full(m, 1.0 / m),
                     provenance={"method": method, "seed": int(seed), "m": int(m)},
                     marker_names=marker_names)


def barycentric_map(ref, target, plan):
    """Conditional mean of target points given each reference atom.

    T(x_j) = sum_i pi_ji y_i / sum_i pi_ji.
    """
    pi = plan.coupling
    row_mass = pi.sum(axis=1)
    bad = np.flatnonzero(row_mass <= 0)
    if bad.size:
        raise DegenerateMapError(
            f"reference atom(s) {bad.tolist()} received zero transport mass"
        )
    return (pi @ target.points) / row_mass[:, None]


def embed(ref, sample, solver="sinkhorn", epsilon=None, max_iter=10000,
          tol_marginal=1e-7):
    """LOT-embed one sample: solve OT from reference to sample, take the
    barycentric displacement field, flatten row-major."""
    if sample.d != ref.d:
        raise ValueError(f"marker dimension mismatch: sample d={sample.d}, reference d={ref.d}")
    C = ot_solver.cost_matrix(ref.points, sample.points)
    if solver == "sinkhorn":
        plan = ot_solver.sinkhorn(ref.weights, sample.weights, C,
                                  epsilon=epsilon, max_iter=max_iter,
                                  tol_marginal=tol_marginal)
    elif solver == "exact":
        plan = ot_solver.exact_ot(ref.weights, sample.weights, C)
    else:
        raise ValueError(f"unknown solver {solver!r}")
    T = barycentric_map(ref, sample, plan)
    u = T - ref.points
    return LOTEmbedding(u.ravel(), ref.hash, ref.m, ref.d,
                        group_key=sample.group_key, label=sample.label)


def preimage(ref, embedding):
    """Push the reference forward through an embedded map."""
    if embedding.reference_hash != ref.hash:
        raise ReferenceMismatchError("embedding was built against a different reference")
    pts = ref.points + embedding.displacement_field()
    return PointCloud(pts, ref.weights.copy())


def _check_same_reference(embeddings):
    hashes = {e.reference_hash for e in embeddings}
    if len(hashes) != 1:
        raise ReferenceMismatchError(f"mixed reference hashes: {sorted(hashes)}")


def barycenter(embeddings, weights=None):
    """Weighted arithmetic mean in embedding space."""
    if not embeddings:
        raise ValueError("empty embedding list")
    _check_same_reference(embeddings)
    if weights is None:
        weights = np.full(len(embeddings), 1.0 / len(embeddings))
    weights = np.asarray(weights, dtype=float).ravel()
    if weights.size != len(embeddings) or abs(weights.sum() - 1.0) > 1e-9:
        raise ValueError("weights must match list length and sum to 1")
    Z = np.stack([e.z for e in embeddings])
    e0 = embeddings[0]
    return LOTEmbedding(weights @ Z, e0.reference_hash, e0.m, e0.d)


def interpolate(z_a, z_b, t):
    """(1-t) * z_a + t * z_b along the LOT-space segment."""
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t={t} outside [0, 1]")
    _check_same_reference([z_a, z_b])
    return LOTEmbedding((1.0 - t) * z_a.z + t * z_b.z,
                        z_a.reference_hash, z_a.m, z_a.d)


# ---------------------------------------------------------------------------
# serialization

BINARY_MAGIC = b"LOT1"


def write_embeddings_csv(path, embeddings, key_names=()):
    """One row per sample: group-key columns then the embedding values."""
    import csv
    if embeddings:
        _check_same_reference(embeddings)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        p = embeddings[0].z.size if embeddings else 0
        header = list(key_names) + [f"z{i}" for i in range(p)]
        w.writerow(header)
        for e in embeddings:
            w.writerow(list(e.group_key) + [repr(float(v)) for v in e.z])


def write_embeddings_binary(path, embeddings):
    """Compact layout: magic "LOT1", little-endian u32 m, u32 d, then f64 rows."""
    if not embeddings:
        raise ValueError("nothing to write")
    _check_same_reference(embeddings)
    m, d = embeddings[0].m, embeddings[0].d
    with open(path, "wb") as fh:
        fh.write(BINARY_MAGIC)
        fh.write(np.asarray([m, d], dtype="<u4").tobytes())
        for e in embeddings:
            fh.write(np.ascontiguousarray(e.z, dtype="<f8").tobytes())


def read_embeddings_binary(path, reference_hash=""):
    """Inverse of write_embeddings_binary; returns a list of LOTEmbedding."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != BINARY_MAGIC:
            raise ValueError(f"bad magic {magic!r}, expected {BINARY_MAGIC!r}")
        m, d = np.frombuffer(fh.read(8), dtype="<u4")
        m, d = int(m), int(d)
        body = fh.read()
    vals = np.frombuffer(body, dtype="<f8")
    if vals.size % (m * d):
        raise ValueError("truncated embedding file")
    rows = vals.reshape(-1, m * d)
    return [LOTEmbedding(r.copy(), reference_hash, m, d) for r in rows]
