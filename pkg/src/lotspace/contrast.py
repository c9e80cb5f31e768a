"""Treatment-contrast analysis: block normalization, delta matrix, SVD,
and Marchenko-Pastur bulk-edge outlier detection."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .lot import LOTEmbedding, ReferenceMismatchError

OUTLIER_MARGIN = 0.02
SIGMA2_FLOOR = 1e-12


@dataclass
class DeltaMatrix:
    rows: np.ndarray        # B x p
    triplet_keys: list      # (block key, t1, t2, combo) per row
    reference_hash: str

    @property
    def B(self):
        return self.rows.shape[0]

    @property
    def p(self):
        return self.rows.shape[1]


@dataclass
class SpectrumReport:
    singular_values: np.ndarray      # s_i of un-centered delta
    centered_singular_values: np.ndarray
    eigenvalues: np.ndarray          # s_i(D)^2 / (B-1), descending
    mp_lower: float
    mp_upper: float
    sigma2: float
    gamma: float
    margin: float
    outliers: list

    def to_dict(self):
        return {
            "singular_values": self.singular_values.tolist(),
            "centered_singular_values": self.centered_singular_values.tolist(),
            "eigenvalues": self.eigenvalues.tolist(),
            "mp_lower": self.mp_lower,
            "mp_upper": self.mp_upper,
            "sigma2": self.sigma2,
            "gamma": self.gamma,
            "margin": self.margin,
            "outliers": list(self.outliers),
        }


def _default_block(key):
    return tuple(key[:-1])


def _default_treatment(key):
    return key[-1]


def block_normalize(embeddings, control_label, block_of=_default_block,
                    treatment_of=_default_treatment):
    """Subtract each block's mean control embedding from its other members.

    Controls are dropped from the output; blocks without a control pass
    through unchanged and are flagged. Returns (normalized embeddings,
    report dict with flagged block keys and the dropped-control count).
    """
    blocks: dict = {}
    for e in embeddings:
        blocks.setdefault(block_of(e.group_key), []).append(e)

    out = []
    flagged = []
    dropped_controls = 0
    for key in sorted(blocks):
        members = blocks[key]
        controls = [e for e in members if treatment_of(e.group_key) == control_label]
        others = [e for e in members if treatment_of(e.group_key) != control_label]
        if controls:
            mean_ctrl = np.mean([e.z for e in controls], axis=0)
            dropped_controls += len(controls)
            for e in others:
                out.append(LOTEmbedding(e.z - mean_ctrl, e.reference_hash,
                                        e.m, e.d, e.group_key, e.label))
        else:
            flagged.append(key)
            out.extend(others)
    return out, {"blocks_without_control": flagged,
                 "controls_dropped": dropped_controls}


def build_delta(embeddings, triplet_spec, block_of=_default_block,
                treatment_of=_default_treatment):
    """Contrast rows z_combo - (z_t1 + z_t2) / 2, one per complete block.

    ``triplet_spec`` is (t1, t2, combo) treatment labels. Blocks missing any
    arm are skipped and reported, never imputed. Returns (DeltaMatrix,
    skipped block keys).
    """
    t1, t2, combo = triplet_spec
    hashes = {e.reference_hash for e in embeddings}
    if len(hashes) > 1:
        raise ReferenceMismatchError(f"mixed reference hashes: {sorted(hashes)}")

    blocks: dict = {}
    for e in embeddings:
        blocks.setdefault(block_of(e.group_key), {}).setdefault(
            treatment_of(e.group_key), []).append(e)

    rows, keys, skipped = [], [], []
    for key in sorted(blocks):
        arms = blocks[key]
        if all(t in arms for t in (t1, t2, combo)):
            z1 = np.mean([e.z for e in arms[t1]], axis=0)
            z2 = np.mean([e.z for e in arms[t2]], axis=0)
            zc = np.mean([e.z for e in arms[combo]], axis=0)
            rows.append(zc - 0.5 * (z1 + z2))
            keys.append((key, t1, t2, combo))
        else:
            skipped.append(key)
    if not rows:
        raise ValueError("no block contains all three treatment arms")
    return DeltaMatrix(np.vstack(rows), keys, next(iter(hashes))), skipped


def delta_svd(delta):
    """Thin SVD of the un-centered delta plus the centered eigen-spectrum.

    Right singular vectors are sign-fixed so their largest-magnitude entry is
    positive. Eigenvalues come from the column-centered matrix D with the
    unbiased 1/(B-1) scaling.
    """
    rows = delta.rows if isinstance(delta, DeltaMatrix) else np.asarray(delta, dtype=float)
    B = rows.shape[0]
    if B < 2:
        raise ValueError("need at least 2 contrast rows")
    if not np.any(rows):
        raise ValueError("rank-0 delta matrix")
    U, s, Vt = np.linalg.svd(rows, full_matrices=False)
    for i in range(Vt.shape[0]):
        j = np.argmax(np.abs(Vt[i]))
        if Vt[i, j] < 0:
            Vt[i] *= -1.0
            U[:, i] *= -1.0
    D = rows - rows.mean(axis=0, keepdims=True)
    s_d = np.linalg.svd(D, compute_uv=False)
    lam = np.sort(s_d ** 2 / (B - 1))[::-1]
    return U, s, Vt.T, {"centered_singular_values": s_d, "eigenvalues": lam}


def mp_edges(sigma2, gamma):
    """Marchenko-Pastur bulk support [sigma^2 (1 -/+ sqrt(gamma))^2]."""
    if sigma2 <= 0 or gamma <= 0:
        raise ValueError("sigma2 and gamma must be positive")
    lo = sigma2 * (1.0 - np.sqrt(gamma)) ** 2
    hi = sigma2 * (1.0 + np.sqrt(gamma)) ** 2
    return float(lo), float(hi)


def mp_density(lam, sigma2, gamma):
    """Continuous part of the MP density restricted to the bulk support,
    normalized over the nonzero eigenvalues (so it applies to the spectrum
    of the smaller-side Gram matrix when gamma > 1)."""
    lo, hi = mp_edges(sigma2, gamma)
    lam = np.asarray(lam, dtype=float)
    out = np.zeros_like(lam)
    inside = (lam > lo) & (lam < hi)
    g_eff = gamma if gamma <= 1 else 1.0
    out[inside] = np.sqrt((hi - lam[inside]) * (lam[inside] - lo)) / (
        2.0 * np.pi * sigma2 * g_eff * lam[inside])
    return out


def _mp_median(gamma):
    """Median of the bulk distribution at sigma2 = 1, computed numerically."""
    lo, hi = mp_edges(1.0, gamma)
    x = np.linspace(lo, hi, 20001)
    f = mp_density(x, 1.0, gamma)
    cdf = np.concatenate([[0.0], np.cumsum((f[1:] + f[:-1]) * 0.5 * np.diff(x))])
    cdf /= cdf[-1]
    return float(np.interp(0.5, cdf, x))


def estimate_sigma2(eigenvalues, gamma):
    """Bulk variance via median matching: median(lambda) / MP-median(gamma).

    Robust to a handful of signal spikes; floored at SIGMA2_FLOOR so that
    an all-zero spectrum still yields valid edges.
    """
    lam = np.asarray(eigenvalues, dtype=float)
    lam = lam[lam > 0]
    if lam.size == 0:
        return SIGMA2_FLOOR
    return max(float(np.median(lam)) / _mp_median(gamma), SIGMA2_FLOOR)


def spectrum_report(delta, margin=OUTLIER_MARGIN, sigma2=None):
    """Full spectrum analysis of a DeltaMatrix: SVD, MP edges, outliers."""
    U, s, V, extra = delta_svd(delta)
    lam = extra["eigenvalues"]
    B, p = delta.rows.shape
    gamma = p / B
    if sigma2 is None:
        sigma2 = estimate_sigma2(lam, gamma)
    lo, hi = mp_edges(sigma2, gamma)
    report = SpectrumReport(s, extra["centered_singular_values"], lam,
                            lo, hi, sigma2, gamma, margin, [])
    report.outliers = mp_outliers(report)
    return U, s, V, report


def mp_outliers(report):
    """Indices (descending eigenvalue order) above the inflated MP edge."""
    threshold = report.mp_upper * (1.0 + report.margin)
    return [int(i) for i in np.flatnonzero(report.eigenvalues > threshold)]


def project_scores(delta, V, k):
    """Un-centered delta rows in the top-k right singular directions."""
    rows = delta.rows if isinstance(delta, DeltaMatrix) else np.asarray(delta, dtype=float)
    if k > V.shape[1]:
        raise ValueError(f"k = {k} exceeds available components {V.shape[1]}")
    return rows @ V[:, :k]
