"""Acceptance suite: one test per release criterion.

Each test prints a single ``[CRITERION n] PASS/FAIL`` line (run with
``pytest tests/test_acceptance.py -s`` to see them inline). Every check uses
an independent oracle or a closed-form identity, never the implementation
under test.
"""

import functools
import hashlib
import itertools
import json
import time
from math import comb

import numpy as np
import pytest
import yaml

from lotspace import classify, cocluster, contrast, lot, ot_solver, simgen
from lotspace.cli import main as cli_main
from lotspace.data_model import PointCloud
from lotspace.signatures import bh_fdr, ks_statistic


def _report(num, desc):
    """Decorator printing the one-line verdict for a criterion."""
    def wrap(fn):
        @functools.wraps(fn)
        def run(*args, **kwargs):
            try:
                fn(*args, **kwargs)
            except Exception:
                print(f"\n[CRITERION {num}] FAIL - {desc}")
                raise
            print(f"\n[CRITERION {num}] PASS - {desc}")
        return run
    return wrap


def random_cloud(rng, n, d, spread=1.0):
    pts = rng.normal(scale=spread, size=(n, d))
    w = rng.uniform(0.5, 1.5, size=n)
    return PointCloud(pts, w / w.sum())


@_report(1, "Sinkhorn within 1% of exact OT on 50 random instances")
def test_criterion_1_ot_oracle_equivalence():
    rng = np.random.default_rng(42)
    for _ in range(50):
        n, m = rng.integers(2, 13, size=2)
        d = int(rng.integers(1, 6))
        x = random_cloud(rng, int(n), d)
        y = random_cloud(rng, int(m), d)
        C = ot_solver.cost_matrix(x.points, y.points)
        exact = ot_solver.exact_ot(x.weights, y.weights, C)
        cost_exact = ot_solver.transport_cost(exact, C)
        plan = ot_solver.sinkhorn(x.weights, y.weights, C,
                                  epsilon=0.005 * float(C.values.mean()),
                                  max_iter=200_000)
        cost_sink = ot_solver.transport_cost(plan, C)
        assert plan.marginal_error <= 1e-7
        assert abs(cost_sink - cost_exact) <= 0.01 * max(cost_exact, 1e-12)


@_report(2, "LOT embedding shift-equivariant under exact solver")
def test_criterion_2_shift_equivariance():
    rng = np.random.default_rng(7)
    for _ in range(20):
        n = int(rng.integers(2, 13))
        d = int(rng.integers(1, 6))
        sample = random_cloud(rng, n, d)
        ref = lot.Reference(rng.normal(size=(n, d)), np.full(n, 1.0 / n))
        c = rng.normal(size=d) * rng.uniform(0.5, 3.0)
        shifted = PointCloud(sample.points + c, sample.weights.copy())
        z0 = lot.embed(ref, sample, solver="exact").z
        z1 = lot.embed(ref, shifted, solver="exact").z
        err = np.max(np.abs(z1 - z0 - np.tile(c, n)))
        assert err <= 1e-3 * np.linalg.norm(c)


def _run_cohort(shift_mag, n_per_class, cells, d, m_ref, seed):
    mixture = simgen.MixtureSpec(np.zeros((1, d)), np.eye(d), [1.0])
    shift = None
    if shift_mag > 0:
        direction = np.zeros(d)
        direction[0] = 1.0
        shift = shift_mag * direction
    spec = simgen.CohortSpec(mixture, n_per_class, cells, shift=shift, seed=seed)
    clouds = simgen.make_two_class_cohort(spec)
    ref = lot.build_reference(clouds, m_ref, method="kmeans", seed=seed)
    Z = np.vstack([lot.embed(ref, c).z for c in clouds])
    y = np.array([1 if c.label else -1 for c in clouds])
    train, test = classify.stratified_split(y, 0.2, seed)
    model = classify.train_linear_svm(Z[train], y[train])
    return classify.evaluate(model, Z[test], y[test])


@_report(3, "perfect test accuracy on a separable cohort, 5 seeds, < 60 s")
def test_criterion_3_perfect_separability():
    start = time.perf_counter()
    for seed in range(5):
        # class shift = 3x the unit within-class spread
        report = _run_cohort(3.0, 20, 200, 5, 50, seed)
        assert report.accuracy == 1.0
    assert time.perf_counter() - start < 60.0


@_report(4, "null cohort mean accuracy within [0.3, 0.7]")
def test_criterion_4_null_cohort():
    accs = [_run_cohort(0.0, 10, 100, 5, 20, seed).accuracy
            for seed in range(10)]
    assert 0.3 <= float(np.mean(accs)) <= 0.7


def _noise_delta(rows):
    keys = [((f"b{i}",), "C", "F", "CF") for i in range(rows.shape[0])]
    return contrast.DeltaMatrix(rows, keys, "acceptance")


@_report(5, "Marchenko-Pastur outlier calibration and centering identity")
def test_criterion_5_mp_calibration():
    B, p = 100, 2000
    clean = 0
    for seed in range(20):
        rng = np.random.default_rng(seed)
        _, _, _, report = contrast.spectrum_report(
            _noise_delta(rng.normal(size=(B, p))))
        clean += not report.outliers
    assert clean >= 19

    strength = 10.0 * np.sqrt(p / B)
    for seed in range(20):
        rng = np.random.default_rng(3000 + seed)
        rows = rng.normal(size=(B, p))
        u = rng.normal(size=B)
        v = rng.normal(size=p)
        spike = np.outer(u / np.linalg.norm(u), v / np.linalg.norm(v))
        rows = rows + strength * np.sqrt(B) * spike
        _, _, _, report = contrast.spectrum_report(_noise_delta(rows))
        assert report.outliers == [0]

    # centering identity: eigenvalues are squared singular values of the
    # column-centered matrix over B-1
    rng = np.random.default_rng(99)
    D = rng.normal(size=(B, p))
    _, _, _, extra = contrast.delta_svd(_noise_delta(D))
    s_oracle = np.linalg.svd(D - D.mean(axis=0), compute_uv=False)
    lam_oracle = s_oracle ** 2 / (B - 1)
    rel = np.abs(extra["eigenvalues"] - lam_oracle) / np.maximum(lam_oracle, 1e-300)
    assert np.max(rel) <= 1e-10


@_report(6, "arithmetic-additive triplets give a zero Delta and no outliers")
def test_criterion_6_additivity_null():
    rng = np.random.default_rng(3)
    m, d = 8, 4
    embs = []
    for i in range(12):
        zc = rng.normal(size=m * d)
        zf = rng.normal(size=m * d)
        arms = {"C": zc, "F": zf, "CF": 0.5 * (zc + zf)}
        for treat, z in arms.items():
            embs.append(lot.LOTEmbedding(z, "acceptance", m, d,
                                         group_key=(f"b{i}", treat)))
    delta, skipped = contrast.build_delta(embs, ("C", "F", "CF"))
    assert skipped == []
    assert np.all(delta.rows == 0.0)
    # the zero spectrum sits below any MP edge, so nothing is flagged
    gamma = delta.p / delta.B
    lo, hi = contrast.mp_edges(1.0, gamma)
    zero = np.zeros(min(delta.B, delta.p))
    report = contrast.SpectrumReport(zero, zero, zero, lo, hi, 1.0, gamma,
                                     0.02, [])
    assert contrast.mp_outliers(report) == []


@_report(7, "KS statistic matches brute force; BH matches exhaustive step-up")
def test_criterion_7_ks_and_fdr_oracles():
    rng = np.random.default_rng(11)
    for _ in range(100):
        nx, ny = rng.integers(2, 13, size=2)
        x = np.round(rng.normal(size=int(nx)), 1)   # rounding forces ties
        y = np.round(rng.normal(size=int(ny)), 1)
        pool = np.concatenate([x, y])
        brute = max(abs(np.sum(x <= t) / x.size - np.sum(y <= t) / y.size)
                    for t in pool)
        assert ks_statistic(x, y) == brute

    alpha = 0.05
    grid = np.arange(21) * 0.05
    checked = 0
    for k in range(1, 9):
        ranks = np.arange(1, k + 1, dtype=float)
        for combo in itertools.combinations_with_replacement(grid, k):
            p = np.asarray(combo)            # already sorted ascending
            passing = p * k / ranks <= alpha  # step-up rule, same float ops
            kstar = np.nonzero(passing)[0]
            sel_oracle = np.zeros(k, dtype=bool)
            if kstar.size:
                sel_oracle[: kstar[-1] + 1] = True
            assert np.array_equal(bh_fdr(p) <= alpha, sel_oracle)
            checked += 1
    assert checked == sum(comb(20 + k, k) for k in range(1, 9))


def _partition_sets(labels):
    return {frozenset(np.nonzero(labels == v)[0]) for v in np.unique(labels)}


@_report(8, "planted 3x3 biclusters recovered in 20/20 seeds")
def test_criterion_8_cocluster_recovery():
    sigma = 0.1
    for seed in range(20):
        rng = np.random.default_rng(500 + seed)
        m = int(rng.integers(30, 61))
        d = int(rng.integers(30, 61))
        row_truth = rng.integers(0, 3, size=m)
        col_truth = rng.integers(0, 3, size=d)
        row_truth[:3] = np.arange(3)               # guarantee non-empty blocks
        col_truth[:3] = np.arange(3)
        # diagonal-dominant planted means: gap of 10 sigma between diagonal
        # and off-diagonal blocks
        means = 1.0 + 10 * sigma * np.eye(3)
        W = means[row_truth][:, col_truth] + sigma * rng.normal(size=(m, d))
        assignment = cocluster.spectral_cocluster(W, 3, 3, seed=seed)
        assert _partition_sets(assignment.row_labels) == _partition_sets(row_truth)
        assert _partition_sets(assignment.col_labels) == _partition_sets(col_truth)

        importance = cocluster.bicluster_importance(W, assignment)
        for k in range(3):
            for l in range(3):
                cells = [abs(W[i, j])
                         for i in np.nonzero(assignment.row_labels == k)[0]
                         for j in np.nonzero(assignment.col_labels == l)[0]]
                assert abs(importance[k, l] - np.mean(cells)) <= 1e-12


@_report(9, "synthesis identities: interpolation, barycenter, pre-image")
def test_criterion_9_synthesis_identities():
    rng = np.random.default_rng(21)
    m, d = 6, 3
    ref = lot.Reference(rng.normal(size=(m, d)), np.full(m, 1.0 / m))
    embs = [lot.LOTEmbedding(rng.normal(size=m * d), ref.hash, m, d)
            for _ in range(3)]

    za, zb = embs[0].z, embs[1].z
    assert np.array_equal(lot.interpolate(embs[0], embs[1], 0.0).z, za)
    assert np.array_equal(lot.interpolate(embs[0], embs[1], 1.0).z, zb)

    same = [embs[0]] * 4
    assert np.array_equal(lot.barycenter(same, [0.25] * 4).z, za)

    zero = lot.LOTEmbedding(np.zeros(m * d), ref.hash, m, d)
    assert np.array_equal(lot.preimage(ref, zero).points, ref.points)

    weights = [0.5, 0.25, 0.25]
    bary_cloud = lot.preimage(ref, lot.barycenter(embs, weights))
    mean_of_preimages = sum(w * lot.preimage(ref, e).points
                            for w, e in zip(weights, embs))
    assert np.max(np.abs(bary_cloud.points - mean_of_preimages)) <= 1e-12


@_report(10, "full pipeline reruns are byte-identical")
def test_criterion_10_determinism(tmp_path):
    rng = np.random.default_rng(1)
    rows = ["Sample,Label,m0,m1,m2"]
    for i in range(6):
        label = i % 2
        for _ in range(25):
            x = rng.normal(size=3)
            x[0] += 2.5 * label
            rows.append(",".join([f"s{i}", str(label)]
                                 + [repr(float(v)) for v in x]))
    data = tmp_path / "cells.csv"
    data.write_text("\n".join(rows) + "\n")

    out = tmp_path / "out"
    cfg = {
        "input": str(data),
        "output_dir": str(out),
        "schema": {"meta_columns": ["Sample", "Label"],
                   "marker_columns": ["m0", "m1", "m2"],
                   "label_column": "Label"},
        "reference": {"m": 8, "method": "kmeans", "seed": 0},
        "cocluster": {"K": 2, "L": 2, "seed": 0},
        "svm": {"C": 1.0, "test_fraction": 0.25, "seed": 0},
        "workers": 2,
    }
    cfg_path = tmp_path / "cfg.yaml"
    cfg_path.write_text(yaml.safe_dump(cfg))

    watched = ("embeddings.csv", "embeddings.lot", "model.json",
               "evaluation.json", "signature_tests.csv",
               "weights_reordered.csv", "manifest_embed.json",
               "manifest_classify.json")
    digests = []
    for _ in range(2):
        assert cli_main(["embed", "--config", str(cfg_path)]) == 0
        assert cli_main(["classify", "--config", str(cfg_path)]) == 0
        digests.append({f: hashlib.sha256((out / f).read_bytes()).hexdigest()
                        for f in watched})
    assert digests[0] == digests[1]
    assert json.loads((out / "evaluation.json").read_text())["accuracy"] >= 0.5
