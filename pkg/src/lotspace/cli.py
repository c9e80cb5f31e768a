"""Pipeline driver: embed, classify, contrast, generate, simulate.

Configuration comes from a YAML file; command-line flags override config
fields, which override defaults. Every run writes a manifest JSON naming the
exact parameters and the SHA-256 of each output file, so identical configs
produce byte-identical artifacts.

Exit codes: 0 success, 2 config error, 3 data error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import yaml

from . import classify, cocluster, contrast, lot, ot_solver, signatures, simgen
from . import _svg
from .data_model import (CellTable, LabelMap, ParseError, PointCloud, Schema,
                         SchemaError, assign_labels_from_key, binarize_labels,
                         filter_replicates, group_point_clouds, load_cells_csv)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4


class ConfigError(ValueError):
    pass


DEFAULTS = {
    "schema": {"meta_columns": [], "marker_columns": [], "label_column": None,
               "replicate_column": None, "delimiter": ","},
    "reference": {"m": 1000, "method": "kmeans", "seed": 0},
    "solver": {"name": "sinkhorn", "epsilon": None, "max_iter": 10000,
               "tol_marginal": 1e-7},
    "svm": {"C": 1.0, "grid": None, "test_fraction": 0.2, "seed": 0},
    "cocluster": {"K": 7, "L": 5, "seed": 0},
    "signatures": {"fdr_threshold": 0.05, "group_a": "1", "group_b": "0"},
    "contrast": {"control_label": "DMSO", "triplet": None, "margin": 0.02},
    "simulate": {"n_samples_per_class": 20, "cells_per_sample": 200, "d": 5,
                 "shift_magnitude": 3.0, "seed": 0},
    "workers": os.cpu_count() or 1,
    "output_dir": "out",
}


def _deep_merge(base, override):
    out = dict(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _deep_merge(out[k], v)
        else:
            out[k] = v
    return out


def load_config(path=None, overrides=None):
    cfg = dict(DEFAULTS)
    if path:
        with open(path) as fh:
            user = yaml.safe_load(fh) or {}
        if not isinstance(user, dict):
            raise ConfigError(f"{path}: config must be a mapping")
        cfg = _deep_merge(cfg, user)
    if overrides:
        cfg = _deep_merge(cfg, overrides)
    if env_dir := os.environ.get("LOTSPACE_OUTPUT_DIR"):
        cfg["output_dir"] = env_dir
    if env_workers := os.environ.get("LOTSPACE_WORKERS"):
        cfg["workers"] = int(env_workers)
    return cfg


def _schema_from_cfg(cfg):
    s = cfg["schema"]
    if not s["marker_columns"]:
        raise ConfigError("schema.marker_columns must be set")
    return Schema(tuple(s["meta_columns"]), tuple(s["marker_columns"]),
                  s.get("label_column"), s.get("replicate_column"),
                  s.get("delimiter", ","))


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(outdir, command, cfg, outputs, extra=None):
    manifest = {
        "command": command,
        "config": cfg,
        "outputs": {os.path.basename(p): _sha256(p) for p in outputs},
    }
    if extra:
        manifest.update(extra)
    path = os.path.join(outdir, f"manifest_{command}.json")
    with open(path, "w") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=1, default=str)
    return path


def _load_clouds(cfg):
    schema = _schema_from_cfg(cfg)
    table = load_cells_csv(cfg["input"], schema)
    if schema.replicate_column and cfg.get("exclude_replicates"):
        table = filter_replicates(table, cfg["exclude_replicates"],
                                  schema.replicate_column)
    keys = cfg.get("group_keys") or list(schema.meta_columns)
    clouds = group_point_clouds(table, keys)
    if schema.label_column and schema.label_column in keys:
        clouds = assign_labels_from_key(clouds, keys, schema.label_column)
        if cfg.get("label_map"):
            clouds, dropped = binarize_labels(
                clouds, LabelMap({str(k): v for k, v in cfg["label_map"].items()}))
            if dropped:
                print(f"dropped {dropped} samples with unmapped labels", file=sys.stderr)
    return clouds, keys


def _embed_cohort(ref, clouds, cfg):
    solver = cfg["solver"]

    def one(cloud):
        return lot.embed(ref, cloud, solver=solver["name"],
                         epsilon=solver["epsilon"],
                         max_iter=solver["max_iter"],
                         tol_marginal=solver["tol_marginal"])

    workers = max(1, int(cfg["workers"]))
    if workers == 1:
        embs = [one(c) for c in clouds]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            embs = list(pool.map(one, clouds))
    # keyed sort so results are independent of worker scheduling
    embs.sort(key=lambda e: e.group_key)
    return embs


def _save_reference(path, ref):
    np.savez(path, points=ref.points, weights=ref.weights,
             marker_names=np.asarray(ref.marker_names, dtype=object),
             provenance=json.dumps(ref.provenance, sort_keys=True))


def _load_reference(path):
    data = np.load(path, allow_pickle=True)
    return lot.Reference(data["points"], data["weights"],
                         provenance=json.loads(str(data["provenance"])),
                         marker_names=tuple(data["marker_names"]))


def cmd_embed(cfg):
    outdir = cfg["output_dir"]
    os.makedirs(outdir, exist_ok=True)
    clouds, keys = _load_clouds(cfg)
    if not clouds:
        raise ValueError("no point clouds produced from input")
    rcfg = cfg["reference"]
    ref = lot.build_reference(clouds, rcfg["m"], rcfg["method"], rcfg["seed"])
    embs = _embed_cohort(ref, clouds, cfg)

    csv_path = os.path.join(outdir, "embeddings.csv")
    bin_path = os.path.join(outdir, "embeddings.lot")
    ref_path = os.path.join(outdir, "reference.npz")
    lot.write_embeddings_csv(csv_path, embs, key_names=keys)
    lot.write_embeddings_binary(bin_path, embs)
    _save_reference(ref_path, ref)
    labels_path = os.path.join(outdir, "labels.csv")
    with open(labels_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(list(keys) + ["label"])
        for e in embs:
            w.writerow(list(e.group_key) + [e.label])
    _write_manifest(outdir, "embed", cfg,
                    [csv_path, bin_path, ref_path, labels_path],
                    extra={"n_samples": len(embs), "reference_hash": ref.hash,
                           "m": ref.m, "d": ref.d})
    print(f"embedded {len(embs)} samples (m={ref.m}, d={ref.d}) -> {outdir}")
    return EXIT_OK


def _classify_core(embs, ref, cfg, outdir):
    labeled = [e for e in embs if e.label is not None]
    y = np.array([1.0 if int(e.label) == 1 else -1.0 for e in labeled])
    Z = np.stack([e.z for e in labeled])
    svm_cfg = cfg["svm"]
    train_idx, test_idx = classify.stratified_split(
        y, svm_cfg["test_fraction"], svm_cfg["seed"])
    C = svm_cfg["C"]
    if svm_cfg.get("grid"):
        C = classify.select_regularization(Z[train_idx], y[train_idx],
                                           grid=tuple(svm_cfg["grid"]),
                                           seed=svm_cfg["seed"])
    model = classify.train_linear_svm(Z[train_idx], y[train_idx], C=C)
    report = classify.evaluate(model, Z[test_idx], y[test_idx])

    outputs = []
    model_path = os.path.join(outdir, "model.json")
    classify.save_model(model_path, model,
                        extra={"m": ref.m, "d": ref.d,
                               "reference_hash": ref.hash,
                               "seed": svm_cfg["seed"]})
    outputs.append(model_path)

    eval_path = os.path.join(outdir, "evaluation.json")
    with open(eval_path, "w") as fh:
        json.dump({"confusion": report.confusion, "accuracy": report.accuracy,
                   "precision_pos": report.precision_pos,
                   "recall_pos": report.recall_pos, "f1_pos": report.f1_pos,
                   "precision_neg": report.precision_neg,
                   "recall_neg": report.recall_neg, "f1_neg": report.f1_neg,
                   "auc": report.auc}, fh, sort_keys=True, indent=1)
    outputs.append(eval_path)

    roc_path = os.path.join(outdir, "roc.csv")
    with open(roc_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["fpr", "tpr"])
        for fpr, tpr in report.roc_points:
            w.writerow([repr(float(fpr)), repr(float(tpr))])
    outputs.append(roc_path)

    # interpretation: reshape, co-cluster, importance grid, reordered heatmap
    W = classify.reshape_weights(model, ref.m, ref.d)
    cc = cfg["cocluster"]
    assignment = cocluster.spectral_cocluster(W, cc["K"], cc["L"], cc["seed"])
    grid = cocluster.bicluster_importance(W, assignment)
    reordered, row_order, col_order = cocluster.reorder_heatmap(W, assignment)

    grid_path = os.path.join(outdir, "importance_grid.csv")
    np.savetxt(grid_path, grid, delimiter=",")
    outputs.append(grid_path)
    heat_csv = os.path.join(outdir, "weights_reordered.csv")
    np.savetxt(heat_csv, reordered, delimiter=",")
    outputs.append(heat_csv)
    heat_svg = os.path.join(outdir, "weights_reordered.svg")
    _svg.heatmap_svg(heat_svg, reordered, title="SVM weights (cluster order)")
    outputs.append(heat_svg)
    assign_path = os.path.join(outdir, "cocluster_assignment.csv")
    with open(assign_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["axis", "index", "cluster"])
        for i, lab in enumerate(assignment.row_labels):
            w.writerow(["row", i, int(lab)])
        for j, lab in enumerate(assignment.col_labels):
            w.writerow(["col", j, int(lab)])
    outputs.append(assign_path)

    # per-cluster signatures over the labeled cohort
    sig_cfg = cfg["signatures"]
    fields = [e.displacement_field() for e in labeled]
    groups = {i: str(int(e.label)) for i, e in enumerate(labeled)}
    marker_names = ref.marker_names or tuple(f"m{k}" for k in range(ref.d))
    ga, gb = str(sig_cfg["group_a"]), str(sig_cfg["group_b"])
    sig_rows = []
    for k in range(assignment.K):
        rows_k = assignment.row_cluster(k)
        sig = signatures.cluster_signature(fields, rows_k, groups, marker_names,
                                           cluster_id=k)
        if ga not in sig.z_by_group or gb not in sig.z_by_group:
            continue
        pooled = signatures.pooled_cluster_values(fields, rows_k, groups)
        for row in signatures.signature_report(sig, pooled, ga, gb,
                                               fdr_threshold=sig_cfg["fdr_threshold"]):
            sig_rows.append([k, row.feature, repr(float(row.ks_stat)), repr(float(row.ks_p)),
                             repr(float(row.q)), row.sign, int(row.significant)])
        sig_csv = os.path.join(outdir, f"signature_cluster{k}.csv")
        with open(sig_csv, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["marker", f"Z_{ga}", f"Z_{gb}"])
            for j, name in enumerate(marker_names):
                w.writerow([name, repr(float(sig.z_by_group[ga][j])),
                            repr(float(sig.z_by_group[gb][j]))])
        outputs.append(sig_csv)
        svg_path = os.path.join(outdir, f"signature_cluster{k}.svg")
        _svg.lineplot_svg(svg_path, np.arange(ref.d),
                          {ga: sig.z_by_group[ga], gb: sig.z_by_group[gb]},
                          title=f"Cluster {k} signature")
        outputs.append(svg_path)
    report_path = os.path.join(outdir, "signature_tests.csv")
    with open(report_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["cluster", "feature", "KS_stat", "KS_p", "KS_FDR", "sign",
                    "significant"])
        w.writerows(sig_rows)
    outputs.append(report_path)
    return report, outputs


def cmd_classify(cfg):
    outdir = cfg["output_dir"]
    os.makedirs(outdir, exist_ok=True)
    embs, ref = _embeddings_from_cfg(cfg)
    report, outputs = _classify_core(embs, ref, cfg, outdir)
    _write_manifest(outdir, "classify", cfg, outputs,
                    extra={"accuracy": report.accuracy, "auc": report.auc})
    print(f"test accuracy {report.accuracy:.3f}, AUC "
          f"{'n/a' if report.auc is None else f'{report.auc:.3f}'} -> {outdir}")
    return EXIT_OK


def _embeddings_from_cfg(cfg):
    """Either reuse a previous embed run (embeddings_dir) or embed now."""
    if cfg.get("embeddings_dir"):
        d = cfg["embeddings_dir"]
        ref = _load_reference(os.path.join(d, "reference.npz"))
        embs = lot.read_embeddings_binary(os.path.join(d, "embeddings.lot"),
                                          reference_hash=ref.hash)
        labels_path = os.path.join(d, "labels.csv")
        if os.path.exists(labels_path):
            with open(labels_path, newline="") as fh:
                rows = list(csv.reader(fh))
            for e, row in zip(embs, rows[1:]):
                e.group_key = tuple(row[:-1])
                e.label = None if row[-1] in ("", "None") else row[-1]
        return embs, ref
    clouds, _ = _load_clouds(cfg)
    rcfg = cfg["reference"]
    ref = lot.build_reference(clouds, rcfg["m"], rcfg["method"], rcfg["seed"])
    return _embed_cohort(ref, clouds, cfg), ref


def cmd_contrast(cfg):
    outdir = cfg["output_dir"]
    os.makedirs(outdir, exist_ok=True)
    ccfg = cfg["contrast"]
    if not ccfg.get("triplet"):
        raise ConfigError("contrast.triplet = [t1, t2, combo] must be set")
    embs, ref = _embeddings_from_cfg(cfg)
    normalized, norm_report = contrast.block_normalize(embs, ccfg["control_label"])
    delta, skipped = contrast.build_delta(normalized, tuple(ccfg["triplet"]))
    U, s, V, report = contrast.spectrum_report(delta, margin=ccfg["margin"])

    outputs = []
    spec_path = os.path.join(outdir, "spectrum.json")
    with open(spec_path, "w") as fh:
        json.dump(report.to_dict(), fh, sort_keys=True, indent=1)
    outputs.append(spec_path)

    k = min(2, V.shape[1])
    scores = contrast.project_scores(delta, V, k)
    scores_path = os.path.join(outdir, "scores.csv")
    with open(scores_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["block"] + [f"score{i + 1}" for i in range(k)])
        for key, row in zip(delta.triplet_keys, scores):
            w.writerow(["/".join(map(str, key[0]))] + [repr(float(v)) for v in row])
    outputs.append(scores_path)

    hist_csv = os.path.join(outdir, "spectrum.csv")
    lo, hi = report.mp_lower, report.mp_upper
    grid_x = np.linspace(max(lo, 1e-12), hi, 200)
    dens = contrast.mp_density(grid_x, report.sigma2, report.gamma)
    with open(hist_csv, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["eigenvalue"])
        for v in report.eigenvalues:
            w.writerow([repr(float(v))])
        w.writerow(["mp_x", "mp_density"])
        for a, b in zip(grid_x, dens):
            w.writerow([repr(float(a)), repr(float(b))])
    outputs.append(hist_csv)
    svg_path = os.path.join(outdir, "spectrum.svg")
    _svg.spectrum_svg(svg_path, report.eigenvalues, lo, hi, grid_x, dens,
                      title="Contrast eigen-spectrum vs MP bulk")
    outputs.append(svg_path)

    # bicluster the top delta component reshaped onto the reference grid
    top = V[:, 0].reshape(ref.m, ref.d)
    bc = cfg["cocluster"]
    K = min(bc["K"], ref.m)
    L = min(bc["L"], ref.d)
    assignment = cocluster.spectral_bicluster(top, K, L, bc["seed"])
    reordered, _, _ = cocluster.reorder_heatmap(top, assignment)
    top_csv = os.path.join(outdir, "top_component_reordered.csv")
    np.savetxt(top_csv, reordered, delimiter=",")
    outputs.append(top_csv)
    top_svg = os.path.join(outdir, "top_component_reordered.svg")
    _svg.heatmap_svg(top_svg, reordered, title="Top delta component (cluster order)")
    outputs.append(top_svg)

    _write_manifest(outdir, "contrast", cfg, outputs, extra={
        "n_triplets": delta.B,
        "skipped_blocks": ["/".join(map(str, k)) for k in skipped],
        "blocks_without_control": ["/".join(map(str, k))
                                   for k in norm_report["blocks_without_control"]],
        "outliers": report.outliers,
    })
    print(f"{delta.B} triplets, {len(report.outliers)} spectral outlier(s) -> {outdir}")
    return EXIT_OK


def cmd_simulate(cfg):
    outdir = cfg["output_dir"]
    os.makedirs(outdir, exist_ok=True)
    s = cfg["simulate"]
    d = int(s["d"])
    shift = np.zeros(d)
    shift[0] = float(s["shift_magnitude"])
    spec = simgen.CohortSpec(
        mixture=simgen.MixtureSpec(np.zeros((1, d)), np.eye(d), [1.0]),
        n_samples_per_class=int(s["n_samples_per_class"]),
        cells_per_sample=int(s["cells_per_sample"]),
        shift=shift, seed=int(s["seed"]))
    clouds = simgen.make_two_class_cohort(spec)
    marker_names = [f"m{k}" for k in range(d)]
    meta, values = simgen.cohort_to_rows(clouds, marker_names)
    out_path = os.path.join(outdir, "cohort.csv")
    with open(out_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["Sample", "Label"] + marker_names)
        for m_row, v_row in zip(meta, values):
            w.writerow(list(m_row) + [repr(float(v)) for v in v_row])
    _write_manifest(outdir, "simulate", cfg, [out_path],
                    extra={"n_clouds": len(clouds)})
    print(f"wrote {len(clouds)} synthetic clouds -> {out_path}")
    return EXIT_OK


def cmd_generate(cfg):
    """Synthesis: barycenters / interpolations of existing embeddings plus
    their pre-image clouds."""
    outdir = cfg["output_dir"]
    os.makedirs(outdir, exist_ok=True)
    if not cfg.get("embeddings_dir"):
        raise ConfigError("generate requires embeddings_dir from a prior embed run")
    embs, ref = _embeddings_from_cfg(cfg)
    gcfg = cfg.get("generate", {})
    mode = gcfg.get("mode", "barycenter")
    idx = gcfg.get("indices") or list(range(len(embs)))
    chosen = [embs[i] for i in idx]
    if mode == "barycenter":
        weights = gcfg.get("weights")
        synth = lot.barycenter(chosen, weights)
    elif mode == "interpolate":
        if len(chosen) != 2:
            raise ConfigError("interpolation needs exactly 2 indices")
        synth = lot.interpolate(chosen[0], chosen[1], float(gcfg.get("t", 0.5)))
    else:
        raise ConfigError(f"unknown generate mode {mode!r}")
    synth.group_key = (mode,)

    emb_path = os.path.join(outdir, "synthetic_embedding.csv")
    lot.write_embeddings_csv(emb_path, [synth], key_names=["mode"])
    cloud = lot.preimage(ref, synth)
    cloud_path = os.path.join(outdir, "synthetic_cloud.csv")
    marker_names = ref.marker_names or tuple(f"m{k}" for k in range(ref.d))
    with open(cloud_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["weight"] + list(marker_names))
        for wgt, row in zip(cloud.weights, cloud.points):
            w.writerow([repr(float(wgt))] + [repr(float(v)) for v in row])
    _write_manifest(outdir, "generate", cfg, [emb_path, cloud_path],
                    extra={"mode": mode, "indices": list(idx)})
    print(f"synthesized {mode} embedding -> {outdir}")
    return EXIT_OK


COMMANDS = {
    "embed": cmd_embed,
    "classify": cmd_classify,
    "contrast": cmd_contrast,
    "generate": cmd_generate,
    "simulate": cmd_simulate,
}


def build_parser():
    ap = argparse.ArgumentParser(prog="lotspace",
                                 description="LOT embedding analysis pipeline")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="YAML config file")
        p.add_argument("--input", help="input cell-table CSV")
        p.add_argument("--output-dir", dest="output_dir")
        p.add_argument("--embeddings-dir", dest="embeddings_dir",
                       help="reuse artifacts from a previous embed run")
        p.add_argument("--workers", type=int)
        p.add_argument("--seed", type=int, help="override all module seeds")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    overrides = {}
    for key in ("input", "output_dir", "embeddings_dir", "workers"):
        val = getattr(args, key, None)
        if val is not None:
            overrides[key] = val
    if args.seed is not None:
        overrides["reference"] = {"seed": args.seed}
        overrides["svm"] = {"seed": args.seed}
        overrides["cocluster"] = {"seed": args.seed}
        overrides["simulate"] = {"seed": args.seed}
    try:
        cfg = load_config(args.config, overrides)
        return COMMANDS[args.command](cfg)
    except (ConfigError, yaml.YAMLError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (SchemaError, ParseError, FileNotFoundError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (ot_solver.SolverError, lot.DegenerateMapError,
            np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
