"""Linear SVM on LOT embeddings, plus evaluation and weight reshaping.

Training uses dual coordinate descent on the L1-hinge objective with an
augmented bias feature, which is deterministic under a fixed cyclic sweep
order; no randomness enters the solver itself.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, asdict

import numpy as np


@dataclass
class SvmModel:
    w: np.ndarray
    b: float
    C: float
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=float).ravel()
        if not (np.all(np.isfinite(self.w)) and np.isfinite(self.b)):
            raise ValueError("non-finite model parameters")

    @property
    def p(self):
        return self.w.size


@dataclass
class EvalReport:
    confusion: dict            # tp, fp, tn, fn
    accuracy: float
    precision_pos: float
    recall_pos: float
    f1_pos: float
    precision_neg: float
    recall_neg: float
    f1_neg: float
    auc: float | None
    roc_points: list           # (fpr, tpr) at every distinct threshold


def stratified_split(labels, test_fraction, seed):
    """Deterministic per-class split; test counts are round(count * fraction)."""
    labels = np.asarray(labels)
    if not 0.0 < test_fraction < 1.0:
        raise ValueError("test_fraction must lie in (0, 1)")
    classes = np.unique(labels)
    if classes.size != 2:
        raise ValueError(f"need exactly two classes, got {classes.tolist()}")
    rng = np.random.default_rng(seed)
    test_idx = []
    for c in classes:
        idx = np.flatnonzero(labels == c)
        if idx.size < 2:
            raise ValueError(f"class {c!r} has fewer than 2 members")
        n_test = int(round(idx.size * test_fraction))
        n_test = min(max(n_test, 1), idx.size - 1)
        test_idx.extend(idx[rng.permutation(idx.size)[:n_test]])
    test_idx = np.sort(np.asarray(test_idx, dtype=int))
    train_idx = np.setdiff1d(np.arange(labels.size), test_idx)
    return train_idx, test_idx


def _svm_objective(w_aug, X_aug, y, C):
    margins = 1.0 - y * (X_aug @ w_aug)
    return 0.5 * float(w_aug @ w_aug) + C * float(np.maximum(margins, 0.0).sum())


def train_linear_svm(Z, y, C=1.0, tol=1e-8, max_iter=20000):
    """L1-hinge linear SVM by dual coordinate descent (cyclic sweeps).

    Labels must be in {-1, +1}. The bias is folded in as a constant unit
    feature, so the regularizer covers (w, b) jointly.
    """
    Z = np.asarray(Z, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    if Z.ndim != 2 or Z.shape[0] != y.size:
        raise ValueError("Z and y shapes do not match")
    if not np.all(np.isfinite(Z)):
        raise ValueError("non-finite features")
    if set(np.unique(y)) != {-1.0, 1.0}:
        raise ValueError("labels must contain both -1 and +1")

    n = Z.shape[0]
    X = np.hstack([Z, np.ones((n, 1))])
    q = (X * X).sum(axis=1)            # diagonal of the dual Hessian
    alpha = np.zeros(n)
    w = np.zeros(X.shape[1])
    it = 0
    for it in range(1, max_iter + 1):
        max_violation = 0.0
        for i in range(n):
            g = y[i] * (X[i] @ w) - 1.0
            if alpha[i] <= 0.0:
                pg = min(g, 0.0)
            elif alpha[i] >= C:
                pg = max(g, 0.0)
            else:
                pg = g
            max_violation = max(max_violation, abs(pg))
            if pg != 0.0:
                new = min(max(alpha[i] - g / q[i], 0.0), C)
                if new != alpha[i]:
                    w += (new - alpha[i]) * y[i] * X[i]
                    alpha[i] = new
        if max_violation <= tol:
            break
    return SvmModel(w[:-1], float(w[-1]), C,
                    meta={"iterations": it, "tol": tol, "n_train": n})


def select_regularization(Z, y, grid=(0.01, 0.1, 1.0, 10.0), folds=5, seed=0):
    """Pick C from a small grid by stratified k-fold CV accuracy."""
    Z = np.asarray(Z, dtype=float)
    y = np.asarray(y, dtype=float).ravel()
    rng = np.random.default_rng(seed)
    fold_of = np.empty(y.size, dtype=int)
    for c in np.unique(y):
        idx = np.flatnonzero(y == c)
        idx = idx[rng.permutation(idx.size)]
        fold_of[idx] = np.arange(idx.size) % folds
    best_c, best_acc = grid[0], -1.0
    for C in grid:
        correct = 0
        for f in range(folds):
            tr, te = fold_of != f, fold_of == f
            if len(set(y[tr])) < 2 or te.sum() == 0:
                continue
            model = train_linear_svm(Z[tr], y[tr], C=C)
            correct += int(np.sum(np.sign(decision_function(model, Z[te])) * y[te] >= 0))
        acc = correct / y.size
        if acc > best_acc:
            best_c, best_acc = C, acc
    return best_c


def decision_function(model, Z):
    Z = np.asarray(Z, dtype=float)
    if Z.ndim == 1:
        Z = Z[None, :]
    if Z.shape[1] != model.p:
        raise ValueError(f"feature width {Z.shape[1]} != model p {model.p}")
    return Z @ model.w + model.b


def _roc_auc(scores, y):
    """AUC as the midrank statistic; ROC points at every distinct threshold."""
    scores = np.asarray(scores, dtype=float)
    pos = y > 0
    n_pos, n_neg = int(pos.sum()), int((~pos).sum())
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(scores.size)
    sorted_scores = scores[order]
    i = 0
    while i < scores.size:
        j = i
        while j < scores.size and sorted_scores[j] == sorted_scores[i]:
            j += 1
        ranks[order[i:j]] = 0.5 * (i + j - 1) + 1.0   # midrank, 1-based
        i = j
    auc = (ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)

    points = [(0.0, 0.0)]
    for thr in np.unique(scores)[::-1]:
        pred = scores >= thr
        tpr = float(np.sum(pred & pos)) / n_pos
        fpr = float(np.sum(pred & ~pos)) / n_neg
        points.append((fpr, tpr))
    if points[-1] != (1.0, 1.0):
        points.append((1.0, 1.0))
    return float(auc), points


def evaluate(model, Z_test, y_test):
    """Confusion at threshold zero (ties predict positive) plus rank AUC."""
    y = np.asarray(y_test, dtype=float).ravel()
    if y.size == 0:
        raise ValueError("empty test set")
    scores = decision_function(model, Z_test)
    pred = np.where(scores >= 0.0, 1.0, -1.0)
    tp = int(np.sum((pred > 0) & (y > 0)))
    fp = int(np.sum((pred > 0) & (y < 0)))
    tn = int(np.sum((pred < 0) & (y < 0)))
    fn = int(np.sum((pred < 0) & (y > 0)))

    def _prf(tp_, fp_, fn_):
        prec = tp_ / (tp_ + fp_) if tp_ + fp_ else 0.0
        rec = tp_ / (tp_ + fn_) if tp_ + fn_ else 0.0
        f1 = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
        return prec, rec, f1

    p_pos, r_pos, f_pos = _prf(tp, fp, fn)
    p_neg, r_neg, f_neg = _prf(tn, fn, fp)
    if (y > 0).all() or (y < 0).all():
        auc, roc = None, []
    else:
        auc, roc = _roc_auc(scores, y)
    return EvalReport({"tp": tp, "fp": fp, "tn": tn, "fn": fn},
                      (tp + tn) / y.size,
                      p_pos, r_pos, f_pos, p_neg, r_neg, f_neg, auc, roc)


def reshape_weights(model, m, d):
    """Weight vector as the m x d (reference atom, marker) matrix."""
    if m * d != model.p:
        raise ValueError(f"m*d = {m * d} != p = {model.p}")
    return model.w.reshape(m, d)


def save_model(path, model, extra=None):
    payload = {"w": model.w.tolist(), "b": model.b, "C": model.C,
               "meta": model.meta}
    if extra:
        payload.update(extra)
    with open(path, "w") as fh:
        json.dump(payload, fh, sort_keys=True, indent=1)


def load_model(path):
    with open(path) as fh:
        payload = json.load(fh)
    return SvmModel(np.asarray(payload["w"]), payload["b"], payload["C"],
                    payload.get("meta", {}))
