"""Optimal transport solvers between weighted point sets.

Two routes are provided: a log-domain Sinkhorn iteration for production use,
and an exact linear-program solver restricted to small instances that anchors
the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog
from scipy.special import logsumexp


class SolverError(RuntimeError):
    """Numerical failure inside an OT solve."""


DEFAULT_ORACLE_BOUND = 64
WEIGHT_TOL = 1e-9


@dataclass(frozen=True)
class CostMatrix:
    values: np.ndarray
    metric: str = "sqeuclidean"

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 2:
            raise ValueError("cost matrix must be 2-D")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise ValueError("cost entries must be finite and nonnegative")
        object.__setattr__(self, "values", v)

    @property
    def shape(self):
        return self.values.shape


@dataclass
class TransportPlan:
    coupling: np.ndarray
    source_marginal: np.ndarray
    target_marginal: np.ndarray
    converged: bool
    iterations: int
    marginal_error: float


def _check_weights(a, name):
    a = np.asarray(a, dtype=float).ravel()
    if a.size == 0 or np.any(a < 0) or not np.all(np.isfinite(a)):
        raise ValueError(f"{name} must be nonnegative and finite")
    if abs(a.sum() - 1.0) > 1e-6:
        raise ValueError(f"{name} must sum to 1 (got {a.sum()!r})")
    return a


def cost_matrix(X, Y):
    """Pairwise squared Euclidean costs between rows of X and rows of Y."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if X.ndim != 2 or Y.ndim != 2 or X.shape[1] != Y.shape[1]:
        raise ValueError(
            f"point dimension mismatch: {X.shape} vs {Y.shape}"
        )
    sq = (X * X).sum(1)[:, None] + (Y * Y).sum(1)[None, :] - 2.0 * X @ Y.T
    np.maximum(sq, 0.0, out=sq)
    return CostMatrix(sq)


def _marginal_error(pi, a, b):
    return max(
        np.abs(pi.sum(axis=1) - a).max(),
        np.abs(pi.sum(axis=0) - b).max(),
    )


def sinkhorn(a, b, C, epsilon=None, max_iter=10000, tol_marginal=1e-7,
             eps_scaling=True):
    """Entropic OT via log-domain Sinkhorn iterations.

    ``epsilon`` defaults to 0.05 * mean(C). With ``eps_scaling`` the solver
    starts at a large regularization and halves it down to the target,
    warm-starting the dual potentials at each stage.
    """
    a = _check_weights(a, "source weights")
    b = _check_weights(b, "target weights")
    Cv = C.values if isinstance(C, CostMatrix) else np.asarray(C, dtype=float)
    if Cv.shape != (a.size, b.size):
        raise ValueError("cost matrix shape does not match marginals")

    # zero-weight atoms contribute nothing; strip and reinsert as zero rows/cols
    ia = np.flatnonzero(a > 0)
    ib = np.flatnonzero(b > 0)
    stripped = ia.size < a.size or ib.size < b.size
    a_s, b_s, C_s = a[ia], b[ib], Cv[np.ix_(ia, ib)]

    mean_c = C_s.mean()
    if epsilon is None:
        epsilon = 0.05 * mean_c if mean_c > 0 else 1.0
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")

    log_a = np.log(a_s)
    log_b = np.log(b_s)
    f = np.zeros(a_s.size)
    g = np.zeros(b_s.size)

    if eps_scaling and mean_c > 0:
        eps_now = max(epsilon, mean_c)
        schedule = []
        while eps_now > epsilon * 1.0001:
            schedule.append(eps_now)
            eps_now /= 2.0
        schedule.append(epsilon)
    else:
        schedule = [epsilon]

    total_iter = 0
    converged = False
    err = np.inf
    for stage, eps in enumerate(schedule):
        last = stage == len(schedule) - 1
        stage_iter = max_iter if last else min(max_iter, 100)
        for _ in range(stage_iter):
            M = (f[:, None] + g[None, :] - C_s) / eps
            f = f + eps * (log_a - logsumexp(M, axis=1))
            M = (f[:, None] + g[None, :] - C_s) / eps
            g = g + eps * (log_b - logsumexp(M, axis=0))
            total_iter += 1
            if total_iter % 10 == 0 or last:
                pi = np.exp((f[:, None] + g[None, :] - C_s) / eps)
                err = _marginal_error(pi, a_s, b_s)
                if not np.all(np.isfinite(pi)):
                    raise SolverError("Sinkhorn overflow despite log-domain")
                if err <= tol_marginal:
                    break
        else:
            continue
        if last:
            converged = err <= tol_marginal
    pi = np.exp((f[:, None] + g[None, :] - C_s) / epsilon)
    err = _marginal_error(pi, a_s, b_s)
    converged = err <= tol_marginal

    if stripped:
        full = np.zeros((a.size, b.size))
        full[np.ix_(ia, ib)] = pi
        pi = full
    return TransportPlan(pi, a, b, converged, total_iter, err)


def exact_ot(a, b, C, oracle_bound=DEFAULT_ORACLE_BOUND):
    """Exact discrete OT via the dense LP (desk-scale oracle).

    Any optimal coupling is accepted; the minimal cost is the contract.
    """
    a = _check_weights(a, "source weights")
    b = _check_weights(b, "target weights")
    Cv = C.values if isinstance(C, CostMatrix) else np.asarray(C, dtype=float)
    m, n = Cv.shape
    if (m, n) != (a.size, b.size):
        raise ValueError("cost matrix shape does not match marginals")
    if m > oracle_bound or n > oracle_bound:
        raise ValueError(
            f"instance {m}x{n} exceeds exact-solver bound {oracle_bound}"
        )

    ia = np.flatnonzero(a > 0)
    ib = np.flatnonzero(b > 0)
    a_s, b_s, C_s = a[ia], b[ib], Cv[np.ix_(ia, ib)]
    ms, ns = a_s.size, b_s.size

    A_eq = np.zeros((ms + ns, ms * ns))
    for i in range(ms):
        A_eq[i, i * ns:(i + 1) * ns] = 1.0
    for j in range(ns):
        A_eq[ms + j, j::ns] = 1.0
    rhs = np.concatenate([a_s, b_s])
    res = linprog(C_s.ravel(), A_eq=A_eq, b_eq=rhs,
                  bounds=(0, None), method="highs")
    if not res.success:
        raise SolverError(f"exact OT LP failed: {res.message}")
    pi = np.maximum(res.x.reshape(ms, ns), 0.0)

    if ia.size < a.size or ib.size < b.size:
        full = np.zeros((a.size, b.size))
        full[np.ix_(ia, ib)] = pi
        pi = full
    err = _marginal_error(pi, a, b)
    return TransportPlan(pi, a, b, True, int(res.nit), err)


def transport_cost(plan, C):
    """Total cost <pi, C> of a transport plan."""
    Cv = C.values if isinstance(C, CostMatrix) else np.asarray(C, dtype=float)
    pi = plan.coupling if isinstance(plan, TransportPlan) else np.asarray(plan)
    if pi.shape != Cv.shape:
        raise ValueError(f"shape mismatch: plan {pi.shape} vs cost {Cv.shape}")
    return float(np.sum(pi * Cv))
