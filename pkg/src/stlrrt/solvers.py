"""LP and QP backends behind small adapter interfaces.

* :class:`LinprogSolver` wraps HiGHS through ``scipy.optimize.linprog``.
* :class:`QuadprogSolver` wraps the dense Goldfarb-Idnani solver from
  ``quadprog`` (used for steer/bridge transcriptions).
* :func:`min_norm_qp` is a numba-compiled dual active-set method for the
  tiny ``min ||u||^2  s.t.  G u >= h`` problems solved at every controller
  step; it is also what :class:`MinNormSolver` exposes.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from numba import njit
from scipy.optimize import linprog

from .errors import SolverFailure


@dataclass
class LpSolution:
    status: str  # optimal | infeasible | unbounded | error
    x: Optional[np.ndarray]
    objective: Optional[float]
    message: str = ""


class LinprogSolver:
    """LP adapter: ``min c.x  s.t.  A_ub x <= b_ub, A_eq x = b_eq, bounds``."""

    def __init__(self, method: str = "highs", **options):
        self.method = method
        self.options = options

    def __call__(self, c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, bounds=None):
        if bounds is None:
            bounds = (None, None)
        res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds,
                      method=self.method, options=self.options or None)
        status = {0: "optimal", 2: "infeasible", 3: "unbounded"}.get(res.status, "error")
        x = np.asarray(res.x) if res.x is not None and status == "optimal" else None
        obj = float(res.fun) if status == "optimal" else None
        return LpSolution(status, x, obj, res.message)


@dataclass
class QpSolution:
    status: str  # optimal | infeasible | error
    x: Optional[np.ndarray]
    objective: Optional[float] = None
    message: str = ""


class QuadprogSolver:
    """QP adapter: ``min 1/2 x'Px + q'x  s.t.  A_eq x = b_eq, G x >= h``."""

    def __call__(self, P, q, G=None, h=None, A_eq=None, b_eq=None):
        import quadprog

        n = P.shape[0]
        blocks_C, blocks_b = [], []
        meq = 0
        if A_eq is not None and len(A_eq):
            blocks_C.append(np.asarray(A_eq, dtype=float))
            blocks_b.append(np.asarray(b_eq, dtype=float))
            meq = blocks_C[-1].shape[0]
        if G is not None and len(G):
            blocks_C.append(np.asarray(G, dtype=float))
            blocks_b.append(np.asarray(h, dtype=float))
        C = np.vstack(blocks_C).T if blocks_C else np.zeros((n, 0))
        b = np.concatenate(blocks_b) if blocks_b else np.zeros(0)
        try:
            x, f, *_ = quadprog.solve_qp(np.asarray(P, dtype=float), -np.asarray(q, dtype=float),
                                         C, b, meq)
        except ValueError as exc:
            msg = str(exc)
            if "inconsistent" in msg:
                return QpSolution("infeasible", None, None, msg)
            return QpSolution("error", None, None, msg)
        return QpSolution("optimal", x, float(f))


# ---------------------------------------------------------------- min-norm QP

@njit(cache=True)
def _solve_small(M, rhs, k, A, x):
    # Gaussian elimination with partial pivoting on the leading k x k block;
    # A and x are scratch buffers, the solution is left in x[:k]
    for a in range(k):
        x[a] = rhs[a]
        for b in range(k):
            A[a, b] = M[a, b]
    for col in range(k):
        piv = col
        for r in range(col + 1, k):
            if abs(A[r, col]) > abs(A[piv, col]):
                piv = r
        if piv != col:
            for c in range(k):
                tmp = A[col, c]
                A[col, c] = A[piv, c]
                A[piv, c] = tmp
            tmp = x[col]
            x[col] = x[piv]
            x[piv] = tmp
        d = A[col, col]
        for r in range(col + 1, k):
            f = A[r, col] / d
            if f != 0.0:
                for c in range(col, k):
                    A[r, c] -= f * A[col, c]
                x[r] -= f * x[col]
    for r in range(k - 1, -1, -1):
        s = x[r]
        for c in range(r + 1, k):
            s -= A[r, c] * x[c]
        x[r] = s / A[r, r]


@njit(cache=True)
def qp_workspace(m):
    """Scratch buffers for :func:`min_norm_qp_ws` with m inputs."""
    return (np.zeros(m), np.empty(m, dtype=np.int64), np.zeros(m), np.empty((m, m)),
            np.empty(m), np.empty(m), np.empty((m, m)), np.empty(m))


@njit(cache=True)
def row_norms(G):
    out = np.empty(G.shape[0])
    for i in range(G.shape[0]):
        acc = 0.0
        for c in range(G.shape[1]):
            acc += G[i, c] * G[i, c]
        out[i] = np.sqrt(acc)
    return out


@njit(cache=True)
def min_norm_qp_ws(G, h, tol, gnorm, ws):
    """Allocation-free core of :func:`min_norm_qp`; the result is left in ws[0].

    ``gnorm`` holds the Euclidean norm of each row of G.  Returns
    (status, worst_row, n_active); the active rows end up in ws[1][:n_active].
    """
    u, act, lam, M, rvec, z, A_s, r = ws
    nc, m = G.shape
    for c in range(m):
        u[c] = 0.0
        lam[c] = 0.0
    nact = 0
    for _outer in range(10 * (nc + m) + 10):
        # most violated constraint, violation measured relative to the row norm
        p = -1
        worst = 0.0
        for i in range(nc):
            s = -h[i]
            for c in range(m):
                s += G[i, c] * u[c]
            if s < -tol * (1.0 + abs(h[i])):
                score = s / gnorm[i] if gnorm[i] > 0.0 else -np.inf
                if p < 0 or score < worst:
                    worst = score
                    p = i
        if p < 0:
            return 0, -1, nact
        lam_p = 0.0
        for _inner in range(4 * m + 4):
            # z = (I - N'(NN')^-1 N) n_p ;  r = (NN')^-1 N n_p
            for a in range(nact):
                for b in range(nact):
                    acc = 0.0
                    for c in range(m):
                        acc += G[act[a], c] * G[act[b], c]
                    M[a, b] = acc
                acc = 0.0
                for c in range(m):
                    acc += G[act[a], c] * G[p, c]
                rvec[a] = acc
            if nact > 0:
                _solve_small(M, rvec, nact, A_s, r)
            znorm = 0.0
            np2 = 0.0
            for c in range(m):
                v = G[p, c]
                for a in range(nact):
                    v -= G[act[a], c] * r[a]
                z[c] = v
                znorm += v * v
                np2 += G[p, c] * G[p, c]
            t1 = np.inf
            k = -1
            for a in range(nact):
                if r[a] > 1e-14 and lam[a] / r[a] < t1:
                    t1 = lam[a] / r[a]
                    k = a
            s_p = -h[p]
            for c in range(m):
                s_p += G[p, c] * u[c]
            t2 = np.inf
            if znorm > 1e-14 * max(np2, 1e-300):
                zn = 0.0
                for c in range(m):
                    zn += z[c] * G[p, c]
                t2 = -s_p / zn
            if t1 == np.inf and t2 == np.inf:
                return 1, p, nact
            if t2 == np.inf:
                for a in range(nact):
                    lam[a] -= t1 * r[a]
                lam_p += t1
            else:
                t = min(t1, t2)
                for c in range(m):
                    u[c] += t * z[c]
                for a in range(nact):
                    lam[a] -= t * r[a]
                lam_p += t
                if t2 <= t1:
                    act[nact] = p
                    lam[nact] = lam_p
                    nact += 1
                    break
            # drop constraint k and retry adding p
            for a in range(k, nact - 1):
                act[a] = act[a + 1]
                lam[a] = lam[a + 1]
            nact -= 1
    return 2, -1, nact


@njit(cache=True)
def min_norm_qp_warm(G, h, tol, nact, ws):
    """Re-use the active rows ws[1][:nact] of an earlier solve.

    Solves the equality system on those rows and accepts the result only if
    the KKT conditions hold (multipliers >= 0, every row satisfied), so an
    accepted u is the exact optimum.  Returns False when the caller must
    fall back to :func:`min_norm_qp_ws`.
    """
    u, act, _, M, rvec, _, A_s, lam = ws
    nc, m = G.shape
    if nact == 0:
        return False
    for a in range(nact):
        for b in range(nact):
            acc = 0.0
            for c in range(m):
                acc += G[act[a], c] * G[act[b], c]
            M[a, b] = acc
        rvec[a] = h[act[a]]
    _solve_small(M, rvec, nact, A_s, lam)
    for a in range(nact):
        if not lam[a] >= 0.0:
            return False
    for c in range(m):
        acc = 0.0
        for a in range(nact):
            acc += G[act[a], c] * lam[a]
        u[c] = acc
    for i in range(nc):
        s = -h[i]
        for c in range(m):
            s += G[i, c] * u[c]
        if not s >= -tol * (1.0 + abs(h[i])):
            return False
    return True


@njit(cache=True)
def min_norm_qp(G, h, tol=1e-10):
    """Minimize ||u||^2 subject to G u >= h (dual active set, identity Hessian).

    Returns (u, status, worst_row): status 0 = optimal, 1 = infeasible,
    2 = iteration limit.  ``worst_row`` is the last constraint that could
    not be satisfied (or -1).
    """
    ws = qp_workspace(G.shape[1])
    status, worst, _ = min_norm_qp_ws(G, h, tol, row_norms(G), ws)
    return ws[0].copy(), status, worst


class MinNormSolver:
    """Adapter exposing :func:`min_norm_qp` with the QuadprogSolver call shape
    (only ``P = I``, ``q = 0`` problems)."""

    def __call__(self, P, q, G=None, h=None, A_eq=None, b_eq=None):
        if A_eq is not None and len(A_eq):
            raise SolverFailure("MinNormSolver does not support equality rows")
        G = np.ascontiguousarray(G, dtype=float)
        h = np.ascontiguousarray(h, dtype=float)
        u, status, worst = min_norm_qp(G, h)
        if status == 0:
            return QpSolution("optimal", u, 0.5 * float(u @ u))
        if status == 1:
            return QpSolution("infeasible", None, None, f"row {worst}")
        return QpSolution("error", None, None, "iteration limit")
