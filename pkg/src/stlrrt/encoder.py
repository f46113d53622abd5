"""Vertex-based LP that fixes the barrier parameters (gamma_bar_l, r_l).

Decision vector layout, in order:

    [gamma_bar_0, r_0, ..., gamma_bar_L, r_L]       2 per task
    u[j, q, :]   one input per interval j and space-time vertex q
    xi[l, :]     viability witness at beta_l
    w[l, :]      witness of {x in X : h_l(x) >= r_l} being nonempty

Every constraint is stored as a row of ``A_ub z <= b_ub`` and carries one
block tag; the objective is ``-sum_l r_l``.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .barrier import (ConjunctionBarrier, TaskBarrier, segment_coefficients, upsilon_left)
from .dynamics import Dynamics
from .errors import AllInfeasible, InfeasibleEncoding, PreconditionError, SolverFailure
from .geometry import contains, enumerate_vertices, space_time_vertices
from .solvers import LinprogSolver

BLOCKS = ("param", "predicate-nonempty", "input", "initial", "viability", "invariance")
# relax-and-resolve order used to name the block responsible for infeasibility
DIAGNOSIS_ORDER = ("invariance", "viability", "initial", "predicate-nonempty", "input", "param")


@dataclass(frozen=True)
class ClassKGain:
    gain: float = 1.0

    def __post_init__(self):
        if not self.gain > 0.0:
            raise ValueError("class-K gain must be strictly positive")

    def __call__(self, s):
        return self.gain * s


@dataclass
class _Rows:
    rows: list = field(default_factory=list)
    cols: list = field(default_factory=list)
    vals: list = field(default_factory=list)
    rhs: list = field(default_factory=list)
    tags: list = field(default_factory=list)
    count: int = 0

    def add(self, r, c, v, rhs, tag):
        """Append a block of rows; ``r`` are local row ids 0..len(rhs)-1."""
        rhs = np.atleast_1d(np.asarray(rhs, dtype=float))
        self.rows.append(np.asarray(r, dtype=np.int64).ravel() + self.count)
        self.cols.append(np.asarray(c, dtype=np.int64).ravel())
        self.vals.append(np.asarray(v, dtype=float).ravel())
        self.rhs.append(rhs)
        self.tags.extend([tag] * rhs.size)
        self.count += rhs.size


@dataclass(eq=False)
class LpLayout:
    tasks: tuple
    dyn: Dynamics
    x0: np.ndarray
    kappa: ClassKGain
    r_min: float
    barrier: ConjunctionBarrier
    intervals: list
    vertices: np.ndarray  # state vertices V_X
    c: np.ndarray
    A_ub: sp.csr_matrix
    b_ub: np.ndarray
    tags: np.ndarray
    u_offset: int
    xi_offset: int
    w_offset: int

    @property
    def n_vars(self):
        return self.c.size

    @property
    def n_vertices_z(self):
        return 2 * self.vertices.shape[0]

    def gamma_index(self, l):
        return 2 * l

    def r_index(self, l):
        return 2 * l + 1

    def u_index(self, j, q):
        m = self.dyn.m
        start = self.u_offset + (j * self.n_vertices_z + q) * m
        return slice(start, start + m)

    def xi_index(self, l):
        n = self.dyn.n
        return slice(self.xi_offset + l * n, self.xi_offset + (l + 1) * n)

    def w_index(self, l):
        n = self.dyn.n
        return slice(self.w_offset + l * n, self.w_offset + (l + 1) * n)

    def expected_var_count(self):
        L, n, m = len(self.tasks), self.dyn.n, self.dyn.m
        return 2 * L + len(self.intervals) * self.n_vertices_z * m + 2 * L * n

    def expected_row_counts(self):
        """Closed-form number of rows per block."""
        X, U = self.dyn.state_set, self.dyn.input_set
        nh = [t.predicate.n_rows for t in self.tasks]
        cb = self.barrier
        counts = dict.fromkeys(BLOCKS, 0)
        counts["param"] = 2 * len(self.tasks) + sum(t.alpha == 0.0 for t in self.tasks)
        counts["predicate-nonempty"] = sum(k + X.n_rows for k in nh)
        counts["input"] = len(self.intervals) * self.n_vertices_z * U.n_rows
        counts["initial"] = sum(nh)
        counts["viability"] = sum(X.n_rows + sum(nh[i] for i in cb.closed_map(t.beta))
                                  for t in self.tasks)
        counts["invariance"] = sum(self.n_vertices_z * sum(nh[i] for i in cb.switch_map(s))
                                   for s, _ in self.intervals)
        return counts

    def block_rows(self, tag):
        return np.flatnonzero(self.tags == tag)


def _state_rows(rows: _Rows, tb: TaskBarrier, l: int, t: float, seg: int, x_const=None,
                x_cols=None, tag=""):
    """Rows of  D x + c + gamma_l(t) >= 0  in <= form, x constant or a variable block."""
    D, c = tb.predicate.D, tb.predicate.c
    nh, n = D.shape
    cg, cr = segment_coefficients(tb, seg, t)
    local = np.arange(nh)
    r_idx = [np.repeat(local, 2)]
    c_idx = [np.tile([2 * l, 2 * l + 1], nh)]
    v = [np.tile([-cg, -cr], nh)]
    rhs = c.copy()
    if x_const is not None:
        rhs = rhs + D @ x_const
    else:
        r_idx.append(np.repeat(local, n))
        c_idx.append(np.tile(np.arange(x_cols.start, x_cols.stop), nh))
        v.append(-D.ravel())
    rows.add(np.concatenate(r_idx), np.concatenate(c_idx), np.concatenate(v), rhs, tag)


def _polytope_rows(rows: _Rows, P, cols, tag):
    k, n = P.A.shape
    rows.add(np.repeat(np.arange(k), n), np.tile(np.arange(cols.start, cols.stop), k),
             P.A.ravel(), P.b, tag)


def build_lp(tasks: Sequence[TaskBarrier], dyn: Dynamics, x0, kappa: ClassKGain = ClassKGain(),
             r_min: float = 1e-3, horizon: Optional[float] = None) -> LpLayout:
    if not r_min > 0.0:
        raise ValueError("r_min must be strictly positive")
    x0 = np.asarray(x0, dtype=float)
    X, U = dyn.state_set, dyn.input_set
    if not contains(X, x0, 1e-9):
        raise PreconditionError("x0 is outside the state set")
    tasks = tuple(tasks)
    for t in tasks:
        if t.predicate.dim != dyn.n:
            raise PreconditionError(f"predicate of {t.label} has dimension {t.predicate.dim}")
    L, n, m = len(tasks), dyn.n, dyn.m
    cb = ConjunctionBarrier(tasks, X, horizon)
    intervals = cb.intervals() if L else []
    VX = enumerate_vertices(X)
    nvz = 2 * len(VX)
    u_off = 2 * L
    xi_off = u_off + len(intervals) * nvz * m
    w_off = xi_off + L * n
    n_vars = w_off + L * n
    rows = _Rows()
    k = kappa.gain

    # (a) parameter domain
    for l, tb in enumerate(tasks):
        rows.add([0, 1], [2 * l, 2 * l + 1], [-1.0, -1.0], [0.0, -r_min], "param")
        if tb.alpha == 0.0:
            rows.add([0], [2 * l], [1.0], [0.0], "param")

    # (b) H^r nonempty: D w + c >= r, w in X
    for l, tb in enumerate(tasks):
        D, c = tb.predicate.D, tb.predicate.c
        nh = D.shape[0]
        cols = slice(w_off + l * n, w_off + (l + 1) * n)
        loc = np.arange(nh)
        rows.add(np.concatenate([np.repeat(loc, n), loc]),
                 np.concatenate([np.tile(np.arange(cols.start, cols.stop), nh),
                                 np.full(nh, 2 * l + 1)]),
                 np.concatenate([-D.ravel(), np.ones(nh)]), c, "predicate-nonempty")
        _polytope_rows(rows, X, cols, "predicate-nonempty")

    # (c) input rows at every (interval, vertex)
    nU = U.n_rows
    if intervals:
        blocks = len(intervals) * nvz
        loc_r = np.repeat(np.arange(blocks * nU), m)
        loc_c = u_off + (np.repeat(np.arange(blocks), nU * m) * m
                         + np.tile(np.arange(m), blocks * nU))
        rows.add(loc_r, loc_c, np.tile(U.A.ravel(), blocks), np.tile(U.b, blocks), "input")

    # (d) initial membership at (x0, 0)
    for l, tb in enumerate(tasks):
        seg = 2 if tb.alpha == 0.0 else 1
        _state_rows(rows, tb, l, 0.0, seg, x_const=x0, tag="initial")

    # (e) viability: xi_l in X and in the left limit of the conjunction at beta_l
    for l, tb in enumerate(tasks):
        cols = slice(xi_off + l * n, xi_off + (l + 1) * n)
        _polytope_rows(rows, X, cols, "viability")
        for i in cb.closed_map(tb.beta):
            other = tasks[i]
            _state_rows(rows, other, i, tb.beta, upsilon_left(other, tb.beta), x_cols=cols,
                        tag="viability")

    # (f) invariance at space-time vertices of each interval
    A, B, p = dyn.A, dyn.B, dyn.p
    for j, (s0, s1) in enumerate(intervals):
        Z = space_time_vertices(VX, s0, s1).vertices
        V, tau = Z[:, :n], Z[:, n]
        u_cols = u_off + j * nvz * m + np.arange(nvz * m).reshape(nvz, m)
        for l in cb.switch_map(s0):
            tb = tasks[l]
            D, c = tb.predicate.D, tb.predicate.c
            nh = D.shape[0]
            seg = 2 if (tb.alpha == 0.0 or s0 >= tb.alpha) else 1
            # const[q, k] = d_k.(A v_q + p) + kappa (d_k.v_q + c_k)
            const = V @ (D @ A).T + D @ p + k * (V @ D.T + c)
            DB = D @ B  # (nh, m)
            if seg == 1:
                g_coef = -1.0 / tb.alpha + k * (1.0 - tau / tb.alpha)  # (nvz,)
            else:
                g_coef = np.zeros(nvz)
            nrow = nvz * nh
            loc = np.arange(nrow)
            # u part
            r_u = np.repeat(loc, m)
            c_u = np.repeat(u_cols, nh, axis=0).ravel()
            v_u = -np.tile(DB, (nvz, 1)).ravel()
            r_t = np.repeat(loc, 2)
            c_t = np.tile([2 * l, 2 * l + 1], nrow)
            v_t = np.column_stack([-np.repeat(g_coef, nh), np.full(nrow, k)]).ravel()
            rows.add(np.concatenate([r_u, r_t]), np.concatenate([c_u, c_t]),
                     np.concatenate([v_u, v_t]), const.ravel(), "invariance")

    if rows.count:
        A_ub = sp.csr_matrix((np.concatenate(rows.vals),
                              (np.concatenate(rows.rows), np.concatenate(rows.cols))),
                             shape=(rows.count, n_vars))
        b_ub = np.concatenate(rows.rhs)
    else:
        A_ub = sp.csr_matrix((0, n_vars))
        b_ub = np.zeros(0)
    c = np.zeros(n_vars)
    c[1:2 * L:2] = -1.0
    return LpLayout(tasks, dyn, x0, kappa, float(r_min), cb, intervals, VX.vertices, c, A_ub,
                    b_ub, np.array(rows.tags, dtype=object), u_off, xi_off, w_off)


@dataclass(eq=False)
class EncodingResult:
    status: str
    layout: LpLayout
    barrier: Optional[ConjunctionBarrier] = None
    r: Optional[np.ndarray] = None
    gamma_bar: Optional[np.ndarray] = None
    objective: Optional[float] = None
    wall_time: float = 0.0
    infeasible_block: Optional[str] = None
    solution: Optional[np.ndarray] = None
    message: str = ""

    @property
    def ok(self):
        return self.status == "optimal"

    @property
    def robustness(self) -> float:
        """min_l r_l (inf for an empty conjunction, -inf when not solved)."""
        if not self.ok:
            return -np.inf
        return float(np.min(self.r)) if self.r.size else np.inf

    def raise_for_status(self):
        if self.status == "infeasible":
            raise InfeasibleEncoding("encoding LP is infeasible", self.infeasible_block)
        if self.status != "optimal":
            raise SolverFailure(f"encoding LP failed: {self.status} {self.message}")
        return self

    def vertex_inputs(self, j: int) -> np.ndarray:
        lay = self.layout
        m = lay.dyn.m
        start = lay.u_offset + j * lay.n_vertices_z * m
        return self.solution[start:start + lay.n_vertices_z * m].reshape(-1, m)

    @property
    def xi(self):
        lay = self.layout
        return self.solution[lay.xi_offset:lay.w_offset].reshape(-1, lay.dyn.n)

    @property
    def w(self):
        lay = self.layout
        return self.solution[lay.w_offset:].reshape(-1, lay.dyn.n)

    def summary(self):
        d = {"status": self.status, "wall_time": self.wall_time}
        if self.ok:
            d.update(robustness=self.robustness, objective=self.objective,
                     tasks=[{"label": t.label, "kind": t.kind, "alpha": t.alpha,
                             "beta": t.beta, "gamma_bar": t.gamma_bar, "r": t.r}
                            for t in self.barrier.tasks])
        if self.infeasible_block:
            d["infeasible_block"] = self.infeasible_block
        return d


def _solve(layout, solver, keep):
    A = layout.A_ub[keep] if keep is not None else layout.A_ub
    b = layout.b_ub[keep] if keep is not None else layout.b_ub
    return solver(layout.c, A_ub=A, b_ub=b, bounds=(None, None))


def diagnose_infeasibility(layout: LpLayout, solver=None) -> Optional[str]:
    solver = solver or LinprogSolver()
    for tag in DIAGNOSIS_ORDER:
        keep = layout.tags != tag
        if keep.all():
            continue
        if _solve(layout, solver, np.flatnonzero(keep)).status != "infeasible":
            return tag
    return None


def solve_lp(layout: LpLayout, solver=None) -> EncodingResult:
    solver = solver or LinprogSolver()
    L = len(layout.tasks)
    t0 = time.perf_counter()
    if layout.n_vars == 0:
        cb = layout.barrier.bind([])
        return EncodingResult("optimal", layout, cb, np.zeros(0), np.zeros(0), 0.0,
                              time.perf_counter() - t0, solution=np.zeros(0))
    sol = _solve(layout, solver, None)
    wall = time.perf_counter() - t0
    if sol.status == "infeasible":
        block = diagnose_infeasibility(layout, solver)
        return EncodingResult("infeasible", layout, wall_time=wall, infeasible_block=block,
                              message=sol.message)
    if sol.status != "optimal":
        return EncodingResult(sol.status, layout, wall_time=wall, message=sol.message)
    z = sol.x
    gam = np.maximum(z[0:2 * L:2], 0.0)
    r = z[1:2 * L:2]
    cb = layout.barrier.bind(list(zip(gam, r)))
    return EncodingResult("optimal", layout, cb, r, gam, sol.objective, wall, solution=z)


def encode_disjunction(disjuncts, dyn: Dynamics, x0, kappa: ClassKGain = ClassKGain(),
                       r_min: float = 1e-3, horizons=None, solver=None):
    """Solve one LP per disjunct and pick the one with the largest min_l r_l.

    Returns ``(selected_index, results)``; ties go to the lowest index.
    """
    if not disjuncts:
        raise ValueError("need at least one disjunct")
    horizons = horizons or [None] * len(disjuncts)
    results = [solve_lp(build_lp(tasks, dyn, x0, kappa, r_min, h), solver)
               for tasks, h in zip(disjuncts, horizons)]
    best, best_val = None, -np.inf
    for i, res in enumerate(results):
        if res.ok and res.robustness > best_val:
            best, best_val = i, res.robustness
    if best is None:
        raise AllInfeasible("no disjunct admits a feasible encoding: "
                            + ", ".join(f"#{i}: {r.status}" for i, r in enumerate(results)))
    return best, results
