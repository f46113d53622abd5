"""Min-norm barrier controller, Lie-derivative checks and closed-loop rollouts.

For a task row k (d_k, c_k) on segment i, forward invariance asks

    d_k.(A x + B u + p) + e_i + kappa (d_k.x + c_k + e_i t + g_i) >= 0,

which is affine in u.  The controller stacks these rows for every task
active at t together with the input set and returns the least-norm input.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .barrier import ConjunctionBarrier
from .dynamics import Dynamics
from .errors import ParametersUnbound, PreconditionError, QpInfeasible
from .geometry import contains
from .solvers import (
    MinNormSolver, min_norm_qp, min_norm_qp_warm, min_norm_qp_ws, qp_workspace, row_norms,
)
from .trajectory import Trajectory

ACTIVE_ROW_TOL = 1e-8
LIE_TOL = 1e-9


@dataclass(frozen=True)
class ControlSample:
    t: float
    x: np.ndarray
    u: np.ndarray
    active_rows: dict
    slack: float


@dataclass(eq=False)
class CbfRowTable:
    """Controller rows per interval: G u >= c0 + ct * t - W x.

    Interval ``j`` owns rows ``starts[j]:starts[j+1]``; the extra last
    interval (t >= beta_phi) holds only the input-set rows.
    """

    starts: np.ndarray
    G: np.ndarray
    W: np.ndarray
    c0: np.ndarray
    ct: np.ndarray
    task: np.ndarray  # task index per row, -1 for input rows

    def rows(self, j, x, t):
        s = slice(self.starts[j], self.starts[j + 1])
        return self.G[s], self.c0[s] + self.ct[s] * t - self.W[s] @ x


def _task_row_block(tb, dyn, kappa_gain, seg):
    D, c = tb.predicate.D, tb.predicate.c
    if seg == 1:
        e = -tb.gamma_bar / tb.alpha
        g = tb.gamma_bar - tb.r
    else:
        e, g = 0.0, -tb.r
    G = D @ dyn.B
    W = D @ dyn.A + kappa_gain * D
    c0 = -D @ dyn.p - e - kappa_gain * (c + g)
    ct = np.full(D.shape[0], -kappa_gain * e)
    return G, W, c0, ct


def cbf_row_table(cb: ConjunctionBarrier, dyn: Dynamics, kappa) -> CbfRowTable:
    cache = cb.__dict__.setdefault("_cbf_tables", {})
    key = (id(dyn), kappa.gain)
    hit = cache.get(key)
    if hit is not None and hit[0] is dyn:
        return hit[1]
    if not cb.is_bound:
        raise ParametersUnbound("barrier parameters must be bound before control")
    n, m = dyn.n, dyn.m
    U = dyn.input_set
    u_block = (-U.A, np.zeros((U.n_rows, n)), -U.b, np.zeros(U.n_rows))
    Gs, Ws, c0s, cts, owners, starts = [], [], [], [], [], [0]
    for s0, _ in cb.intervals() + [(cb.beta_phi, None)]:
        for l in (cb.switch_map(s0) if s0 < cb.beta_phi else ()):
            tb = cb.tasks[l]
            seg = 2 if (tb.alpha == 0.0 or s0 >= tb.alpha) else 1
            blk = _task_row_block(tb, dyn, kappa.gain, seg)
            for lst, arr in zip((Gs, Ws, c0s, cts), blk):
                lst.append(arr)
            owners.append(np.full(tb.predicate.n_rows, l))
        for lst, arr in zip((Gs, Ws, c0s, cts), u_block):
            lst.append(arr)
        owners.append(np.full(U.n_rows, -1))
        starts.append(sum(a.shape[0] for a in Gs))
    table = CbfRowTable(np.array(starts), np.ascontiguousarray(np.vstack(Gs)),
                        np.ascontiguousarray(np.vstack(Ws)), np.concatenate(c0s),
                        np.concatenate(cts), np.concatenate(owners))
    cache[key] = (dyn, table)
    return table


def _interval_for(cb, t):
    if t >= cb.beta_phi or cb.n_tasks == 0:
        return len(cb.switch_times) - 1
    return cb.interval_index(t)


def qp_constraints(cb, dyn, kappa, x, t):
    table = cbf_row_table(cb, dyn, kappa)
    return table.rows(_interval_for(cb, t), np.asarray(x, dtype=float), t)


def cbf_qp_control(cb: ConjunctionBarrier, dyn: Dynamics, kappa, x, t, qp=None) -> np.ndarray:
    """Least-norm u in U satisfying every row of every task active at ``t``.

    At a switch instant the right-limit rows are used.
    """
    G, h = qp_constraints(cb, dyn, kappa, x, t)
    if qp is None or isinstance(qp, MinNormSolver):
        u, status, worst = min_norm_qp(np.ascontiguousarray(G), np.ascontiguousarray(h))
        if status == 0:
            return u
        worst_row = int(worst)
    else:
        sol = qp(np.eye(dyn.m), np.zeros(dyn.m), G, h)
        if sol.status == "optimal":
            return sol.x
        worst_row = None
    raise QpInfeasible(f"controller QP infeasible at t={t}", worst_row=worst_row, t=t)


def check_lie_condition(cb: ConjunctionBarrier, dyn: Dynamics, kappa, x, t, u):
    """(holds, margin) of the active-row condition for tasks active at ``t``."""
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    xdot = dyn.f(x, u)
    margin = np.inf
    for l in cb.switch_map(t):
        tb = cb.tasks[l]
        seg = 2 if (tb.alpha == 0.0 or t >= tb.alpha) else 1
        e = -tb.gamma_bar / tb.alpha if seg == 1 else 0.0
        A, b = cb.task_rows(l, t)
        vals = b - A @ x
        bl = vals.min()
        act = vals - bl <= ACTIVE_ROW_TOL
        rates = tb.predicate.D[act] @ xdot + e
        margin = min(margin, float(np.min(rates + kappa.gain * bl)))
    return margin >= -LIE_TOL, margin


def control_sample(cb, dyn, kappa, x, t, u) -> ControlSample:
    x = np.asarray(x, dtype=float)
    active = {}
    for l in cb.switch_map(t):
        A, b = cb.task_rows(l, t)
        vals = b - A @ x
        active[l] = tuple(int(k) for k in np.flatnonzero(vals - vals.min() <= ACTIVE_ROW_TOL))
    _, slack = check_lie_condition(cb, dyn, kappa, x, t, u)
    return ControlSample(float(t), x, np.asarray(u, dtype=float), active, slack)


# ---------------------------------------------------------------- rollouts

def rollout_grid(cb: ConjunctionBarrier, dt: float, t_end=None):
    """Uniform knots at multiples of dt with every switch time inserted.

    ``t_end`` defaults to the barrier horizon, which reaches past beta_phi
    when the formula itself does (nested windows).
    """
    t_end = cb.horizon if t_end is None else t_end
    k = int(np.floor(t_end / dt + 1e-9))
    grid = np.arange(k + 1) * dt
    extra = [s for s in cb.switch_times if 0.0 < s <= t_end] + [t_end]
    times = np.union1d(grid, extra)
    # merge knots closer than 1e-9 s, keeping the inserted (exact) one
    keep = np.ones(times.size, dtype=bool)
    exact = set(extra)
    for i in range(1, times.size):
        if times[i] - times[i - 1] < 1e-9:
            if times[i] in exact:
                keep[i - 1] = False
            else:
                keep[i] = False
    times = times[keep]
    times[0] = 0.0
    return times


def barrier_values(cb: ConjunctionBarrier, times, states):
    """b(x_k, t_k) with tasks expiring at t_k still counted (+inf if none)."""
    times = np.ascontiguousarray(times, dtype=float)
    states = np.ascontiguousarray(states, dtype=float)
    if cb.n_tasks == 0:
        return np.full(times.size, np.inf)
    D = np.ascontiguousarray(np.vstack([tb.predicate.D for tb in cb.tasks]))
    c = np.concatenate([tb.predicate.c for tb in cb.tasks])
    starts = np.cumsum([0] + [tb.predicate.n_rows for tb in cb.tasks]).astype(np.int64)
    par = np.array([[tb.alpha, tb.beta, tb.gamma_bar, tb.r] for tb in cb.tasks], dtype=float)
    return _barrier_kernel(times, states, D, c, starts, par)


@njit(cache=True)
def _barrier_kernel(times, states, D, c, starts, par):
    K = times.size
    n = states.shape[1]
    out = np.full(K, np.inf)
    for k in range(K):
        t = times[k]
        best = np.inf
        for l in range(starts.size - 1):
            alpha, beta, gbar, r = par[l, 0], par[l, 1], par[l, 2], par[l, 3]
            if t > beta:
                continue
            h = np.inf
            for i in range(starts[l], starts[l + 1]):
                acc = c[i]
                for a in range(n):
                    acc += D[i, a] * states[k, a]
                if acc < h:
                    h = acc
            if alpha > 0.0 and t < alpha:
                gam = gbar - r - gbar * t / alpha
            else:
                gam = -r
            if h + gam < best:
                best = h + gam
        out[k] = best
    return out


@njit(cache=True)
def _rollout_kernel(x0, times, step_kind, step_int, Ad, Bd, pd, starts, G, W, c0, ct, gnorm):
    K = step_kind.size
    n = x0.size
    m = G.shape[1]
    X = np.empty((K + 1, n))
    U = np.zeros((K, m))
    X[0] = x0
    hbuf = np.empty(G.shape[0])
    ws = qp_workspace(m)
    u = ws[0]
    nact = 0
    j_prev = -1
    for k in range(K):
        j = step_int[k]
        r0 = starts[j]
        r1 = starts[j + 1]
        t = times[k]
        for i in range(r0, r1):
            acc = c0[i] + ct[i] * t
            for c in range(n):
                acc -= W[i, c] * X[k, c]
            hbuf[i - r0] = acc
        # the active set rarely changes between steps; try it first
        if j != j_prev or not min_norm_qp_warm(G[r0:r1], hbuf[:r1 - r0], 1e-10, nact, ws):
            status, worst, nact = min_norm_qp_ws(G[r0:r1], hbuf[:r1 - r0], 1e-10, gnorm[r0:r1], ws)
            if status != 0:
                return X, U, k, r0 + worst
        j_prev = j
        s = step_kind[k]
        for a in range(n):
            acc = pd[s, a]
            for b in range(n):
                acc += Ad[s, a, b] * X[k, b]
            for b in range(m):
                acc += Bd[s, a, b] * u[b]
            X[k + 1, a] = acc
        for b in range(m):
            U[k, b] = u[b]
    return X, U, -1, -1


class RolloutPlan:
    """Precomputed knots, ZOH maps and row table for repeated rollouts."""

    def __init__(self, cb, dyn, kappa, dt, t_end=None):
        if not dt > 0.0:
            raise ValueError("dt must be positive")
        self.cb, self.dyn, self.kappa, self.dt = cb, dyn, kappa, dt
        self.times = rollout_grid(cb, dt, t_end)
        h = np.diff(self.times)
        keys, kind = np.unique(np.round(h, 12), return_inverse=True)
        self.step_kind = kind.astype(np.int64)
        maps = [dyn.zoh(float(k)) for k in keys]
        self.Ad = np.ascontiguousarray(np.stack([m_[0] for m_ in maps]))
        self.Bd = np.ascontiguousarray(np.stack([m_[1] for m_ in maps]))
        self.pd = np.ascontiguousarray(np.stack([m_[2] for m_ in maps]))
        self.table = cbf_row_table(cb, dyn, kappa)
        self.gnorm = row_norms(self.table.G)
        self.step_int = self._intervals()

    def _intervals(self):
        t = self.times[:-1]
        st = np.asarray(self.cb.switch_times)
        j = np.searchsorted(st, t, side="right") - 1
        j = np.clip(j, 0, max(st.size - 2, 0))
        j[t >= self.cb.beta_phi] = st.size - 1
        return j.astype(np.int64)

    def run(self, x0, check_start=True) -> Trajectory:
        x0 = np.asarray(x0, dtype=float)
        if check_start and not contains(self.cb.set_at(0.0), x0, 1e-7):
            raise PreconditionError("x0 is outside the barrier set at t=0")
        tb = self.table
        X, U, fail, row = _rollout_kernel(x0, self.times, self.step_kind, self.step_int,
                                          self.Ad, self.Bd, self.pd, tb.starts, tb.G, tb.W,
                                          tb.c0, tb.ct, self.gnorm)
        if fail >= 0:
            t = float(self.times[fail])
            raise QpInfeasible(f"controller QP infeasible at t={t} (row {row}, "
                               f"task {int(tb.task[row])})", worst_row=int(row), t=t)
        return Trajectory(self.times, X, U, barrier_values(self.cb, self.times, X))


def rollout(cb: ConjunctionBarrier, dyn: Dynamics, kappa, x0, dt: float, qp=None,
            t_end=None) -> Trajectory:
    """Closed-loop ZOH rollout over [0, t_end] with the barrier controller.

    The default path runs the compiled kernel; passing another QP adapter
    switches to a plain Python loop around :func:`cbf_qp_control`.
    """
    plan = RolloutPlan(cb, dyn, kappa, dt, t_end)
    if qp is None or isinstance(qp, MinNormSolver):
        return plan.run(x0)
    x0 = np.asarray(x0, dtype=float)
    if not contains(cb.set_at(0.0), x0, 1e-7):
        raise PreconditionError("x0 is outside the barrier set at t=0")
    times = plan.times
    X = np.empty((times.size, dyn.n))
    U = np.empty((times.size - 1, dyn.m))
    X[0] = x0
    for k in range(times.size - 1):
        u = cbf_qp_control(cb, dyn, kappa, X[k], times[k], qp)
        Ad, Bd, pd = dyn.zoh(times[k + 1] - times[k])
        X[k + 1] = Ad @ X[k] + Bd @ u + pd
        U[k] = u
    return Trajectory(times, X, U, barrier_values(cb, times, X))
