"""Quantitative STL semantics over piecewise-linear signals.

Evaluation points for a window [t + a, t + b] are its two endpoints plus
every point of a global lattice inside it.  The lattice is the union of
the signal knots and the multiples of ``dense_dt``.  Temporal operators are
evaluated for many query times at once: children are evaluated on the
union of all needed points and the window extremes come from a monotone
deque, so long signals stay linear-time per operator.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import CoverageError
from .formula import And, Always, Eventually, Not, Or, Predicate, Until, horizon

COVER_TOL = 1e-9


@dataclass(eq=False)
class SampledSignal:
    times: np.ndarray
    states: np.ndarray

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        st = np.asarray(self.states, dtype=float)
        self.states = st[:, None] if st.ndim == 1 else st
        if self.times.size < 2:
            raise ValueError("a signal needs at least two knots")
        if self.states.shape[0] != self.times.size:
            raise ValueError("one state per knot required")
        if np.any(np.diff(self.times) <= 0.0):
            raise ValueError("knot times must be strictly increasing")

    @classmethod
    def from_trajectory(cls, traj):
        return cls(traj.times, traj.states)

    def at(self, t):
        t = np.asarray(t, dtype=float)
        return np.stack([np.interp(t, self.times, self.states[:, i])
                         for i in range(self.states.shape[1])], axis=-1)


@njit(cache=True)
def _predicate_kernel(times, states, D, c, ts, seg):
    # interpolation written exactly as np.interp evaluates it; rows are summed
    # in a fixed order so batched and single-point queries agree bit for bit
    K = times.size
    n = states.shape[1]
    out = np.empty(ts.size)
    x = np.empty(n)
    for q in range(ts.size):
        t = ts[q]
        j = seg[q]
        if j < 0:
            for i in range(n):
                x[i] = states[0, i]
        elif j >= K - 1:
            for i in range(n):
                x[i] = states[K - 1, i]
        else:
            dt = times[j + 1] - times[j]
            for i in range(n):
                slope = (states[j + 1, i] - states[j, i]) / dt
                x[i] = slope * (t - times[j]) + states[j, i]
        best = np.inf
        for k in range(c.size):
            v = c[k]
            for i in range(n):
                v += x[i] * D[k, i]
            if v < best:
                best = v
        out[q] = best
    return out


@njit(cache=True)
def _window_extreme(vals, lo, hi, sign):
    # extreme of sign*vals over index windows [lo[i], hi[i]) with lo, hi nondecreasing
    nq = lo.size
    out = np.full(nq, -np.inf)
    dq = np.empty(vals.size, dtype=np.int64)
    head = 0
    tail = 0
    nxt = 0
    for i in range(nq):
        while nxt < hi[i]:
            v = sign * vals[nxt]
            while tail > head and sign * vals[dq[tail - 1]] <= v:
                tail -= 1
            dq[tail] = nxt
            tail += 1
            nxt += 1
        while tail > head and dq[head] < lo[i]:
            head += 1
        if tail > head and lo[i] < hi[i]:
            out[i] = sign * vals[dq[head]]
    return out


class _Evaluator:
    def __init__(self, sig: SampledSignal, predicates, dense_dt: float):
        self.sig = sig
        self.preds = predicates
        self.dd = float(dense_dt)
        self.t_lo = sig.times[0] - COVER_TOL
        self.t_hi = sig.times[-1] + COVER_TOL

    def lattice(self, lo, hi):
        k0 = int(np.ceil(lo / self.dd - 1e-12))
        k1 = int(np.floor(hi / self.dd + 1e-12))
        grid = np.arange(k0, k1 + 1) * self.dd
        grid = grid[(grid >= lo) & (grid <= hi)]
        kt = self.sig.times
        knots = kt[(kt >= lo) & (kt <= hi)]
        return np.union1d(grid, knots)

    def eval(self, node, ts):
        """Robustness of ``node`` at each time in ``ts`` (any order)."""
        ts = np.asarray(ts, dtype=float)
        if ts.size == 0:
            return np.zeros(0)
        if isinstance(node, Predicate):
            if ts.min() < self.t_lo or ts.max() > self.t_hi:
                raise CoverageError(f"signal covers [{self.sig.times[0]}, {self.sig.times[-1]}],"
                                    f" needed [{ts.min()}, {ts.max()}]")
            h = self.preds[node.name]
            seg = np.searchsorted(self.sig.times, ts, side="right") - 1
            return _predicate_kernel(self.sig.times, self.sig.states, np.asarray(h.D, dtype=float),
                                     np.asarray(h.c, dtype=float), ts, seg)
        if isinstance(node, Not):
            return -self.eval(node.child, ts)
        if isinstance(node, And):
            return np.min([self.eval(c, ts) for c in node.children], axis=0)
        if isinstance(node, Or):
            return np.max([self.eval(c, ts) for c in node.children], axis=0)
        if isinstance(node, (Eventually, Always)):
            return self._temporal(node, ts)
        if isinstance(node, Until):
            return self._until(node, ts)
        raise TypeError(f"unknown node {node!r}")

    def _temporal(self, node, ts):
        a, b = node.interval
        uniq, inv = np.unique(ts, return_inverse=True)
        lo = uniq + a
        hi = uniq + b
        lat = self.lattice(lo[0], hi[-1])
        pts = np.union1d(np.union1d(lat, lo), hi)
        vals = self.eval(node.child, pts)
        lat_vals = vals[np.searchsorted(pts, lat)]
        v_lo = vals[np.searchsorted(pts, lo)]
        v_hi = vals[np.searchsorted(pts, hi)]
        i0 = np.searchsorted(lat, lo, side="left")
        i1 = np.searchsorted(lat, hi, side="right")
        if isinstance(node, Eventually):
            inner = _window_extreme(lat_vals, i0, i1, 1.0)
            res = np.maximum(inner, np.maximum(v_lo, v_hi))
        else:
            inner = -_window_extreme(lat_vals, i0, i1, -1.0)
            inner[i0 >= i1] = np.inf
            res = np.minimum(inner, np.minimum(v_lo, v_hi))
        return res[inv]

    def _until(self, node, ts):
        a, b = node.interval
        out = np.empty(ts.size)
        for i, t in enumerate(ts):
            taus = np.union1d(self.lattice(t + a, t + b), [t + a, t + b])
            right = self.eval(node.right, taus)
            # left window [t, tau]: lattice points in it plus both endpoints
            span = np.union1d(self.lattice(t, t + b), [t])
            run = np.minimum.accumulate(self.eval(node.left, span))
            upto = np.minimum(run[np.searchsorted(span, taus, side="right") - 1],
                              self.eval(node.left, taus))
            out[i] = np.max(np.minimum(right, upto))
        return out


def default_dense_dt(sig: SampledSignal) -> float:
    return 0.5 * float(np.median(np.diff(sig.times)))


def robustness(f, sig: SampledSignal, predicates, t0: float = 0.0, dense_dt=None) -> float:
    """rho(f, sig, t0); ``predicates`` maps names to LinearPredicate."""
    if dense_dt is None:
        dense_dt = default_dense_dt(sig)
    if not dense_dt > 0.0:
        raise ValueError("dense_dt must be positive")
    need = t0 + horizon(f)
    if t0 < sig.times[0] - COVER_TOL or need > sig.times[-1] + COVER_TOL:
        raise CoverageError(f"signal covers [{sig.times[0]}, {sig.times[-1]}], "
                            f"formula needs [{t0}, {need}]")
    return float(_Evaluator(sig, predicates, dense_dt).eval(f, np.array([float(t0)]))[0])


def satisfies_with_degree(f, sig: SampledSignal, r: float, predicates, t0: float = 0.0,
                          dense_dt=None) -> bool:
    return robustness(f, sig, predicates, t0, dense_dt) >= r
