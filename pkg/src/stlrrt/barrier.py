"""Time-varying barrier sets for atomic tasks and their conjunctions.

Each task gets b(x, t) = h(x) + gamma(t) where gamma is piecewise linear on
the switching sequence (0, alpha, beta):

    gamma(t) = gamma_bar - r - (gamma_bar / alpha) t    on [0, alpha]
    gamma(t) = -r                                       on [alpha, beta]

A conjunction keeps task ``l`` only while ``beta_l > t``.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import (FreeTimeOutOfRange, NotASwitchTime, OutOfDomain, ParametersUnbound)
from .formula import AtomicTask
from .geometry import LinearPredicate, Polytope

TIME_TOL = 1e-9


@dataclass(frozen=True)
class AffineForm:
    """Array-valued affine function  const + gamma * gamma_bar + r_coef * r."""

    const: np.ndarray
    gamma: np.ndarray
    r_coef: np.ndarray

    def at(self, gamma_bar: float, r: float) -> np.ndarray:
        return self.const + self.gamma * gamma_bar + self.r_coef * r


@dataclass(frozen=True, eq=False)
class TaskBarrier:
    predicate: LinearPredicate
    alpha: float
    beta: float
    kind: str = "G"
    label: str = ""
    gamma_bar: Optional[float] = None
    r: Optional[float] = None

    def __post_init__(self):
        if not (0.0 <= self.alpha <= self.beta):
            raise ValueError(f"need 0 <= alpha <= beta, got alpha={self.alpha}, beta={self.beta}")
        if self.gamma_bar is not None and self.gamma_bar < 0.0:
            raise ValueError("gamma_bar must be nonnegative")
        if self.r is not None and self.r <= 0.0:
            raise ValueError("r must be positive")

    @property
    def is_bound(self) -> bool:
        return self.gamma_bar is not None and self.r is not None

    def bind(self, gamma_bar: float, r: float) -> "TaskBarrier":
        if self.alpha == 0.0:
            gamma_bar = 0.0
        return dataclasses.replace(self, gamma_bar=max(float(gamma_bar), 0.0), r=float(r))

    def _require_bound(self):
        if not self.is_bound:
            raise ParametersUnbound(f"task {self.label or self.kind} has no (gamma_bar, r)")


def make_task_barrier(task: AtomicTask, predicate: LinearPredicate,
                      free_time: Optional[float] = None) -> TaskBarrier:
    """Switching times per task kind.

    F:  alpha in [a, b] (midpoint by default), beta = alpha
    G:  alpha = a, beta = b
    FG: alpha in [a + a', b + a'] (midpoint by default), beta = alpha + (b' - a')
    """
    a, b = task.interval
    if task.kind == "G":
        if free_time is not None and abs(free_time - a) > TIME_TOL:
            raise FreeTimeOutOfRange(f"G tasks have fixed alpha={a}, got {free_time}")
        alpha, beta = a, b
    elif task.kind == "F":
        alpha = 0.5 * (a + b) if free_time is None else float(free_time)
        if not (a - TIME_TOL <= alpha <= b + TIME_TOL):
            raise FreeTimeOutOfRange(f"alpha={alpha} outside [{a}, {b}] for {task.label}")
        alpha = min(max(alpha, a), b)
        beta = alpha
    elif task.kind == "FG":
        a2, b2 = task.inner
        lo, hi = a + a2, b + a2
        alpha = 0.5 * (lo + hi) if free_time is None else float(free_time)
        if not (lo - TIME_TOL <= alpha <= hi + TIME_TOL):
            raise FreeTimeOutOfRange(f"alpha={alpha} outside [{lo}, {hi}] for {task.label}")
        alpha = min(max(alpha, lo), hi)
        beta = alpha + (b2 - a2)
    else:
        raise ValueError("GF tasks must be decomposed into F tasks first")
    return TaskBarrier(predicate, float(alpha), float(beta), task.kind, task.label)


def _check_domain(tb, t):
    if t < -TIME_TOL or t > tb.beta + TIME_TOL:
        raise OutOfDomain(f"t={t} outside [0, {tb.beta}]")


def upsilon(tb: TaskBarrier, t: float) -> int:
    _check_domain(tb, t)
    if tb.alpha == 0.0 or t >= tb.alpha:
        return 2
    return 1


def upsilon_left(tb: TaskBarrier, t: float) -> int:
    """Segment index of the interval ending at ``t``."""
    if tb.alpha == 0.0 or t > tb.alpha:
        return 2
    return 1


def gamma_eval(tb: TaskBarrier, t: float) -> float:
    _check_domain(tb, t)
    tb._require_bound()
    return _gamma(tb, t, upsilon(tb, t))


def _gamma(tb, t, seg):
    if seg == 1:
        return tb.gamma_bar - tb.r - tb.gamma_bar * t / tb.alpha
    return -tb.r


def segment_coefficients(tb: TaskBarrier, seg: int, t: float):
    """gamma(t) on segment ``seg`` as (coef of gamma_bar, coef of r)."""
    if seg == 1 and tb.alpha > 0.0:
        return 1.0 - t / tb.alpha, -1.0
    return 0.0, -1.0


def matrix_form(tb: TaskBarrier, segment: int):
    """(E, g) with E = [D | 1 e_i] and g = 1 g_i + c as affine forms in (gamma_bar, r).

    With alpha = 0 the first segment is empty and both indices give the
    constant segment.
    """
    if segment not in (1, 2):
        raise ValueError("segment must be 1 or 2")
    D, c = tb.predicate.D, tb.predicate.c
    nh, n = D.shape
    E_const = np.hstack([D, np.zeros((nh, 1))])
    E_gamma = np.zeros((nh, n + 1))
    E_r = np.zeros((nh, n + 1))
    g_gamma = np.zeros(nh)
    if segment == 1 and tb.alpha > 0.0:
        E_gamma[:, n] = -1.0 / tb.alpha
        g_gamma[:] = 1.0
    E = AffineForm(E_const, E_gamma, E_r)
    g = AffineForm(c.copy(), g_gamma, -np.ones(nh))
    return E, g


class ConjunctionBarrier:
    """Intersection of task barrier sets with the switch map {l : beta_l > t}."""

    def __init__(self, tasks: Sequence[TaskBarrier], state_set: Polytope,
                 horizon: Optional[float] = None):
        self.tasks = tuple(tasks)
        self.state_set = state_set
        times = sorted({0.0} | {t.alpha for t in self.tasks} | {t.beta for t in self.tasks})
        dedup = []
        for s in times:
            if not dedup or s - dedup[-1] > TIME_TOL:
                dedup.append(s)
        self.switch_times = tuple(dedup)
        self.beta_phi = max((t.beta for t in self.tasks), default=0.0)
        self.horizon = max(self.beta_phi, horizon if horizon is not None else 0.0)
        self._betas = np.array([t.beta for t in self.tasks])

    @property
    def n_tasks(self):
        return len(self.tasks)

    @property
    def is_bound(self):
        return all(t.is_bound for t in self.tasks)

    def bind(self, params) -> "ConjunctionBarrier":
        """``params``: sequence of (gamma_bar, r) per task."""
        tasks = [t.bind(g, r) for t, (g, r) in zip(self.tasks, params, strict=True)]
        return ConjunctionBarrier(tasks, self.state_set, self.horizon)

    @property
    def robustness(self) -> float:
        return min((t.r for t in self.tasks), default=np.inf)

    def intervals(self):
        s = self.switch_times
        return list(zip(s[:-1], s[1:]))

    def interval_index(self, t: float) -> int:
        """Index j with s_j <= t < s_{j+1} (last interval for t >= beta_phi)."""
        j = int(np.searchsorted(self.switch_times, t, side="right")) - 1
        return min(max(j, 0), max(len(self.switch_times) - 2, 0))

    def switch_map(self, t: float) -> tuple:
        return tuple(int(l) for l in np.flatnonzero(self._betas > t))

    def closed_map(self, t: float) -> tuple:
        """Tasks with beta_l >= t: the active set just before ``t``."""
        return tuple(int(l) for l in np.flatnonzero(self._betas >= t))

    def task_rows(self, l: int, t: float, left: bool = False):
        """Rows (A, b) of task ``l`` at time ``t`` in ``A x <= b`` form."""
        tb = self.tasks[l]
        tb._require_bound()
        seg = upsilon_left(tb, t) if left else (2 if tb.alpha == 0.0 or t >= tb.alpha else 1)
        gam = _gamma(tb, t, seg)
        return -tb.predicate.D, tb.predicate.c + gam

    def _polytope(self, active, t, left):
        X = self.state_set
        if not active:
            return X
        rows = [self.task_rows(l, t, left) for l in active]
        A = np.vstack([X.A] + [r[0] for r in rows])
        b = np.concatenate([X.b] + [r[1] for r in rows])
        return Polytope(A, b, check=False)

    def set_at(self, t: float, closed: bool = False) -> Polytope:
        """X intersected with the rows of active tasks at ``t``.

        ``closed=True`` also keeps tasks expiring exactly at ``t``; the
        planner uses it at knots so point visits are enforced.
        """
        if t < -TIME_TOL:
            raise OutOfDomain(f"t={t} is negative")
        active = self.closed_map(t) if closed else self.switch_map(t)
        return self._polytope(active, t, left=False)

    def limit_from_left(self, t: float) -> Polytope:
        if t <= 0.0 or not any(abs(t - s) <= TIME_TOL for s in self.switch_times):
            raise NotASwitchTime(f"t={t} is not a positive switch time")
        return self._polytope(self.closed_map(t), t, left=True)

    def value(self, x, t: float, closed: bool = False) -> float:
        """min over active tasks of h_l(x) + gamma_l(t); +inf when none is active."""
        x = np.asarray(x, dtype=float)
        active = self.closed_map(t) if closed else self.switch_map(t)
        best = np.inf
        for l in active:
            A, b = self.task_rows(l, t)
            best = min(best, float(np.min(b - A @ x)))
        return best
