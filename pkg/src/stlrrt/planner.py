"""Time-consistent RRT* inside a time-varying barrier set.

Nodes are (state, time) pairs; edges are ZOH trajectories produced by two
finite-horizon QPs.  ``steer`` grows the tree toward a sample, ``bridge``
connects two existing nodes during rewiring.  Both are condensed: the
decision vector holds only the inputs, states are affine in it.
"""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .barrier import TIME_TOL, ConjunctionBarrier
from .dynamics import Dynamics
from .errors import NoEligibleNode, NoSolution, QpInfeasible, ZeroDuration
from .geometry import Polytope, contains, sample_uniform, segments_meet
from .invariance import barrier_values
from .solvers import QuadprogSolver
from .trajectory import Trajectory

log = logging.getLogger(__name__)

MEMBERSHIP_TOL = 1e-7
AUDIT_EVERY = 100


@dataclass
class PlannerParams:
    Q: np.ndarray
    R: np.ndarray
    delta_max: float
    eps_rewire: float
    n_max: int = 500
    dt: float = 1.0
    collision_resolution: Optional[float] = None
    seed: int = 0
    horizon_bias: float = 0.1   # probability of sampling t = t_hr exactly
    rewire_cap: int = 25
    time_scale: float = 1.0     # weight of |t - t'| in dist
    dense_check: bool = True
    audit: bool = True

    def __post_init__(self):
        self.Q = np.atleast_2d(np.asarray(self.Q, dtype=float))
        self.R = np.atleast_2d(np.asarray(self.R, dtype=float))
        for name, M in (("Q", self.Q), ("R", self.R)):
            if M.shape[0] != M.shape[1] or not np.allclose(M, M.T):
                raise ValueError(f"{name} must be square and symmetric")
            if np.min(np.linalg.eigvalsh(M)) <= 0.0:
                raise ValueError(f"{name} must be positive definite")
        if not self.delta_max > 0.0:
            raise ValueError("delta_max must be positive")
        if not self.eps_rewire > 0.0:
            raise ValueError("eps_rewire must be positive")
        if not self.dt > 0.0:
            raise ValueError("dt must be positive")
        if self.collision_resolution is None:
            self.collision_resolution = self.dt / 4.0

    @classmethod
    def from_scenario(cls, sc, seed=None, n_max=None):
        p = dict(sc.planner)
        return cls(Q=p["Q"], R=p["R"], delta_max=p["delta_max"], eps_rewire=p["eps_rewire"],
                   n_max=int(n_max if n_max is not None else p["n_max"]), dt=p["dt"],
                   collision_resolution=p.get("collision_resolution"),
                   seed=int(seed if seed is not None else sc.seed),
                   horizon_bias=p.get("horizon_bias", 0.1), rewire_cap=p.get("rewire_cap", 25))


# ---------------------------------------------------------------- tree

class PlanTree:
    """Rooted tree of (x, t) nodes with cached cost-to-go."""

    def __init__(self, x0, t0: float = 0.0):
        x0 = np.asarray(x0, dtype=float)
        self._X = np.empty((64, x0.size))
        self._X[0] = x0
        self._T = np.empty(64)
        self._T[0] = t0
        self.size = 1
        self.parent = [-1]
        self.edge: list = [None]
        self.cost = [0.0]
        self.children: list = [set()]

    def __len__(self):
        return self.size

    @property
    def X(self):
        return self._X[:self.size]

    @property
    def T(self):
        return self._T[:self.size]

    def x(self, i):
        return self._X[i]

    def t(self, i):
        return float(self._T[i])

    def add(self, parent: int, traj: Trajectory) -> int:
        if self.size == self._T.size:
            self._X = np.vstack([self._X, np.empty_like(self._X)])
            self._T = np.concatenate([self._T, np.empty_like(self._T)])
        i = self.size
        self._X[i] = traj.x1
        self._T[i] = traj.t1
        self.size += 1
        self.parent.append(parent)
        self.edge.append(traj)
        self.cost.append(self.cost[parent] + traj.length())
        self.children.append(set())
        self.children[parent].add(i)
        return i

    def ancestors(self, i):
        out = []
        p = self.parent[i]
        while p >= 0:
            out.append(p)
            p = self.parent[p]
        return out

    def subtree(self, i):
        out, stack = [], [i]
        while stack:
            k = stack.pop()
            out.append(k)
            stack.extend(self.children[k])
        return out

    def path(self, i):
        """Node ids from the root to ``i``."""
        return (self.ancestors(i)[::-1] + [i])

    def reparent(self, r: int, j: int, traj: Trajectory) -> bool:
        """Make ``j`` the parent of ``r`` via ``traj``; False if a cycle would form."""
        if r == 0 or j in self.subtree(r):
            log.warning("rewire %d -> %d skipped: cycle", j, r)
            return False
        old = self.parent[r]
        self.children[old].discard(r)
        self.children[j].add(r)
        self.parent[r] = j
        self.edge[r] = traj
        delta = self.cost[j] + traj.length() - self.cost[r]
        for k in self.subtree(r):
            self.cost[k] += delta
        return True

    def recompute_cost(self, i) -> float:
        return float(sum(self.edge[k].length() for k in self.path(i)[1:]))

    def audit(self, tol: float = 1e-6) -> float:
        """Largest gap between cached and recomputed cost-to-go; raises above ``tol``."""
        worst = 0.0
        for i in range(self.size):
            p = self.parent[i]
            if p >= 0 and self.t(p) > self.t(i) + TIME_TOL:
                raise RuntimeError(f"time order broken at edge {p}->{i}")
            worst = max(worst, abs(self.recompute_cost(i) - self.cost[i]))
        if worst > tol:
            raise RuntimeError(f"cost-to-go cache drifted by {worst}")
        return worst

    def trajectory_to(self, i) -> Trajectory:
        ids = self.path(i)
        if len(ids) == 1:
            raise ValueError("root has no incoming trajectory")
        return Trajectory.concatenate([self.edge[k] for k in ids[1:]])


def dist(x1, t1, x2, t2, time_scale: float = 1.0):
    return float(np.linalg.norm(np.asarray(x1) - np.asarray(x2)) + time_scale * abs(t1 - t2))


def past_nn(tree: PlanTree, x, t: float, time_scale: float = 1.0) -> int:
    """Nearest node with time <= t (ties to the lowest id)."""
    T = tree.T
    ok = T <= t + TIME_TOL
    if not ok.any():
        raise NoEligibleNode(f"no node has time <= {t}")
    d = np.linalg.norm(tree.X - np.asarray(x, dtype=float), axis=1) + time_scale * np.abs(t - T)
    d[~ok] = np.inf
    return int(np.argmin(d))


def future_nns(tree: PlanTree, j: int, eps_rewire: float, time_scale: float = 1.0):
    """Nodes within eps of j in dist with time >= t_j, minus j and its ancestors."""
    T = tree.T
    d = np.linalg.norm(tree.X - tree.x(j), axis=1) + time_scale * np.abs(T - tree.t(j))
    mask = (d <= eps_rewire) & (T >= tree.t(j) - TIME_TOL)
    mask[j] = False
    for a in tree.ancestors(j):
        mask[a] = False
    ids = np.flatnonzero(mask)
    return [int(i) for i in ids[np.argsort(d[ids], kind="stable")]]


# ---------------------------------------------------------------- transcription

def knot_times(t0: float, t1: float, dt: float, switch_times=()):
    """t0 + k dt up to t1, with t1 and the switch times inside (t0, t1) inserted."""
    n = int(math.floor((t1 - t0) / dt + 1e-9))
    grid = t0 + dt * np.arange(n + 1)
    extra = [s for s in switch_times if t0 + TIME_TOL < s < t1 - TIME_TOL]
    ts = np.union1d(grid, np.array(extra + [t1]))
    keep = np.concatenate([[True], np.diff(ts) > TIME_TOL])
    ts = ts[keep]
    ts[-1] = t1
    if ts.size >= 2 and ts[-1] - ts[-2] <= TIME_TOL:
        ts = np.delete(ts, -2)
    return ts


def _zoh(dyn, h):
    return dyn.zoh(round(float(h), 12))


def _condense(dyn: Dynamics, x0, times):
    """S[k], s[k] with x_k = S[k] @ u + s[k], u the stacked inputs."""
    N = times.size - 1
    n, m = dyn.n, dyn.m
    S = np.zeros((N + 1, n, N * m))
    s = np.zeros((N + 1, n))
    s[0] = x0
    for k in range(N):
        Ad, Bd, pd = _zoh(dyn, times[k + 1] - times[k])
        S[k + 1] = Ad @ S[k]
        S[k + 1][:, k * m:(k + 1) * m] += Bd
        s[k + 1] = Ad @ s[k] + pd
    return S, s


def _knot_rows(cb: ConjunctionBarrier, t: float):
    P = cb.set_at(t, closed=True)
    return P.A, P.b


def _transcribe(cb, dyn, params, x0, times, x_ref):
    """Objective and inequality rows of the condensed QP."""
    N = times.size - 1
    m = dyn.m
    h = np.diff(times)
    S, s = _condense(dyn, x0, times)
    Q, R = params.Q, params.R
    P = np.zeros((N * m, N * m))
    q = np.zeros(N * m)
    for k in range(1, N + 1):
        w = h[k - 1]
        SQ = S[k].T @ Q
        P += w * SQ @ S[k]
        q += w * SQ @ (s[k] - x_ref)
        sl = slice((k - 1) * m, k * m)
        P[sl, sl] += w * R
    P = 0.5 * (P + P.T)
    U = dyn.input_set
    Gs, hs = [], []
    for k in range(N):
        G = np.zeros((U.n_rows, N * m))
        G[:, k * m:(k + 1) * m] = -U.A
        Gs.append(G)
        hs.append(-U.b)
    for k in range(1, N + 1):
        A, b = _knot_rows(cb, float(times[k]))
        Gs.append(-A @ S[k])
        hs.append(A @ s[k] - b)
    G = np.vstack(Gs)
    hh = np.concatenate(hs)
    # drop rows that do not involve u (state rows whose value is fixed)
    nz = np.abs(G).max(axis=1) > 1e-14
    if np.any(hh[~nz] > MEMBERSHIP_TOL):
        raise QpInfeasible("a fixed-state row is violated", worst_row=int(np.argmax(hh * ~nz)))
    return P, q, G[nz], hh[nz], S, s


def _solve(P, q, G, h, qp, A_eq=None, b_eq=None, what="steer"):
    sol = qp(2.0 * P, 2.0 * q, G, h, A_eq, b_eq)
    if sol.status != "optimal":
        raise QpInfeasible(f"{what} QP {sol.status}: {sol.message}")
    return sol.x


def _trajectory(times, S, s, u, m):
    X = np.einsum("knj,j->kn", S, u) + s
    return Trajectory(times, X, u.reshape(-1, m))


def steer(tree: PlanTree, i: int, x_target, t_target: float, cb: ConjunctionBarrier,
          dyn: Dynamics, params: PlannerParams, qp=None, allow_short=False) -> Trajectory:
    """Trajectory from node ``i`` toward the sample over min(t_target - t_i, delta_max).

    Spans shorter than ``params.dt`` are refused unless ``allow_short`` is set,
    which the planner does for the last step onto the goal time.
    """
    qp = qp or QuadprogSolver()
    t_i = tree.t(i)
    if t_target < t_i - TIME_TOL:
        raise ValueError("sample lies in the past of the node")
    delta = min(t_target - t_i, params.delta_max)
    if delta <= TIME_TOL or (delta < params.dt - 1e-9 and not allow_short):
        raise ZeroDuration(f"horizon {delta} shorter than dt={params.dt}")
    times = knot_times(t_i, t_i + delta, params.dt, cb.switch_times)
    P, q, G, h, S, s = _transcribe(cb, dyn, params, tree.x(i), times,
                                   np.asarray(x_target, dtype=float))
    u = _solve(P, q, G, h, qp)
    return _trajectory(times, S, s, u, dyn.m)


def bridge(tree: PlanTree, j: int, r: int, cb: ConjunctionBarrier, dyn: Dynamics,
           params: PlannerParams, qp=None) -> Trajectory:
    """Trajectory from node ``j`` ending exactly at node ``r``'s state and time."""
    qp = qp or QuadprogSolver()
    t_j, t_r = tree.t(j), tree.t(r)
    if t_r - t_j <= TIME_TOL:
        raise ZeroDuration(f"bridge span {t_r - t_j} is empty")
    times = knot_times(t_j, t_r, params.dt, cb.switch_times)
    P, q, G, h, S, s = _transcribe(cb, dyn, params, tree.x(j), times, np.zeros(dyn.n))
    # the terminal knot is pinned, its barrier rows are redundant
    A_eq = S[-1]
    b_eq = tree.x(r) - s[-1]
    u = _solve(P, q, G, h, qp, A_eq, b_eq, what="bridge")
    traj = _trajectory(times, S, s, u, dyn.m)
    traj.states[-1] = tree.x(r)
    return traj


def sample_times(traj: Trajectory, resolution: float):
    n = max(1, int(math.ceil((traj.t1 - traj.t0) / resolution)))
    return np.union1d(np.linspace(traj.t0, traj.t1, n + 1), traj.times)


def collision_free(traj: Trajectory, obstacles, resolution: float) -> bool:
    """No sampled point (knots plus a ``resolution`` grid) lies in an obstacle."""
    if not resolution > 0.0:
        raise ValueError("resolution must be positive")
    if not obstacles:
        return True
    pts = traj.at(sample_times(traj, resolution))
    for O in obstacles:
        if np.any(np.all(pts @ O.A.T <= O.b, axis=1)):
            return False
    return True


def path_clear(traj: Trajectory, obstacles) -> bool:
    """Exact test of the interpolated path: no knot-to-knot segment meets an obstacle.

    Stronger than any sampled check, so edges that pass it also pass
    :func:`collision_free` at every resolution.
    """
    a, b = traj.states[:-1], traj.states[1:]
    return not any(np.any(segments_meet(O, a, b)) for O in obstacles)


def inside_barrier(traj: Trajectory, cb: ConjunctionBarrier, resolution: float,
                   tol: float = MEMBERSHIP_TOL) -> bool:
    """Dense membership check of ``traj`` in the (closed) barrier set."""
    ts = sample_times(traj, resolution)
    pts = traj.at(ts)
    X = cb.state_set
    if np.any(pts @ X.A.T > X.b + tol):
        return False
    return bool(np.all(barrier_values(cb, ts, pts) >= -tol))


# ---------------------------------------------------------------- main loop

@dataclass
class PlanStats:
    iterations: int = 0
    nodes: int = 1
    first_cost: Optional[float] = None
    best_cost: Optional[float] = None
    first_iteration: Optional[int] = None
    best_iteration: Optional[int] = None
    first_time: Optional[float] = None
    best_time: Optional[float] = None
    total_time: float = 0.0
    rewires: int = 0
    rejections: dict = field(default_factory=lambda: {
        "steer_infeasible": 0, "zero_duration": 0, "collision": 0, "dense_check": 0,
        "bridge_infeasible": 0, "bridge_collision": 0, "bridge_dense_check": 0,
        "bridge_pruned": 0})
    best_cost_history: list = field(default_factory=list)

    WALL_FIELDS = ("first_time", "best_time", "total_time")

    def to_dict(self, wall_times=True):
        d = {k: v for k, v in self.__dict__.items()}
        if not wall_times:
            for k in self.WALL_FIELDS:
                d.pop(k)
        return d


@dataclass(eq=False)
class PlanResult:
    trajectory: Trajectory
    tree: PlanTree
    stats: PlanStats
    goal_node: int
    t_hr: float


class Planner:
    def __init__(self, cb: ConjunctionBarrier, dyn: Dynamics, x0, params: PlannerParams,
                 obstacles=(), t_hr: Optional[float] = None, qp=None):
        self.cb = cb
        self.dyn = dyn
        self.params = params
        self.obstacles = list(obstacles)
        self.t_hr = float(cb.horizon if t_hr is None else t_hr)
        self.qp = qp or QuadprogSolver()
        self.rng = np.random.default_rng(params.seed)
        x0 = np.asarray(x0, dtype=float)
        if not contains(cb.set_at(0.0, closed=True), x0, MEMBERSHIP_TOL):
            raise ValueError("x0 is outside the barrier set at t=0")
        self.tree = PlanTree(x0)
        self.stats = PlanStats()
        self._ops = 0
        X = dyn.state_set
        self._x_bounds = X.bounding_box

    # -- sampling
    def sample(self):
        p = self.params
        if self.rng.random() < p.horizon_bias:
            t = self.t_hr
        else:
            t = float(self.rng.uniform(0.0, self.t_hr))
        P = self.cb.set_at(t) if t < self.cb.beta_phi else self.dyn.state_set
        x = sample_uniform(P, self.rng, bounds=self._x_bounds, cap=2000)
        return x, t

    def _edge_ok(self, traj, kind):
        p = self.params
        rej = self.stats.rejections
        if not path_clear(traj, self.obstacles):
            rej["collision" if kind == "steer" else "bridge_collision"] += 1
            return False
        if p.dense_check and not inside_barrier(traj, self.cb, p.collision_resolution):
            rej["dense_check" if kind == "steer" else "bridge_dense_check"] += 1
            return False
        return True

    def _tick(self):
        self._ops += 1
        if self.params.audit and self._ops % AUDIT_EVERY == 0:
            self.tree.audit()

    def _goal_node(self):
        T = self.tree.T
        ids = np.flatnonzero(T >= self.t_hr - TIME_TOL)
        if ids.size == 0:
            return None
        costs = np.array([self.tree.cost[i] for i in ids])
        return int(ids[np.argmin(costs)])

    def rewire(self, j: int):
        p = self.params
        tree = self.tree
        cands = future_nns(tree, j, p.eps_rewire, p.time_scale)[:p.rewire_cap]
        for r in cands:
            if tree.t(r) - tree.t(j) < p.dt - 1e-9:
                continue
            # path length is at least the straight-line distance
            if tree.cost[j] + np.linalg.norm(tree.x(r) - tree.x(j)) >= tree.cost[r]:
                self.stats.rejections["bridge_pruned"] += 1
                continue
            try:
                traj = bridge(tree, j, r, self.cb, self.dyn, p, self.qp)
            except (QpInfeasible, ZeroDuration):
                self.stats.rejections["bridge_infeasible"] += 1
                continue
            if not tree.cost[j] + traj.length() < tree.cost[r]:
                continue
            if not self._edge_ok(traj, "bridge"):
                continue
            if tree.reparent(r, j, traj):
                self.stats.rewires += 1
                self._tick()

    def step(self, it: int, t_start: float):
        p = self.params
        st = self.stats
        x_s, t_s = self.sample()
        i = past_nn(self.tree, x_s, t_s, p.time_scale)
        try:
            traj = steer(self.tree, i, x_s, t_s, self.cb, self.dyn, p, self.qp,
                         allow_short=t_s >= self.t_hr - TIME_TOL)
        except ZeroDuration:
            st.rejections["zero_duration"] += 1
            return
        except QpInfeasible as exc:
            log.debug("steer rejected: %s", exc)
            st.rejections["steer_infeasible"] += 1
            return
        if not self._edge_ok(traj, "steer"):
            return
        j = self.tree.add(i, traj)
        self._tick()
        self.rewire(j)
        g = self._goal_node()
        if g is not None:
            c = self.tree.cost[g]
            now = time.perf_counter() - t_start
            if st.first_cost is None:
                st.first_cost, st.first_iteration, st.first_time = c, it, now
            if st.best_cost is None or c < st.best_cost:
                st.best_cost, st.best_iteration, st.best_time = c, it, now

    def run(self) -> PlanResult:
        t_start = time.perf_counter()
        st = self.stats
        for it in range(self.params.n_max):
            self.step(it, t_start)
            st.iterations = it + 1
            st.best_cost_history.append(st.best_cost)
        st.nodes = len(self.tree)
        st.total_time = time.perf_counter() - t_start
        if self.params.audit:
            self.tree.audit()
        g = self._goal_node()
        if g is None:
            raise NoSolution(f"no node reached t_hr={self.t_hr} in {self.params.n_max} iterations")
        return PlanResult(self.tree.trajectory_to(g), self.tree, st, g, self.t_hr)


def plan(cb: ConjunctionBarrier, dyn: Dynamics, x0, params: PlannerParams, obstacles=(),
         t_hr: Optional[float] = None, qp=None) -> PlanResult:
    """Run the planner for ``params.n_max`` iterations and extract the cheapest
    trajectory among nodes that reached ``t_hr``."""
    return Planner(cb, dyn, x0, params, obstacles, t_hr, qp).run()


def plan_scenario(sc, seed=None, n_max=None):
    """Encode, select the best disjunct and plan inside its barrier set."""
    best, results = sc.encode()
    res = results[best]
    params = PlannerParams.from_scenario(sc, seed, n_max)
    out = plan(res.barrier, sc.dyn, sc.x0, params, sc.obstacles)
    return best, results, out
