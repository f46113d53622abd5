"""Independent reference implementations used by the tests.

Nothing here imports the encoder or the monitor: the point is to check
them against code written from the definitions alone.
"""
import numpy as np

from stlrrt.formula import And, Always, Eventually, Not, Or, Predicate, Until


# ---------------------------------------------------------------- 1-D encoding

def grid_encoding_1d(pred_lo, pred_hi, alpha, beta, x0, a, u_lim, x_lim, kappa, r_min,
                     step=1e-3, gamma_max=6.0, r_max=None):
    """Best r over a (gamma_bar, r) grid for one task on  x' = a x + u  in R^1.

    Task rows: x - lo >= 0 and hi - x >= 0, offset by gamma(t).  A grid
    point is feasible when the initial state is inside, H^r meets X, and at
    every space-time vertex of each interval some |u| <= u_lim satisfies
    every row of the invariance condition.  Returns (r_best, gamma_at_best).
    """
    g = np.arange(0.0, gamma_max + step / 2, step)
    if alpha == 0.0:
        g = np.zeros(1)
    r_top = r_max if r_max is not None else 0.5 * (pred_hi - pred_lo)
    r = np.arange(r_min, r_top + step / 2, step)
    G, R = np.meshgrid(g, r, indexing="ij")
    ok = np.ones(G.shape, dtype=bool)

    def h_rows(x):
        return np.array([x - pred_lo, pred_hi - x])

    # H^r inside X: the best point of X is the clipped predicate midpoint
    mid = np.clip(0.5 * (pred_lo + pred_hi), -x_lim, x_lim)
    ok &= h_rows(mid).min() >= R

    # initial membership
    if alpha > 0.0:
        gam0 = G - R
    else:
        gam0 = -R
    ok &= h_rows(x0).min() + gam0 >= 0.0

    d = np.array([1.0, -1.0])
    cvec = np.array([-pred_lo, pred_hi])
    switch = sorted({0.0, alpha, beta})
    for s0, s1 in zip(switch[:-1], switch[1:]):
        seg1 = alpha > 0.0 and s0 < alpha
        for v in (-x_lim, x_lim):
            for t in (s0, s1):
                if seg1:
                    e = -G / alpha
                    gam = G - R - G * t / alpha
                else:
                    e = 0.0 * G
                    gam = -R
                lower = np.full(G.shape, -u_lim)
                upper = np.full(G.shape, u_lim)
                for k in range(2):
                    # d_k (a v + u) + e + kappa (d_k v + c_k + gam) >= 0
                    rhs = -(d[k] * a * v + e + kappa * (d[k] * v + cvec[k] + gam))
                    if d[k] > 0:
                        lower = np.maximum(lower, rhs / d[k])
                    else:
                        upper = np.minimum(upper, rhs / d[k])
                ok &= lower <= upper + 1e-12
    if not ok.any():
        return None, None
    i, j = np.nonzero(ok)
    best = np.argmax(R[i, j])
    return float(R[i[best], j[best]]), float(G[i[best], j[best]])


# ---------------------------------------------------------------- brute-force STL

def interp(times, states, t):
    return np.array([np.interp(t, times, states[:, i]) for i in range(states.shape[1])])


def window_points(lo, hi, dense_dt, knots):
    """Endpoints, multiples of dense_dt and knots inside [lo, hi], each exactly once."""
    pts = {float(lo), float(hi)}
    k = int(np.ceil(lo / dense_dt - 1e-12))
    while k * dense_dt <= hi + 1e-12:
        p = k * dense_dt
        if lo <= p <= hi:
            pts.add(float(p))
        k += 1
    for kt in knots:
        if lo <= kt <= hi:
            pts.add(float(kt))
    return sorted(pts)


def brute_rho(f, times, states, preds, t, dense_dt):
    """Plain recursive evaluation, one time point at a time."""
    if isinstance(f, Predicate):
        h = preds[f.name]
        x = interp(times, states, t)
        vals = h.c.copy()
        for i in range(x.size):
            vals = vals + h.D[:, i] * x[i]
        return float(vals.min())
    if isinstance(f, Not):
        return -brute_rho(f.child, times, states, preds, t, dense_dt)
    if isinstance(f, And):
        return min(brute_rho(c, times, states, preds, t, dense_dt) for c in f.children)
    if isinstance(f, Or):
        return max(brute_rho(c, times, states, preds, t, dense_dt) for c in f.children)
    if isinstance(f, (Eventually, Always)):
        a, b = f.interval
        vals = [brute_rho(f.child, times, states, preds, tau, dense_dt)
                for tau in window_points(t + a, t + b, dense_dt, times)]
        return max(vals) if isinstance(f, Eventually) else min(vals)
    if isinstance(f, Until):
        a, b = f.interval
        best = -np.inf
        for tau in window_points(t + a, t + b, dense_dt, times):
            left = min(brute_rho(f.left, times, states, preds, s, dense_dt)
                       for s in window_points(t, tau, dense_dt, times))
            best = max(best, min(brute_rho(f.right, times, states, preds, tau, dense_dt), left))
        return best
    raise TypeError(f)
