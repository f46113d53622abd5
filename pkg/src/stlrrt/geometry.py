"""Polytopes in H-representation ``A x <= b`` and min-of-affine predicates."""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.optimize import linprog

from .errors import DimensionMismatch, DimensionTooLarge, EmptyInterval, EmptySet, Unbounded

DEFAULT_TOL = 1e-7
MAX_ENUM_DIM = 8
REJECTION_CAP = 10_000


class Polytope:
    """Bounded convex polytope ``{x : A x <= b}``.

    Boundedness is checked on construction (cheaply for boxes, by LP
    otherwise) unless ``check=False``, which callers use for sets built by
    intersecting with an already-validated polytope.
    """

    def __init__(self, A, b, check: bool = True, name: str | None = None):
        A = np.atleast_2d(np.asarray(A, dtype=float))
        b = np.asarray(b, dtype=float).reshape(-1)
        if A.shape[0] != b.shape[0]:
            raise DimensionMismatch(f"A has {A.shape[0]} rows but b has {b.shape[0]}")
        self.A = A
        self.b = b
        self.name = name
        A.setflags(write=False)
        b.setflags(write=False)
        if check:
            if A.shape[0] < A.shape[1] + 1:
                raise Unbounded(f"{A.shape[0]} facets cannot bound a set in R^{A.shape[1]}")
            if self.box_bounds is None and _has_recession(A):
                raise Unbounded("polytope has a recession direction")

    @classmethod
    def box(cls, lower, upper, name=None):
        lower = np.asarray(lower, dtype=float).reshape(-1)
        upper = np.asarray(upper, dtype=float).reshape(-1)
        if lower.shape != upper.shape:
            raise DimensionMismatch("box bounds differ in length")
        n = lower.size
        eye = np.eye(n)
        return cls(np.vstack([eye, -eye]), np.concatenate([upper, -lower]), name=name)

    @property
    def dim(self) -> int:
        return self.A.shape[1]

    @property
    def n_rows(self) -> int:
        return self.A.shape[0]

    @cached_property
    def box_bounds(self):
        """(lower, upper) if every row is a signed unit vector bounding each axis, else None."""
        A, b = self.A, self.b
        n = A.shape[1]
        lo = np.full(n, -np.inf)
        hi = np.full(n, np.inf)
        for row, rhs in zip(A, b):
            nz = np.flatnonzero(row)
            if nz.size != 1:
                return None
            k = nz[0]
            s = row[k]
            if s > 0:
                hi[k] = min(hi[k], rhs / s)
            else:
                lo[k] = max(lo[k], rhs / s)
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            return None
        return lo, hi

    @cached_property
    def bounding_box(self):
        bb = self.box_bounds
        if bb is not None:
            return bb
        n = self.dim
        lo = np.empty(n)
        hi = np.empty(n)
        for k in range(n):
            c = np.zeros(n)
            c[k] = 1.0
            for sign, out in ((1.0, lo), (-1.0, hi)):
                res = linprog(sign * c, A_ub=self.A, b_ub=self.b, bounds=[(None, None)] * n,
                              method="highs")
                if res.status == 2:
                    raise EmptySet("polytope is empty")
                if res.status != 0:
                    raise Unbounded(f"cannot bound coordinate {k}")
                out[k] = res.x[k]
        return lo, hi

    def intersect(self, A, b, name=None) -> "Polytope":
        A = np.atleast_2d(np.asarray(A, dtype=float))
        if A.size and A.shape[1] != self.dim:
            raise DimensionMismatch("row width differs from polytope dimension")
        if A.size == 0:
            return self
        return Polytope(np.vstack([self.A, A]), np.concatenate([self.b, np.ravel(b)]),
                        check=False, name=name)

    def __repr__(self):
        return f"Polytope(dim={self.dim}, rows={self.n_rows}{', ' + self.name if self.name else ''})"


def _has_recession(A):
    # {d : A d <= 0, -1 <= d <= 1}; any nonzero optimum is a recession direction
    n = A.shape[1]
    for k in range(n):
        for sign in (1.0, -1.0):
            c = np.zeros(n)
            c[k] = -sign
            res = linprog(c, A_ub=A, b_ub=np.zeros(A.shape[0]), bounds=[(-1, 1)] * n,
                          method="highs")
            if res.status == 0 and -res.fun > 1e-9:
                return True
    return False


@dataclass(frozen=True)
class LinearPredicate:
    """h(x) = min_k (d_k . x + c_k)."""

    D: np.ndarray
    c: np.ndarray
    name: str | None = None

    def __post_init__(self):
        D = np.atleast_2d(np.asarray(self.D, dtype=float))
        c = np.asarray(self.c, dtype=float).reshape(-1)
        if D.shape[0] != c.shape[0] or D.shape[0] < 1:
            raise DimensionMismatch(f"D has {D.shape[0]} rows, c has {c.shape[0]}")
        object.__setattr__(self, "D", D)
        object.__setattr__(self, "c", c)

    @classmethod
    def box(cls, lower, upper, name=None):
        """Predicate positive strictly inside an axis-aligned box."""
        lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        eye = np.eye(lower.size)
        return cls(np.vstack([eye, -eye]), np.concatenate([-lower, upper]), name=name)

    @property
    def dim(self):
        return self.D.shape[1]

    @property
    def n_rows(self):
        return self.D.shape[0]

    def superlevel_rows(self, r=0.0):
        """Rows (A, b) of {x : h(x) >= r} in ``A x <= b`` form."""
        return -self.D, self.c - r

    def __eq__(self, other):
        return (isinstance(other, LinearPredicate) and np.array_equal(self.D, other.D)
                and np.array_equal(self.c, other.c))

    __hash__ = object.__hash__


def predicate_value(h: LinearPredicate, x) -> float:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != h.dim:
        raise DimensionMismatch(f"point has dimension {x.shape[-1]}, predicate expects {h.dim}")
    return np.min(x @ h.D.T + h.c, axis=-1)


@dataclass(frozen=True)
class VertexSet:
    vertices: np.ndarray
    source: str | None = None

    def __len__(self):
        return self.vertices.shape[0]


def enumerate_vertices(P: Polytope, tol: float = 1e-9) -> VertexSet:
    n = P.dim
    if n > MAX_ENUM_DIM:
        raise DimensionTooLarge(f"vertex enumeration limited to dimension {MAX_ENUM_DIM}, got {n}")
    bb = P.box_bounds
    if bb is not None:
        lo, hi = bb
        corners = np.array(list(itertools.product(*zip(lo, hi))), dtype=float)
        return VertexSet(corners, P.name)
    A, b = P.A, P.b
    found = []
    for rows in itertools.combinations(range(P.n_rows), n):
        sub = A[list(rows)]
        if abs(np.linalg.det(sub)) < 1e-12:
            continue
        v = np.linalg.solve(sub, b[list(rows)])
        if np.all(A @ v <= b + tol * np.maximum(1.0, np.abs(b))):
            if not any(np.allclose(v, w, atol=1e-9, rtol=0) for w in found):
                found.append(v)
    if not found:
        raise EmptySet("no vertices: polytope is empty")
    return VertexSet(np.array(found), P.name)


def space_time_vertices(VX: VertexSet, s_lo: float, s_hi: float) -> VertexSet:
    if not s_lo < s_hi:
        raise EmptyInterval(f"interval ({s_lo}, {s_hi}) is empty")
    V = VX.vertices
    k = V.shape[0]
    lo = np.hstack([V, np.full((k, 1), float(s_lo))])
    hi = np.hstack([V, np.full((k, 1), float(s_hi))])
    return VertexSet(np.vstack([lo, hi]), VX.source)


def contains(P: Polytope, x, tol: float = DEFAULT_TOL) -> bool:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != P.dim:
        raise DimensionMismatch(f"point has dimension {x.shape[-1]}, polytope is in R^{P.dim}")
    return bool(np.all(P.A @ x <= P.b + tol))


def segments_meet(P: Polytope, starts, ends) -> np.ndarray:
    """Which segments [starts[k], ends[k]] touch the closed polytope ``P``.

    Parametric clipping: each row a.x <= b bounds s in [0, 1] from one side.
    """
    p = np.atleast_2d(np.asarray(starts, dtype=float))
    d = np.atleast_2d(np.asarray(ends, dtype=float)) - p
    num = P.b - p @ P.A.T
    den = d @ P.A.T
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = num / den
    lo = np.max(np.where(den < 0.0, ratio, 0.0), axis=1, initial=0.0)
    hi = np.min(np.where(den > 0.0, ratio, 1.0), axis=1, initial=1.0)
    parallel_out = np.any((den == 0.0) & (num < 0.0), axis=1)
    return (lo <= hi) & ~parallel_out


def chebyshev_center(P: Polytope):
    """Center and radius of the largest inscribed ball; EmptySet if none."""
    A, b = P.A, P.b
    norms = np.linalg.norm(A, axis=1)
    n = P.dim
    c = np.zeros(n + 1)
    c[-1] = -1.0
    res = linprog(c, A_ub=np.hstack([A, norms[:, None]]), b_ub=b,
                  bounds=[(None, None)] * n + [(0, None)], method="highs")
    if res.status != 0:
        raise EmptySet("no interior point (Chebyshev LP infeasible)")
    return res.x[:n], res.x[n]


def sample_uniform(P: Polytope, rng: np.random.Generator, bounds=None,
                   cap: int = REJECTION_CAP, batch: int = 1000):
    """Approximately uniform point of ``P``.

    Rejection sampling from a bounding box (``bounds`` or the polytope's own
    LP bounding box) for up to ``cap`` draws, then hit-and-run from the
    Chebyshev center with a 50*dim step burn-in.
    """
    A, b = P.A, P.b
    lo, hi = bounds if bounds is not None else P.bounding_box
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    drawn = 0
    while drawn < cap:
        k = min(batch, cap - drawn)
        pts = lo + (hi - lo) * rng.random((k, P.dim))
        ok = np.all(pts @ A.T <= b, axis=1)
        drawn += k
        if ok.any():
            return pts[np.argmax(ok)]
    return hit_and_run(P, rng, steps=50 * P.dim)


def hit_and_run(P: Polytope, rng: np.random.Generator, steps: int, start=None):
    A, b = P.A, P.b
    if start is None:
        start, radius = chebyshev_center(P)
        if radius <= 0.0:
            # lower-dimensional or single point; nothing to walk in
            if not contains(P, start, 1e-9):
                raise EmptySet("polytope has no interior")
            return start
    x = np.array(start, dtype=float)
    for _ in range(steps):
        d = rng.standard_normal(P.dim)
        d /= np.linalg.norm(d)
        ad = A @ d
        slack = b - A @ x
        with np.errstate(divide="ignore"):
            ratios = slack / ad
        upper = np.min(ratios[ad > 1e-15], initial=np.inf)
        lower = np.max(ratios[ad < -1e-15], initial=-np.inf)
        if not (np.isfinite(upper) and np.isfinite(lower)):
            raise Unbounded("hit-and-run chord is unbounded")
        lam = lower + (upper - lower) * rng.random()
        x = x + lam * d
    # pull back rounding excursions of order 1e-12
    viol = A @ x - b
    if np.max(viol) > 0.0:
        c, _ = chebyshev_center(P)
        for shrink in (1e-12, 1e-9, 1e-6, 1e-3, 1.0):
            y = x + shrink * (c - x)
            if np.all(A @ y <= b):
                return y
    return x
