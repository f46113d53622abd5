"""Continuous-time affine systems x' = A x + B u + p and their exact ZOH maps."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm

from .errors import DimensionMismatch
from .geometry import Polytope


@dataclass(frozen=True, eq=False)
class Dynamics:
    A: np.ndarray
    B: np.ndarray
    p: np.ndarray
    state_set: Polytope
    input_set: Polytope
    _zoh_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.A, dtype=float))
        B = np.asarray(self.B, dtype=float)
        if B.ndim == 1:
            B = B[:, None]
        p = np.zeros(A.shape[0]) if self.p is None else np.asarray(self.p, dtype=float).reshape(-1)
        n = A.shape[0]
        if A.shape != (n, n) or B.shape[0] != n or p.shape != (n,):
            raise DimensionMismatch(f"inconsistent shapes A{A.shape} B{B.shape} p{p.shape}")
        if self.state_set.dim != n:
            raise DimensionMismatch(f"state set lives in R^{self.state_set.dim}, system has n={n}")
        if self.input_set.dim != B.shape[1]:
            raise DimensionMismatch(f"input set lives in R^{self.input_set.dim}, B has m={B.shape[1]}")
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "B", B)
        object.__setattr__(self, "p", p)

    @property
    def n(self):
        return self.A.shape[0]

    @property
    def m(self):
        return self.B.shape[1]

    def f(self, x, u):
        return self.A @ x + self.B @ u + self.p

    def zoh(self, h: float):
        """(Ad, Bd, pd) with x+ = Ad x + Bd u + pd after holding u for h seconds."""
        key = float(h)
        hit = self._zoh_cache.get(key)
        if hit is not None:
            return hit
        n, m = self.n, self.m
        M = np.zeros((n + m + 1, n + m + 1))
        M[:n, :n] = self.A
        M[:n, n:n + m] = self.B
        M[:n, n + m] = self.p
        E = expm(M * key)
        out = (E[:n, :n].copy(), E[:n, n:n + m].copy(), E[:n, n + m].copy())
        if len(self._zoh_cache) < 4096:
            self._zoh_cache[key] = out
        return out
