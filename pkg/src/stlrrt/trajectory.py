"""Knotted state/input trajectories.

States are interpolated linearly between knots; inputs are held constant on
each inter-knot interval (``inputs[k]`` acts on ``[times[k], times[k+1])``).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np


@dataclass(eq=False)
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    inputs: np.ndarray
    barrier: Optional[np.ndarray] = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.states = np.atleast_2d(np.asarray(self.states, dtype=float))
        self.inputs = np.asarray(self.inputs, dtype=float)
        if self.inputs.ndim == 1:
            self.inputs = self.inputs.reshape(max(len(self.times) - 1, 0), -1)
        if self.states.shape[0] != self.times.size:
            raise ValueError("one state per knot required")
        if self.inputs.shape[0] != self.times.size - 1:
            raise ValueError("one input per inter-knot interval required")
        if np.any(np.diff(self.times) <= 0.0):
            raise ValueError("knot times must be strictly increasing")

    @property
    def t0(self):
        return float(self.times[0])

    @property
    def t1(self):
        return float(self.times[-1])

    @property
    def x0(self):
        return self.states[0]

    @property
    def x1(self):
        return self.states[-1]

    def at(self, t):
        """Piecewise-linear state at time(s) ``t``."""
        t = np.asarray(t, dtype=float)
        return np.stack([np.interp(t, self.times, self.states[:, i])
                         for i in range(self.states.shape[1])], axis=-1)

    def length(self) -> float:
        return float(np.sum(np.linalg.norm(np.diff(self.states, axis=0), axis=1)))

    def dynamics_residual(self, dyn) -> float:
        worst = 0.0
        h = np.diff(self.times)
        for k in range(h.size):
            Ad, Bd, pd = dyn.zoh(h[k])
            pred = Ad @ self.states[k] + Bd @ self.inputs[k] + pd
            worst = max(worst, float(np.max(np.abs(pred - self.states[k + 1]))))
        return worst

    @staticmethod
    def concatenate(parts) -> "Trajectory":
        parts = list(parts)
        if not parts:
            raise ValueError("nothing to concatenate")
        times = [parts[0].times]
        states = [parts[0].states]
        inputs = [parts[0].inputs]
        for p in parts[1:]:
            times.append(p.times[1:])
            states.append(p.states[1:])
            inputs.append(p.inputs)
        return Trajectory(np.concatenate(times), np.vstack(states), np.vstack(inputs))
