"""
Time Grid and Trajectories
============================
Uniform discretization of [0, t_f] and the sampled state / costate
trajectories computed on it.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .settings import GRID_REL_TOL


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """Fixed-step grid with instants t_k = k * dt, k = 0..n_steps."""

    t_f: float
    dt: float

    def __post_init__(self):
        if not (self.dt > 0 and self.t_f > 0):
            raise ValueError(f"grid needs dt > 0 and t_f > 0 (got dt={self.dt}, t_f={self.t_f})")
        n = int(round(self.t_f / self.dt))
        if n < 1 or abs(n * self.dt - self.t_f) > GRID_REL_TOL * self.t_f:
            raise ValueError(f"t_f={self.t_f} is not a whole number of steps dt={self.dt}")

    @cached_property
    def n_steps(self) -> int:
        return int(round(self.t_f / self.dt))

    @cached_property
    def instants(self) -> np.ndarray:
        t = np.arange(self.n_steps + 1) * self.dt
        t[-1] = self.t_f
        t.flags.writeable = False
        return t

    @property
    def cell_starts(self) -> np.ndarray:
        """Left endpoints of the n_steps cells; controls are sampled here."""
        return self.instants[:-1]

    def same_as(self, other: "TimeGrid") -> bool:
        return self.n_steps == other.n_steps and abs(self.dt - other.dt) <= 1e-12 * self.dt

    def __repr__(self) -> str:
        return f"TimeGrid(t_f={self.t_f}, dt={self.dt}, n_steps={self.n_steps})"


def _frozen(values: np.ndarray) -> np.ndarray:
    arr = np.array(values, dtype=float)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class StateTrajectory:
    grid: TimeGrid
    values: np.ndarray  # (n_steps + 1, n)

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values))
        if self.values.ndim != 2 or self.values.shape[0] != self.grid.n_steps + 1:
            raise ValueError(f"state trajectory shape {self.values.shape} does not match {self.grid}")

    @property
    def final(self) -> np.ndarray:
        return self.values[-1]


@dataclass(frozen=True, eq=False)
class CostateTrajectory:
    grid: TimeGrid
    values: np.ndarray  # (n_steps + 1, n)

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values))
        if self.values.ndim != 2 or self.values.shape[0] != self.grid.n_steps + 1:
            raise ValueError(f"costate trajectory shape {self.values.shape} does not match {self.grid}")

    @property
    def final(self) -> np.ndarray:
        return self.values[-1]
