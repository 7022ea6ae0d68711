"""
Ordinary and Relaxed Controls
===============================
Piecewise-constant controls on a TimeGrid and finite convex mixtures of
them. A mixture with time-invariant weights w_i over atoms u_i stands for
the relaxed control mu(t) = sum_i w_i * delta(u_i(t)).

The two update rules of the descent step live here as well:
  - convex_combine_measures: (1 - lam) * mu + lam * nu as measures
  - convex_combine_controls: u + lam * (v - u) pointwise
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Iterator, Sequence

import numpy as np

from .exceptions import GridMismatchError
from .grid import TimeGrid
from .settings import MERGE_TOL, WEIGHT_FLOOR, WEIGHT_FLOOR_MAX, WEIGHT_SUM_TOL

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class OrdinaryControl:
    """
    Zero-order-hold control: values[k] is applied on [t_k, t_{k+1}).

    allow_infeasible marks a control that is knowingly outside the control
    hull (e.g. a deliberately bad initial guess).
    """

    grid: TimeGrid
    values: np.ndarray  # (n_steps, m)
    allow_infeasible: bool = False

    def __post_init__(self):
        arr = np.array(self.values, dtype=float)
        if arr.ndim == 1:
            arr = arr[:, None]
        if arr.ndim != 2 or arr.shape[0] != self.grid.n_steps:
            raise ValueError(f"control shape {arr.shape} does not match {self.grid}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("control contains non-finite values")
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    @classmethod
    def constant(cls, grid: TimeGrid, value, allow_infeasible: bool = False) -> "OrdinaryControl":
        row = np.atleast_1d(np.asarray(value, dtype=float))
        return cls(grid, np.tile(row, (grid.n_steps, 1)), allow_infeasible)

    @classmethod
    def from_function(
        cls,
        grid: TimeGrid,
        fn: Callable[[np.ndarray], np.ndarray],
        allow_infeasible: bool = False,
    ) -> "OrdinaryControl":
        """Sample fn at the cell starts; fn maps (n_steps,) times to (n_steps, m)."""
        return cls(grid, fn(grid.cell_starts), allow_infeasible)

    @property
    def m(self) -> int:
        return self.values.shape[1]

    def equals(self, other: "OrdinaryControl", tol: float = MERGE_TOL) -> bool:
        if not self.grid.same_as(other.grid) or self.values.shape != other.values.shape:
            return False
        return bool(np.max(np.abs(self.values - other.values), initial=0.0) <= tol)


@dataclass(frozen=True, eq=False)
class RelaxedMixture:
    """Finite convex combination of OrdinaryControls sharing one grid."""

    weights: np.ndarray
    controls: tuple[OrdinaryControl, ...]

    def __post_init__(self):
        w = np.array(self.weights, dtype=float).reshape(-1)
        controls = tuple(self.controls)
        if len(controls) == 0 or len(controls) != w.size:
            raise ValueError(f"mixture needs one weight per atom (got {w.size} weights, {len(controls)} atoms)")
        if np.any(w < 0):
            raise ValueError(f"mixture weights must be non-negative: {w}")
        if abs(w.sum() - 1.0) > WEIGHT_SUM_TOL:
            raise ValueError(f"mixture weights sum to {w.sum()!r}, not 1")
        grid = controls[0].grid
        for c in controls[1:]:
            if not c.grid.same_as(grid) or c.m != controls[0].m:
                raise GridMismatchError("mixture atoms")
        w.flags.writeable = False
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "controls", controls)

    @property
    def grid(self) -> TimeGrid:
        return self.controls[0].grid

    @property
    def n_atoms(self) -> int:
        return len(self.controls)

    @property
    def m(self) -> int:
        return self.controls[0].m

    @property
    def allow_infeasible(self) -> bool:
        return any(c.allow_infeasible for c in self.controls)

    def atoms(self) -> Iterator[tuple[float, OrdinaryControl]]:
        return zip(self.weights.tolist(), self.controls)

    @cached_property
    def stacked(self) -> np.ndarray:
        """Atom values as one (n_atoms, n_steps, m) array."""
        arr = np.stack([c.values for c in self.controls])
        arr.flags.writeable = False
        return arr

    def mean_control(self) -> OrdinaryControl:
        """Pointwise weighted mean sum_i w_i u_i(t); meaningful for affine dynamics."""
        if self.n_atoms == 1:
            return self.controls[0]
        return OrdinaryControl(
            self.grid,
            np.tensordot(self.weights, self.stacked, axes=1),
            allow_infeasible=self.allow_infeasible,
        )


def dirac(u: OrdinaryControl) -> RelaxedMixture:
    """Embed an ordinary control as the single-atom mixture mu ~ u."""
    return RelaxedMixture(np.ones(1), (u,))


def collapse_affine(mu: RelaxedMixture) -> RelaxedMixture:
    """Replace a mixture by the Dirac of its mean control (same state for affine dynamics)."""
    return dirac(mu.mean_control())


def _check_lambda(lam: float) -> None:
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"step size must lie in [0, 1], got {lam}")


def prune_and_merge(mu: RelaxedMixture, weight_floor: float = WEIGHT_FLOOR) -> RelaxedMixture:
    """
    Merge atoms with pointwise-equal controls, drop atoms lighter than
    weight_floor, renormalize.

    Atom order is preserved (a merged atom keeps the position of its first
    occurrence). If every atom falls below the floor the heaviest survives.
    """
    return _prune(mu.weights.tolist(), mu.controls, weight_floor)


def _prune(weights, controls, weight_floor: float) -> RelaxedMixture:
    if not 0.0 <= weight_floor <= WEIGHT_FLOOR_MAX:
        raise ValueError(f"weight_floor must lie in [0, {WEIGHT_FLOOR_MAX}], got {weight_floor}")

    merged_w: list[float] = []
    merged_c: list[OrdinaryControl] = []
    for w, c in zip(weights, controls):
        for i, kept in enumerate(merged_c):
            if kept.equals(c):
                merged_w[i] += w
                break
        else:
            merged_w.append(w)
            merged_c.append(c)

    w = np.array(merged_w)
    keep = (w >= weight_floor) & (w > 0)
    if not keep.any():
        keep = np.zeros_like(keep)
        keep[int(np.argmax(w))] = True

    dropped = float(w[~keep].sum())
    if dropped > 0 or len(merged_c) < len(controls):
        logger.debug(
            f"pruned {int((~keep).sum())} atom(s), merged {len(controls) - len(merged_c)}, "
            f"dropped mass {dropped:.3g}"
        )

    w = w[keep]
    controls = tuple(c for c, k in zip(merged_c, keep) if k)
    return RelaxedMixture(w / w.sum(), controls)


def convex_combine_measures(
    mu: RelaxedMixture,
    nu: RelaxedMixture,
    lam: float,
    weight_floor: float = WEIGHT_FLOOR,
) -> RelaxedMixture:
    """(1 - lam) * mu + lam * nu in the sense of measures, then pruned and merged."""
    _check_lambda(lam)
    if not mu.grid.same_as(nu.grid):
        raise GridMismatchError("mu and nu")
    weights = np.concatenate([(1.0 - lam) * mu.weights, lam * nu.weights])
    return _prune(weights.tolist(), mu.controls + nu.controls, weight_floor)


def convex_combine_controls(u: OrdinaryControl, v: OrdinaryControl, lam: float) -> OrdinaryControl:
    """Pointwise u + lam * (v - u); stays in conv(U) when u and v do."""
    _check_lambda(lam)
    if not u.grid.same_as(v.grid):
        raise GridMismatchError("u and v")
    if lam == 0.0:
        return u
    return OrdinaryControl(
        u.grid,
        u.values + lam * (v.values - u.values),
        allow_infeasible=u.allow_infeasible and lam < 1.0,
    )


def mixture_from_atoms(atoms: Sequence[tuple[float, OrdinaryControl]]) -> RelaxedMixture:
    weights, controls = zip(*atoms)
    return RelaxedMixture(np.array(weights, dtype=float), tuple(controls))
