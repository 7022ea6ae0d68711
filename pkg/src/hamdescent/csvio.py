"""
Run Artifacts
===============
CSV writers and readers for everything a run leaves on disk:

  iterations.csv        k,J,theta,lambda,l,n_cost_evals,wall_ms,J_next,J_prev_trial,n_atoms,status
  trajectory.csv        t,x1..xn[,p1..pn]
  final_control.csv     t,atom_index,weight,u1..um   (one row per cell start and atom)
  final_state.csv       trajectory,x1..xn

Floats are written with 17 significant digits so every reader returns
the exact values written. Grids are rebuilt from dt and the number of
cells.
"""

from __future__ import annotations

import csv
import logging
import os
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .controls import OrdinaryControl, RelaxedMixture, dirac
from .grid import CostateTrajectory, StateTrajectory, TimeGrid
from .schemas import IterationRecord
from .settings import CSV_FLOAT_FORMAT

logger = logging.getLogger(__name__)

ITERATION_FIELDS = [
    "k", "J", "theta", "lambda", "l", "n_cost_evals", "wall_ms",
    "J_next", "J_prev_trial", "n_atoms", "status",
]


def fmt(value: float) -> str:
    return format(float(value), CSV_FLOAT_FORMAT)


def _open_for_write(path: str | os.PathLike):
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    return open(path, "w", newline="", encoding="utf-8")


# --- iteration log ---

def write_iterations(path, records: Iterable[IterationRecord]) -> None:
    with _open_for_write(path) as f:
        w = csv.writer(f)
        w.writerow(ITERATION_FIELDS)
        for r in records:
            w.writerow([
                r.k, fmt(r.J), fmt(r.theta), fmt(r.lam), r.l, r.n_cost_evals, fmt(r.wall_ms),
                fmt(r.J_next), "" if r.J_prev_trial is None else fmt(r.J_prev_trial),
                r.n_atoms, r.status,
            ])


def read_iterations(path) -> list[IterationRecord]:
    records = []
    with open(path, newline="", encoding="utf-8") as f:
        for row in csv.DictReader(f):
            records.append(IterationRecord(
                k=int(row["k"]),
                J=float(row["J"]),
                theta=float(row["theta"]),
                lam=float(row["lambda"]),
                l=int(row["l"]),
                n_cost_evals=int(row["n_cost_evals"]),
                wall_ms=float(row["wall_ms"]),
                J_next=float(row.get("J_next") or row["J"]),
                J_prev_trial=float(row["J_prev_trial"]) if row.get("J_prev_trial") else None,
                n_atoms=int(row.get("n_atoms") or 1),
                status=row.get("status") or "step",
            ))
    return records


# --- trajectories ---

def write_trajectory(path, x: StateTrajectory, p: Optional[CostateTrajectory] = None) -> None:
    n = x.values.shape[1]
    header = ["t"] + [f"x{i + 1}" for i in range(n)]
    columns = [x.grid.instants[:, None], x.values]
    if p is not None:
        header += [f"p{i + 1}" for i in range(p.values.shape[1])]
        columns.append(p.values)
    table = np.hstack(columns)
    with _open_for_write(path) as f:
        w = csv.writer(f)
        w.writerow(header)
        for row in table:
            w.writerow([fmt(v) for v in row])


def _grid_from_instants(t: np.ndarray, n_cells: int, t_f: float | None = None) -> TimeGrid:
    if n_cells < 1:
        raise ValueError("need at least one grid cell")
    if n_cells > 1:
        dt = float(t[1] - t[0])
        return TimeGrid(n_cells * dt if t_f is None else t_f, dt)
    if t_f is None:
        raise ValueError("a single-cell control needs t_f to rebuild its grid")
    return TimeGrid(t_f, t_f)


def read_trajectory(path) -> tuple[StateTrajectory, Optional[CostateTrajectory]]:
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader)
        data = np.array([[float(v) for v in row] for row in reader])
    x_cols = [i for i, h in enumerate(header) if h.startswith("x")]
    p_cols = [i for i, h in enumerate(header) if h.startswith("p")]
    t = data[:, 0]
    grid = TimeGrid(float(t[-1]), float(t[1] - t[0]))
    x = StateTrajectory(grid, data[:, x_cols])
    p = CostateTrajectory(grid, data[:, p_cols]) if p_cols else None
    return x, p


# --- controls ---

def write_mixture(path, mu: RelaxedMixture) -> None:
    header = ["t", "atom_index", "weight"] + [f"u{i + 1}" for i in range(mu.m)]
    U = mu.stacked
    weights = [fmt(w) for w in mu.weights]
    with _open_for_write(path) as f:
        w = csv.writer(f)
        w.writerow(header)
        for k, t in enumerate(mu.grid.cell_starts):
            for a in range(mu.n_atoms):
                w.writerow([fmt(t), a, weights[a]] + [fmt(v) for v in U[a, k]])


def write_control(path, u: OrdinaryControl) -> None:
    write_mixture(path, dirac(u))


def read_mixture(path, t_f: float | None = None) -> RelaxedMixture:
    """Rebuild a mixture from a control dump; t_f is only needed for single-cell grids."""
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        header = next(reader)
        rows = [row for row in reader]
    m = len(header) - 3
    times = np.array([float(r[0]) for r in rows])
    atom = np.array([int(r[1]) for r in rows])
    n_atoms = int(atom.max()) + 1
    n_cells = len(rows) // n_atoms
    if n_cells * n_atoms != len(rows):
        raise ValueError(f"{path}: {len(rows)} rows do not form {n_atoms} atoms per cell")

    values = np.array([[float(v) for v in r[3:]] for r in rows]).reshape(n_cells, n_atoms, m)
    weights = np.array([float(r[2]) for r in rows[:n_atoms]])
    grid = _grid_from_instants(times[::n_atoms], n_cells, t_f)
    controls = tuple(OrdinaryControl(grid, values[:, a, :]) for a in range(n_atoms))
    return RelaxedMixture(weights / weights.sum(), controls)


# --- summaries ---

def write_final_state(path, states: Mapping[str, np.ndarray]) -> None:
    """One row per labelled final state (e.g. relaxed, projected)."""
    n = len(next(iter(states.values())))
    with _open_for_write(path) as f:
        w = csv.writer(f)
        w.writerow(["trajectory"] + [f"x{i + 1}" for i in range(n)])
        for label, x in states.items():
            w.writerow([label] + [fmt(v) for v in x])


def write_rows(path, rows: Sequence[Mapping[str, object]]) -> None:
    if not rows:
        logger.warning(f"nothing to write to {path}")
        return
    with _open_for_write(path) as f:
        w = csv.DictWriter(f, fieldnames=list(rows[0].keys()))
        w.writeheader()
        for row in rows:
            w.writerow({k: fmt(v) if isinstance(v, float) else v for k, v in row.items()})
