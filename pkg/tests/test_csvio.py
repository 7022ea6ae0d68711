"""
Run Artifact Tests
====================
CSV writers and readers: exact float round trips, grid reconstruction,
and byte-for-byte determinism.
"""

import csv

import numpy as np
import pytest

from hamdescent.controls import OrdinaryControl, dirac, mixture_from_atoms
from hamdescent.csvio import (
    ITERATION_FIELDS,
    read_iterations,
    read_mixture,
    read_trajectory,
    write_control,
    write_final_state,
    write_iterations,
    write_mixture,
    write_rows,
    write_trajectory,
)
from hamdescent.grid import TimeGrid
from hamdescent.integrate import integrate_costate_backward, integrate_state_forward
from hamdescent.schemas import IterationRecord


def _records():
    return [
        IterationRecord(k=0, J=50.54571234567891, theta=-12.3, lam=1.0, l=0, n_cost_evals=2,
                        wall_ms=3.2, J_next=20.1),
        IterationRecord(k=1, J=20.1, theta=-1e-3, lam=0.125, l=3, n_cost_evals=5,
                        wall_ms=4.0, J_next=20.0999, J_prev_trial=20.2, n_atoms=2),
        IterationRecord(k=2, J=20.0999, theta=-1e-9, lam=0.0, l=0, n_cost_evals=1,
                        wall_ms=1.0, J_next=20.0999, status="converged"),
    ]


def test_iterations_round_trip(tmp_path):
    path = tmp_path / "iterations.csv"
    records = _records()
    write_iterations(path, records)
    with open(path, newline="") as f:
        assert next(csv.reader(f)) == ITERATION_FIELDS
    assert read_iterations(path) == records


def test_mixture_round_trip(tmp_path, rng):
    grid = TimeGrid(2.0, 0.1)
    mu = mixture_from_atoms([
        (1.0 / 3.0, OrdinaryControl(grid, rng.normal(size=(grid.n_steps, 2)))),
        (2.0 / 3.0, OrdinaryControl(grid, rng.normal(size=(grid.n_steps, 2)))),
    ])
    path = tmp_path / "nested" / "final_control.csv"
    write_mixture(path, mu)
    back = read_mixture(path)
    assert back.grid.same_as(grid)
    np.testing.assert_array_equal(back.weights, mu.weights)
    np.testing.assert_array_equal(back.stacked, mu.stacked)


def test_single_cell_control_needs_t_f(tmp_path):
    grid = TimeGrid(0.5, 0.5)
    path = tmp_path / "control.csv"
    write_control(path, OrdinaryControl.constant(grid, 1.5))
    with pytest.raises(ValueError):
        read_mixture(path)
    back = read_mixture(path, t_f=0.5)
    assert back.grid.n_steps == 1
    assert back.controls[0].values.tolist() == [[1.5]]


def test_trajectory_round_trip(tmp_path, double_tank):
    grid = TimeGrid(double_tank.t_f, 0.1)
    mu = dirac(double_tank.initial_control(grid))
    x = integrate_state_forward(double_tank, mu)
    p = integrate_costate_backward(double_tank, mu, x)

    path = tmp_path / "trajectory.csv"
    write_trajectory(path, x, p)
    x_back, p_back = read_trajectory(path)
    np.testing.assert_array_equal(x_back.values, x.values)
    np.testing.assert_array_equal(p_back.values, p.values)
    assert x_back.grid.same_as(grid)

    write_trajectory(path, x)
    _, p_none = read_trajectory(path)
    assert p_none is None


def test_writes_are_deterministic(tmp_path, hybrid_lqr):
    grid = TimeGrid(hybrid_lqr.t_f, 0.05)
    mu = dirac(OrdinaryControl.constant(grid, [2.0, 0.1]))
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    write_mixture(a, mu)
    write_mixture(b, mu)
    assert a.read_bytes() == b.read_bytes()


def test_final_state_rows(tmp_path):
    path = tmp_path / "final_state.csv"
    write_final_state(path, {"relaxed": np.array([1.0, 2.5]), "projected": np.array([1.0, 2.25])})
    with open(path, newline="") as f:
        rows = list(csv.reader(f))
    assert rows[0] == ["trajectory", "x1", "x2"]
    assert rows[1] == ["relaxed", "1", "2.5"]
    assert rows[2][0] == "projected"


def test_write_rows(tmp_path):
    path = tmp_path / "table.csv"
    write_rows(path, [{"problem": "double-tank", "J": 4.75, "iters": 100}])
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    assert rows == [{"problem": "double-tank", "J": "4.75", "iters": "100"}]
    write_rows(tmp_path / "empty.csv", [])
    assert not (tmp_path / "empty.csv").exists()
