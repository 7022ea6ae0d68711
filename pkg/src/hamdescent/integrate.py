"""
Fixed-Step Integrators
========================
Forward state sweep, backward costate sweep, and cost quadrature for
relaxed mixtures on a TimeGrid.

  state:    x_{k+1} = x_k + dt * sum_i w_i f(x_k, u_i(t_k))
  costate:  p_n = grad phi(x_n)
            p_k = p_{k+1} + dt * sum_i w_i (f_x^T p + L_x)(x_{k+1}, u_i(t_{k+1}), p_{k+1})
  cost:     J = sum_{k<n} dt * sum_i w_i L(x_k, u_i(t_k)) + phi(x_n)

Controls are zero-order held; the control value at t_n (needed by the
first backward step) is the hold of the last cell. Problems whose
dynamics do not read the state (state_free_dynamics) take both sweeps as
cumulative sums; the additions run in the same order as the step loops.
"""

from __future__ import annotations

import numpy as np

from .controls import OrdinaryControl, RelaxedMixture, dirac
from .exceptions import GridMismatchError, IntegrationDivergedError
from .grid import CostateTrajectory, StateTrajectory, TimeGrid
from .problem import ProblemDefinition


def _initial_state(problem: ProblemDefinition, x0) -> np.ndarray:
    x0 = problem.x0 if x0 is None else x0
    x0 = np.asarray(x0, dtype=float).reshape(-1)
    if x0.size != problem.n_state:
        raise ValueError(f"x0 has dimension {x0.size}, problem expects {problem.n_state}")
    return x0


def integrate_state_forward(
    problem: ProblemDefinition,
    mu: RelaxedMixture,
    grid: TimeGrid | None = None,
    x0=None,
) -> StateTrajectory:
    """Explicit forward Euler on the relaxed vector field sum_i w_i f(x, u_i)."""
    grid = mu.grid if grid is None else grid
    if not grid.same_as(mu.grid):
        raise GridMismatchError("mixture and grid")
    if problem.state_free_dynamics:
        return _state_free_forward(problem, mu, grid, x0)
    if mu.n_atoms == 1:
        return integrate_ordinary_state(problem, mu.controls[0], x0)

    x = np.empty((grid.n_steps + 1, problem.n_state))
    x[0] = _initial_state(problem, x0)
    U = mu.stacked
    w = mu.weights
    dt = grid.dt
    for k in range(grid.n_steps):
        f = problem.dynamics(x[k], U[:, k, :])
        x[k + 1] = x[k] + dt * (w @ f)
        if not np.all(np.isfinite(x[k + 1])):
            raise IntegrationDivergedError(k + 1, "state")
    return StateTrajectory(grid, x)


def integrate_ordinary_state(problem: ProblemDefinition, u: OrdinaryControl, x0=None) -> StateTrajectory:
    """Ordinary-control Euler sweep: x_{k+1} = x_k + dt * f(x_k, u_k)."""
    if problem.state_free_dynamics:
        return _state_free_forward(problem, dirac(u), u.grid, x0)
    grid = u.grid
    x = np.empty((grid.n_steps + 1, problem.n_state))
    x[0] = _initial_state(problem, x0)
    dt = grid.dt
    for k in range(grid.n_steps):
        x[k + 1] = x[k] + dt * problem.dynamics(x[k], u.values[k])
        if not np.all(np.isfinite(x[k + 1])):
            raise IntegrationDivergedError(k + 1, "state")
    return StateTrajectory(grid, x)


def _first_nonfinite(values: np.ndarray, last: bool = False) -> int | None:
    bad = np.flatnonzero(~np.all(np.isfinite(values), axis=1))
    if bad.size == 0:
        return None
    return int(bad[-1] if last else bad[0])


def _state_free_forward(problem: ProblemDefinition, mu: RelaxedMixture, grid: TimeGrid, x0) -> StateTrajectory:
    start = _initial_state(problem, x0)
    f = problem.dynamics(start, mu.stacked)                        # (a, n_steps, n)
    drift = f[0] if mu.n_atoms == 1 else np.tensordot(mu.weights, f, axes=1)
    x = np.cumsum(np.concatenate([start[None, :], grid.dt * drift]), axis=0)
    k = _first_nonfinite(x)
    if k is not None:
        raise IntegrationDivergedError(k, "state")
    return StateTrajectory(grid, x)


def _state_free_backward(problem: ProblemDefinition, mu: RelaxedMixture, x: StateTrajectory) -> CostateTrajectory:
    n = mu.grid.n_steps
    X = x.values
    p_final = np.asarray(problem.terminal_cost_grad(X[n]), dtype=float)
    if not np.all(np.isfinite(p_final)):
        raise IntegrationDivergedError(n, "costate")
    held = mu.stacked[:, np.minimum(np.arange(1, n + 1), n - 1), :]
    grad = problem.running_cost_grad_x(X[None, 1:, :], held)      # (a, n_steps, n)
    steps = mu.grid.dt * np.tensordot(mu.weights, grad, axes=1)
    p = np.cumsum(np.concatenate([p_final[None, :], steps[::-1]]), axis=0)[::-1]
    k = _first_nonfinite(p, last=True)
    if k is not None:
        raise IntegrationDivergedError(k, "costate")
    return CostateTrajectory(mu.grid, p)


def integrate_costate_backward(
    problem: ProblemDefinition,
    mu: RelaxedMixture,
    x: StateTrajectory,
) -> CostateTrajectory:
    """Backward Euler-in-reverse sweep of the adjoint equation from p(t_f) = grad phi(x(t_f))."""
    grid = mu.grid
    if not grid.same_as(x.grid):
        raise GridMismatchError("mixture and state trajectory")
    if problem.state_free_dynamics:
        return _state_free_backward(problem, mu, x)
    n = grid.n_steps
    dt = grid.dt
    U = mu.stacked
    w = mu.weights
    X = x.values

    p = np.empty_like(X)
    p[n] = problem.terminal_cost_grad(X[n])
    if not np.all(np.isfinite(p[n])):
        raise IntegrationDivergedError(n, "costate")
    for k in range(n - 1, -1, -1):
        u = U[:, min(k + 1, n - 1), :]
        jac = problem.dynamics_jac_x(X[k + 1], u)          # (a, n, n)
        grad = problem.running_cost_grad_x(X[k + 1], u)    # (a, n)
        per_atom = np.einsum("aji,j->ai", jac, p[k + 1]) + grad
        p[k] = p[k + 1] + dt * (w @ per_atom)
        if not np.all(np.isfinite(p[k])):
            raise IntegrationDivergedError(k, "costate")
    return CostateTrajectory(grid, p)


def evaluate_cost(problem: ProblemDefinition, mu: RelaxedMixture, x: StateTrajectory) -> float:
    """Left-endpoint Riemann sum of the relaxed running cost plus the terminal cost."""
    if not mu.grid.same_as(x.grid):
        raise GridMismatchError("mixture and state trajectory")
    if mu.n_atoms == 1:
        return evaluate_ordinary_cost(problem, mu.controls[0], x)
    running = problem.running_cost(x.values[None, :-1, :], mu.stacked)   # (a, n_steps)
    return float(mu.grid.dt * (mu.weights @ running.sum(axis=1)) + problem.terminal_cost(x.final))


def evaluate_ordinary_cost(problem: ProblemDefinition, u: OrdinaryControl, x: StateTrajectory) -> float:
    running = problem.running_cost(x.values[:-1], u.values)
    return float(u.grid.dt * running.sum() + problem.terminal_cost(x.final))


def cost_of(problem: ProblemDefinition, mu: RelaxedMixture, x0=None) -> float:
    """J(mu): forward sweep followed by quadrature."""
    return evaluate_cost(problem, mu, integrate_state_forward(problem, mu, x0=x0))
