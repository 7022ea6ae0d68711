"""
PWM Projection
================
Turns a relaxed mixture into an ordinary U-valued control by pulse-width
modulation over fixed cycles of cycle_steps grid cells.

Within each cycle the mixture is averaged, the average is split into duty
fractions over the points of U, and each point gets one contiguous block
of cells. Blocks follow the hull's enumeration order. A trailing partial
cycle is modulated over its actual length. Switched systems (ModeBoxHull)
also steer each cycle back onto the relaxed state at its start.
"""

from __future__ import annotations

import logging
import math

import numpy as np

from .controls import OrdinaryControl, RelaxedMixture, dirac
from .exceptions import InfeasibleControlError
from .integrate import cost_of, integrate_state_forward
from .problem import BoxHull, FiniteSetHull, ModeBoxHull, ProblemDefinition
from .schemas import PwmConfig, PwmFidelityReport
from .settings import HULL_TOL

logger = logging.getLogger(__name__)


def duty_counts(fractions: np.ndarray, length: int) -> np.ndarray:
    """
    Integer cell counts for duty fractions over `length` cells.

    Cumulative rounding: block boundaries are round(cumsum(f) * length),
    with the last boundary pinned to length, so counts always sum exactly
    to length and each boundary is off by at most half a cell.
    """
    f = np.clip(np.asarray(fractions, dtype=float), 0.0, None)
    total = f.sum()
    if total <= 0:
        raise ValueError("duty fractions sum to zero")
    bounds = np.floor(np.cumsum(f / total) * length + 0.5).astype(int)
    bounds = np.minimum(bounds, length)
    bounds[-1] = length
    return np.diff(np.concatenate([[0], bounds]))


def _cycles(n_steps: int, cycle_steps: int):
    for start in range(0, n_steps, cycle_steps):
        yield start, min(start + cycle_steps, n_steps)


def _check_inputs(problem: ProblemDefinition, mu: RelaxedMixture) -> None:
    violation = max(problem.hull.hull_violation(c.values) for c in mu.controls)
    if violation > HULL_TOL:
        raise InfeasibleControlError(violation, "mixture atom")


def project_pwm(problem: ProblemDefinition, mu: RelaxedMixture, cfg: PwmConfig) -> OrdinaryControl:
    """Project mu onto U-valued switching controls, one PWM block per point of U per cycle."""
    _check_inputs(problem, mu)
    hull = problem.hull
    if isinstance(hull, FiniteSetHull):
        values = _project_finite(hull, mu, cfg.cycle_steps)
    elif isinstance(hull, ModeBoxHull):
        values = _project_modes(problem, hull, mu, cfg.cycle_steps)
    elif isinstance(hull, BoxHull):
        values = _project_box(problem, mu, cfg.cycle_steps)
    else:
        raise TypeError(f"no PWM rule for {type(hull).__name__}")
    logger.debug(f"{problem.name}: projected {mu.n_atoms} atom(s) with cycle_steps={cfg.cycle_steps}")
    return OrdinaryControl(mu.grid, values)


def _project_finite(hull: FiniteSetHull, mu: RelaxedMixture, cycle_steps: int) -> np.ndarray:
    # barycentric fractions per (atom, cell, point)
    parts = hull.decompose(mu.stacked[..., 0])
    out = np.empty((mu.grid.n_steps, 1))
    for s, e in _cycles(mu.grid.n_steps, cycle_steps):
        frac = mu.weights @ parts[:, s:e, :].mean(axis=1)
        counts = duty_counts(frac, e - s)
        out[s:e, 0] = np.repeat(hull.points, counts)
    return out


def _mode_counts(mass: np.ndarray, carries_input: np.ndarray, length: int) -> np.ndarray:
    """Duty counts from the mode masses; a mode with nonzero input takes a cell from the longest block if it got none."""
    counts = duty_counts(mass, length)
    for i in np.flatnonzero(carries_input & (counts == 0)):
        donor = int(np.argmax(counts))
        if counts[donor] <= 1:
            break
        counts[donor] -= 1
        counts[i] += 1
    return counts


def _mode_input_directions(problem: ProblemDefinition, x: np.ndarray, active: np.ndarray, r: int) -> np.ndarray:
    """(n, len(active) * r) columns f(x, (i, e_j)) - f(x, (i, 0)) for the listed modes."""
    ids = np.repeat(active + 1.0, r)
    unit = np.column_stack([ids, np.tile(np.eye(r), (len(active), 1))])
    idle = np.column_stack([ids, np.zeros((len(ids), r))])
    return (problem.dynamics(x, unit) - problem.dynamics(x, idle)).T


def _project_modes(problem: ProblemDefinition, hull: ModeBoxHull, mu: RelaxedMixture, cycle_steps: int) -> np.ndarray:
    """
    Mode i gets a block of length ~ gamma_i * cycle, gamma_i being the
    weighted share of (cell, atom) pairs in mode i; a mode with nonzero
    input keeps at least one cell. The block amplitude spreads the mode's
    signed input integral over the cells it got, clipped to the box.

    At the start of each later cycle the projected state is compared with
    the relaxed one and the gap, solved for through the input directions
    of the modes in use (dynamics affine in the amplitude), is added to
    that cycle's integrals. Rounding, clipping and the within-cycle block
    order therefore do not build up over the horizon.
    """
    U = mu.stacked
    n_modes = hull.n_modes
    modes = hull.mode_index(U)
    amplitude = U[..., 1:]
    r = amplitude.shape[-1]
    dt = mu.grid.dt
    x_rel = integrate_state_forward(problem, mu).values
    x = x_rel[0].copy()
    out = np.empty((mu.grid.n_steps, U.shape[-1]))
    for s, e in _cycles(mu.grid.n_steps, cycle_steps):
        in_mode = (modes[:, s:e, None] == np.arange(n_modes)).astype(float)   # (a, cells, modes)
        mass = np.einsum("a,acm->m", mu.weights, in_mode)
        integral = np.einsum("a,acm,acr->mr", mu.weights, in_mode, amplitude[:, s:e])
        counts = _mode_counts(mass, np.any(integral != 0.0, axis=1), e - s)

        active = np.flatnonzero(counts)
        if s > 0:
            G = _mode_input_directions(problem, x, active, r)
            delta, *_ = np.linalg.lstsq(G, (x_rel[s] - x) / dt, rcond=None)
            integral[active] += delta.reshape(len(active), r)

        level = np.clip(integral / np.maximum(counts, 1)[:, None], hull.amplitude.lower, hull.amplitude.upper)
        rows = np.concatenate([np.arange(1, n_modes + 1, dtype=float)[:, None], level], axis=1)
        out[s:e] = np.repeat(rows, counts, axis=0)
        for k in range(s, e):
            x = x + dt * problem.dynamics(x, out[k])
    return out


def _project_box(problem: ProblemDefinition, mu: RelaxedMixture, cycle_steps: int) -> np.ndarray:
    # a box is its own hull: for affine dynamics the mean control is already admissible
    if problem.affine_in_u:
        return np.array(mu.mean_control().values)
    U = mu.stacked
    out = np.empty(U.shape[1:])
    for s, e in _cycles(mu.grid.n_steps, cycle_steps):
        counts = duty_counts(mu.weights, e - s)
        owner = np.repeat(np.arange(mu.n_atoms), counts)
        out[s:e] = U[owner, np.arange(s, e)]
    return out


def pwm_fidelity_report(
    problem: ProblemDefinition,
    mu: RelaxedMixture,
    u_proj: OrdinaryControl,
    cfg: PwmConfig,
) -> PwmFidelityReport:
    """Cycle-average agreement with the mean control (affine problems) and the cost gap J(u_proj) - J(mu)."""
    n = mu.grid.n_steps
    deviation = None
    if problem.affine_in_u:
        mean = mu.mean_control().values
        deviation = 0.0
        for s, e in _cycles(n, cfg.cycle_steps):
            gap = np.abs(u_proj.values[s:e].mean(axis=0) - mean[s:e].mean(axis=0))
            deviation = max(deviation, float(gap.max()))
    return PwmFidelityReport(
        n_cycles=math.ceil(n / cfg.cycle_steps),
        cycle_steps=cfg.cycle_steps,
        max_cycle_deviation=deviation,
        J_relaxed=cost_of(problem, mu),
        J_projected=cost_of(problem, dirac(u_proj)),
    )
