"""
PWM Projection Tests
======================
Duty allocation, block layout per hull type, and the fidelity report.
"""

import numpy as np
import pytest

from hamdescent.controls import OrdinaryControl, dirac, mixture_from_atoms
from hamdescent.exceptions import InfeasibleControlError
from hamdescent.grid import TimeGrid
from hamdescent.integrate import integrate_state_forward
from hamdescent.pwm import duty_counts, project_pwm, pwm_fidelity_report
from hamdescent.schemas import PwmConfig


# --- duty counts ---

def test_duty_counts_halves():
    assert duty_counts(np.array([0.5, 0.5]), 50).tolist() == [25, 25]


def test_duty_counts_thirds_sum_to_length():
    counts = duty_counts(np.full(3, 1.0 / 3.0), 10)
    assert counts.tolist() == [3, 4, 3]
    assert counts.sum() == 10


@pytest.mark.parametrize("length", [1, 7, 12, 50])
def test_duty_counts_always_fill_cycle(length, rng):
    for _ in range(20):
        counts = duty_counts(rng.dirichlet(np.ones(4)), length)
        assert counts.sum() == length
        assert np.all(counts >= 0)


def test_duty_counts_rejects_empty_mass():
    with pytest.raises(ValueError):
        duty_counts(np.zeros(2), 10)


# --- finite set ---

def test_double_tank_midpoint_blocks(double_tank):
    grid = TimeGrid(double_tank.t_f, 0.01)
    u = project_pwm(double_tank, dirac(OrdinaryControl.constant(grid, 1.5)), PwmConfig(cycle_steps=50))
    cycle = u.values[:50, 0]
    assert cycle[:25].tolist() == [2.0] * 25
    assert cycle[25:].tolist() == [1.0] * 25
    np.testing.assert_array_equal(u.values.reshape(-1, 50), np.tile(cycle, (20, 1)))


def test_double_tank_vertex_is_fixed_point(double_tank):
    grid = TimeGrid(double_tank.t_f, 0.1)
    u = project_pwm(double_tank, dirac(OrdinaryControl.constant(grid, 2.0)), PwmConfig(cycle_steps=5))
    assert np.all(u.values == 2.0)


def test_two_vertex_mixture_matches_its_mean(double_tank):
    grid = TimeGrid(double_tank.t_f, 0.1)
    mu = mixture_from_atoms([
        (0.25, OrdinaryControl.constant(grid, 2.0)),
        (0.75, OrdinaryControl.constant(grid, 1.0)),
    ])
    u = project_pwm(double_tank, mu, PwmConfig(cycle_steps=4))
    assert u.values[:4, 0].tolist() == [2.0, 1.0, 1.0, 1.0]


def test_trailing_partial_cycle(double_tank):
    grid = TimeGrid(double_tank.t_f, 0.1)
    u = project_pwm(double_tank, dirac(OrdinaryControl.constant(grid, 1.5)), PwmConfig(cycle_steps=30))
    tail = u.values[90:, 0]
    assert tail.tolist() == [2.0] * 5 + [1.0] * 5


def test_infeasible_atom_rejected(double_tank):
    grid = TimeGrid(double_tank.t_f, 0.1)
    with pytest.raises(InfeasibleControlError):
        project_pwm(double_tank, dirac(OrdinaryControl.constant(grid, 2.5)), PwmConfig(cycle_steps=5))


# --- mode box ---

def test_hybrid_lqr_mode_blocks(hybrid_lqr):
    grid = TimeGrid(1.2, 0.1)
    mu = mixture_from_atoms([
        (0.5, OrdinaryControl.constant(grid, [1.0, 4.0])),
        (0.5, OrdinaryControl.constant(grid, [2.0, -6.0])),
    ])
    u = project_pwm(hybrid_lqr, mu, PwmConfig(cycle_steps=12))
    np.testing.assert_array_equal(u.values[:6], np.tile([1.0, 4.0], (6, 1)))
    np.testing.assert_array_equal(u.values[6:], np.tile([2.0, -6.0], (6, 1)))


def test_hybrid_lqr_same_mode_amplitudes_average(hybrid_lqr):
    grid = TimeGrid(1.2, 0.1)
    mu = mixture_from_atoms([
        (0.5, OrdinaryControl.constant(grid, [1.0, 4.0])),
        (0.5, OrdinaryControl.constant(grid, [1.0, 10.0])),
    ])
    u = project_pwm(hybrid_lqr, mu, PwmConfig(cycle_steps=12))
    np.testing.assert_allclose(u.values, np.tile([1.0, 7.0], (12, 1)))


def test_hybrid_lqr_projection_is_admissible(hybrid_lqr, rng):
    grid = TimeGrid(hybrid_lqr.t_f, 0.05)
    atoms = [
        (w, OrdinaryControl(grid, np.column_stack([
            rng.integers(1, 4, size=grid.n_steps).astype(float),
            rng.uniform(-20, 20, size=grid.n_steps),
        ])))
        for w in (0.2, 0.3, 0.5)
    ]
    u = project_pwm(hybrid_lqr, mixture_from_atoms(atoms), PwmConfig(cycle_steps=8))
    assert hybrid_lqr.hull.set_violation(u.values) == 0.0


def test_hybrid_lqr_light_mode_keeps_a_cell(hybrid_lqr):
    # a 3% share rounds to zero cells; the mode still gets one and its full input
    grid = TimeGrid(1.2, 0.1)
    mu = mixture_from_atoms([
        (0.97, OrdinaryControl.constant(grid, [1.0, 0.0])),
        (0.03, OrdinaryControl.constant(grid, [2.0, 20.0])),
    ])
    u = project_pwm(hybrid_lqr, mu, PwmConfig(cycle_steps=12))
    np.testing.assert_array_equal(u.values[:11], np.tile([1.0, 0.0], (11, 1)))
    np.testing.assert_allclose(u.values[11], [2.0, 7.2])
    assert u.values[:, 1].sum() == pytest.approx(12 * 0.03 * 20.0)


def test_hybrid_lqr_projection_tracks_relaxed_state(hybrid_lqr):
    grid = TimeGrid(hybrid_lqr.t_f, 0.01)
    mu = mixture_from_atoms([
        (0.6, OrdinaryControl.constant(grid, [1.0, 2.0])),
        (0.3, OrdinaryControl.constant(grid, [2.0, -3.0])),
        (0.1, OrdinaryControl.constant(grid, [3.0, 5.0])),
    ])
    u = project_pwm(hybrid_lqr, mu, PwmConfig(cycle_steps=12))
    assert hybrid_lqr.hull.set_violation(u.values) == 0.0
    x_rel = integrate_state_forward(hybrid_lqr, mu).values
    x_proj = integrate_state_forward(hybrid_lqr, dirac(u)).values
    boundaries = np.arange(0, grid.n_steps + 1, 12)
    assert np.abs(x_proj[boundaries] - x_rel[boundaries]).max() <= 0.02
    assert np.abs(x_proj[-1] - x_rel[-1]).max() <= 0.02


# --- box ---

def test_mobile_network_projection_is_mean(mobile_network, rng):
    grid = TimeGrid(mobile_network.t_f, 0.1)
    atoms = [(w, OrdinaryControl(grid, rng.uniform(-1, 1, size=(grid.n_steps, 6)))) for w in (0.4, 0.6)]
    mu = mixture_from_atoms(atoms)
    u = project_pwm(mobile_network, mu, PwmConfig(cycle_steps=10))
    np.testing.assert_allclose(u.values, mu.mean_control().values)
    report = pwm_fidelity_report(mobile_network, mu, u, PwmConfig(cycle_steps=10))
    assert report.max_cycle_deviation == pytest.approx(0.0, abs=1e-12)
    # same trajectory, and L is convex in u
    assert report.delta_J <= 1e-9 * report.J_relaxed


# --- config ---

def test_pwm_config_from_seconds():
    assert PwmConfig.from_seconds(0.5, 0.01).cycle_steps == 50
    assert PwmConfig.from_seconds(0.5, 0.1).cycle_steps == 5
    with pytest.raises(ValueError):
        PwmConfig.from_seconds(0.505, 0.01)
    with pytest.raises(ValueError):
        PwmConfig.from_seconds(0.001, 0.01)


# --- fidelity on solved benchmarks ---

@pytest.mark.slow
def test_double_tank_projection_fidelity(double_tank, double_tank_run):
    _, _, result = double_tank_run
    cfg = PwmConfig.from_seconds(0.5, 0.01)
    u = project_pwm(double_tank, result.mixture, cfg)
    assert set(np.unique(u.values)) <= {1.0, 2.0}
    report = pwm_fidelity_report(double_tank, result.mixture, u, cfg)
    assert report.max_cycle_deviation <= 0.02
    assert abs(report.delta_J) <= 0.02 * report.J_relaxed


@pytest.mark.slow
def test_hybrid_lqr_projection_fidelity(hybrid_lqr, hybrid_lqr_run):
    _, _, result = hybrid_lqr_run
    cfg = PwmConfig(cycle_steps=12)
    u = project_pwm(hybrid_lqr, result.mixture, cfg)
    report = pwm_fidelity_report(hybrid_lqr, result.mixture, u, cfg)
    assert report.max_cycle_deviation is None
    assert report.J_projected <= 6e-3
    assert report.delta_J <= 3.5e-3
    assert integrate_state_forward(hybrid_lqr, dirac(u)).final.shape == (3,)
