"""
Control and Mixture Tests
===========================
Dirac embedding, measure and pointwise convex combinations, pruning.
"""

import numpy as np
import pytest

from hamdescent.controls import (
    OrdinaryControl,
    RelaxedMixture,
    collapse_affine,
    convex_combine_controls,
    convex_combine_measures,
    dirac,
    mixture_from_atoms,
    prune_and_merge,
)
from hamdescent.exceptions import GridMismatchError
from hamdescent.grid import TimeGrid
from hamdescent.integrate import cost_of, integrate_state_forward


@pytest.fixture
def grid():
    return TimeGrid(1.0, 0.1)


def test_ordinary_control_shapes(grid):
    u = OrdinaryControl.constant(grid, 1.0)
    assert u.values.shape == (10, 1)
    assert u.m == 1
    w = OrdinaryControl.constant(grid, [1.0, -2.0])
    assert w.values.shape == (10, 2)
    with pytest.raises(ValueError):
        OrdinaryControl(grid, np.ones(9))
    with pytest.raises(ValueError):
        OrdinaryControl(grid, np.full(10, np.nan))


def test_ordinary_control_is_read_only(grid):
    u = OrdinaryControl.constant(grid, 1.0)
    with pytest.raises(ValueError):
        u.values[0, 0] = 3.0


def test_mixture_validation(grid):
    u = OrdinaryControl.constant(grid, 1.0)
    with pytest.raises(ValueError):
        RelaxedMixture(np.array([0.6, 0.6]), (u, u))
    with pytest.raises(ValueError):
        RelaxedMixture(np.array([1.2, -0.2]), (u, u))
    with pytest.raises(ValueError):
        RelaxedMixture(np.array([]), ())
    with pytest.raises(GridMismatchError):
        RelaxedMixture(np.array([0.5, 0.5]), (u, OrdinaryControl.constant(TimeGrid(1.0, 0.05), 1.0)))


def test_dirac(grid):
    u = OrdinaryControl.constant(grid, 1.0)
    mu = dirac(u)
    assert mu.n_atoms == 1
    assert mu.weights.tolist() == [1.0]
    assert mu.mean_control() is u


def test_dirac_cost_equals_ordinary(double_tank):
    grid = TimeGrid(double_tank.t_f, 0.1)
    u = OrdinaryControl.constant(grid, 1.0)
    assert cost_of(double_tank, dirac(u)) == cost_of(double_tank, RelaxedMixture(np.ones(1), (u,)))


def test_combine_measures_quarter(grid):
    u = OrdinaryControl.constant(grid, 1.0)
    v = OrdinaryControl.constant(grid, 2.0)
    mu = convex_combine_measures(dirac(u), dirac(v), 0.25)
    assert mu.n_atoms == 2
    np.testing.assert_allclose(mu.weights, [0.75, 0.25])
    assert mu.controls[0] is u and mu.controls[1] is v


def test_combine_measures_endpoints(grid):
    u = OrdinaryControl.constant(grid, 1.0)
    v = OrdinaryControl.constant(grid, 2.0)
    at_zero = convex_combine_measures(dirac(u), dirac(v), 0.0)
    assert at_zero.n_atoms == 1 and at_zero.controls[0] is u
    at_one = convex_combine_measures(dirac(u), dirac(v), 1.0)
    assert at_one.n_atoms == 1 and at_one.controls[0] is v


def test_combine_measures_checks_inputs(grid):
    u = OrdinaryControl.constant(grid, 1.0)
    with pytest.raises(ValueError):
        convex_combine_measures(dirac(u), dirac(u), 1.5)
    with pytest.raises(GridMismatchError):
        convex_combine_measures(dirac(u), dirac(OrdinaryControl.constant(TimeGrid(1.0, 0.05), 1.0)), 0.5)


def test_combine_controls(grid):
    u = OrdinaryControl.constant(grid, 1.0)
    v = OrdinaryControl.constant(grid, 2.0)
    np.testing.assert_allclose(convex_combine_controls(u, v, 0.5).values, 1.5)
    assert convex_combine_controls(u, v, 0.0) is u
    with pytest.raises(GridMismatchError):
        convex_combine_controls(u, OrdinaryControl.constant(TimeGrid(2.0, 0.1), 1.0), 0.5)


def test_combine_controls_clears_infeasible_flag_at_full_step(grid):
    u = OrdinaryControl.constant(grid, 5.0, allow_infeasible=True)
    v = OrdinaryControl.constant(grid, 1.0)
    assert convex_combine_controls(u, v, 0.5).allow_infeasible
    assert not convex_combine_controls(u, v, 1.0).allow_infeasible


def test_prune_drops_zero_weight(grid):
    u = OrdinaryControl.constant(grid, 1.0)
    v = OrdinaryControl.constant(grid, 2.0)
    mu = prune_and_merge(RelaxedMixture(np.array([1.0, 0.0]), (u, v)))
    assert mu.n_atoms == 1 and mu.controls[0] is u


def test_prune_merges_equal_controls(grid):
    u = OrdinaryControl.constant(grid, 1.0)
    u_copy = OrdinaryControl.constant(grid, 1.0)
    mu = prune_and_merge(mixture_from_atoms([(0.5, u), (0.5, u_copy)]))
    assert mu.n_atoms == 1
    assert mu.weights.tolist() == [1.0]


def test_prune_keeps_heaviest_when_all_below_floor(grid):
    atoms = [(1.0 / 101, OrdinaryControl.constant(grid, 1.0 + i / 101)) for i in range(101)]
    mu = prune_and_merge(mixture_from_atoms(atoms), weight_floor=0.01)
    assert mu.n_atoms == 1
    assert mu.weights.tolist() == [1.0]


def test_prune_preserves_order_and_mass(grid):
    controls = [OrdinaryControl.constant(grid, float(c)) for c in (1.0, 2.0, 1.0, 1.5)]
    mu = prune_and_merge(RelaxedMixture(np.array([0.1, 0.2, 0.3, 0.4]), tuple(controls)))
    assert [c.values[0, 0] for c in mu.controls] == [1.0, 2.0, 1.5]
    np.testing.assert_allclose(mu.weights, [0.4, 0.2, 0.4])
    assert abs(mu.weights.sum() - 1.0) <= 1e-12


def test_prune_rejects_large_floor(grid):
    with pytest.raises(ValueError):
        prune_and_merge(dirac(OrdinaryControl.constant(grid, 1.0)), weight_floor=0.5)


def test_affine_measure_update_matches_pointwise_update(double_tank):
    grid = TimeGrid(double_tank.t_f, 0.1)
    u = OrdinaryControl.from_function(grid, lambda t: 1.0 + 0.1 * t)
    v = OrdinaryControl.constant(grid, 2.0)
    lam = 0.375
    via_measures = collapse_affine(convex_combine_measures(dirac(u), dirac(v), lam))
    pointwise = convex_combine_controls(u, v, lam)
    np.testing.assert_allclose(via_measures.controls[0].values, pointwise.values, rtol=0, atol=1e-14)
    x_a = integrate_state_forward(double_tank, via_measures)
    x_b = integrate_state_forward(double_tank, dirac(pointwise))
    np.testing.assert_allclose(x_a.values, x_b.values, rtol=0, atol=1e-12)


@pytest.mark.parametrize("lam", [0.1, 0.5, 0.9])
def test_mobile_network_convexity_bound(mobile_network, lam):
    grid = TimeGrid(mobile_network.t_f, 0.1)
    u = mobile_network.initial_control(grid)
    v = OrdinaryControl.from_function(grid, lambda t: np.outer(np.cos(t), [1, -1, 1, -1, 1, -1]))
    J_u = cost_of(mobile_network, dirac(u))
    J_v = cost_of(mobile_network, dirac(v))
    J_mid = cost_of(mobile_network, dirac(convex_combine_controls(u, v, lam)))
    assert J_mid <= (1 - lam) * J_u + lam * J_v + 1e-9 * J_u


def test_repeated_updates_keep_weights_normalized(grid, rng):
    mu = dirac(OrdinaryControl.constant(grid, 0.0))
    for _ in range(20):
        nu = dirac(OrdinaryControl(grid, rng.uniform(-1, 1, size=10)))
        mu = convex_combine_measures(mu, nu, float(rng.uniform(0.05, 0.95)), weight_floor=1e-6)
        assert np.all(mu.weights >= 0)
        assert abs(mu.weights.sum() - 1.0) <= 1e-12
