"""
Benchmark Problems
====================
Three problem instances with closed-form Hamiltonian minimizers:

  double-tank     fluid level tracking with a two-valued inflow, U = {1, 2}
  hybrid-lqr      switched linear system, U = {b1, b2, b3} x [-20, 20]
  mobile-network  N agents on a line segment with L1 actuation cost

Select by name with get_problem(); the mobile network accepts parameter
overrides (n_agents, d, c, u_bar, x0).
"""

from __future__ import annotations

import itertools
import logging
from typing import Mapping

import numpy as np

from .controls import OrdinaryControl, RelaxedMixture, prune_and_merge
from .exceptions import ProblemLookupError
from .grid import CostateTrajectory, StateTrajectory, TimeGrid
from .problem import BoxHull, FiniteSetHull, ModeBoxHull, ProblemDefinition, batch_shape
from .settings import EMBED_SLOTS, EMBED_ZERO_TOL

logger = logging.getLogger(__name__)


def _stack_last(*columns: np.ndarray) -> np.ndarray:
    return np.stack(np.broadcast_arrays(*columns), axis=-1)


def allocate_slots(load: np.ndarray, floor: np.ndarray, total: int) -> np.ndarray:
    """
    Split `total` slots per row of `load` (rows, cols). Starts from `floor`
    and hands out one slot at a time to the column with the largest
    load^2 / (n (n + 1)), the drop in sum load^2 / n it buys. Only columns
    with a positive floor take part; rows already at `total` are left alone.
    """
    counts = np.array(floor, dtype=int)
    active = counts > 0
    rows = np.arange(counts.shape[0])
    for _ in range(total):
        room = counts.sum(axis=1) < total
        if not room.any():
            break
        gain = np.where(active, load ** 2 / (counts * (counts + 1.0) + ~active), -np.inf)
        best = np.argmax(gain, axis=1)
        counts[rows[room], best[room]] += 1
    return counts


# ---------------------------------------------------------------------------
# Double tank
# ---------------------------------------------------------------------------

class DoubleTankProblem(ProblemDefinition):
    """
    x1' = u - sqrt(x1),  x2' = sqrt(x1) - sqrt(x2),  L = 2 (x2 - 3)^2.

    Square roots act on max(x, 0); the derivative is taken as 0 at or
    below the clamp. The inflow set is enumerated as (2, 1) so that PWM
    cycles open with the high-inflow block.
    """

    name = "double-tank"
    n_state = 2
    m_control = 1
    affine_in_u = True
    convex_cost_in_u = True
    target_level = 3.0

    def __init__(self, x0=(2.0, 2.0), t_f: float = 10.0):
        self.x0 = np.asarray(x0, dtype=float)
        self.t_f = float(t_f)
        self.hull = FiniteSetHull([2.0, 1.0])

    def dynamics(self, x, u):
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        s1 = np.sqrt(np.maximum(x[..., 0], 0.0))
        s2 = np.sqrt(np.maximum(x[..., 1], 0.0))
        return _stack_last(u[..., 0] - s1, s1 - s2)

    def dynamics_jac_x(self, x, u):
        x = np.asarray(x, dtype=float)
        shape = batch_shape(x, u)
        d1 = self._dsqrt(x[..., 0])
        d2 = self._dsqrt(x[..., 1])
        jac = np.zeros(shape + (2, 2))
        jac[..., 0, 0] = -d1
        jac[..., 1, 0] = d1
        jac[..., 1, 1] = -d2
        return jac

    @staticmethod
    def _dsqrt(v: np.ndarray) -> np.ndarray:
        safe = np.where(v > 0, v, 1.0)
        return np.where(v > 0, 0.5 / np.sqrt(safe), 0.0)

    def running_cost(self, x, u):
        x = np.asarray(x, dtype=float)
        cost = 2.0 * (x[..., 1] - self.target_level) ** 2
        return np.broadcast_to(cost, batch_shape(x, u))

    def running_cost_grad_x(self, x, u):
        x = np.asarray(x, dtype=float)
        grad = _stack_last(np.zeros_like(x[..., 1]), 4.0 * (x[..., 1] - self.target_level))
        return np.broadcast_to(grad, batch_shape(x, u) + (2,))

    def hamiltonian_minimizer(self, x, p):
        # H is linear in u with slope p1; ties at p1 = 0 go to u = 1
        p = np.asarray(p, dtype=float)
        u = np.where(p[..., 0] >= 0.0, 1.0, 2.0)
        return np.broadcast_to(u, batch_shape(x, p))[..., None].copy()

    def oracle_candidates(self):
        return self.hull.points[:, None].copy()

    def sample_state(self, rng):
        return rng.uniform(0.25, 5.0, size=2)

    def initial_control(self, grid: TimeGrid) -> OrdinaryControl:
        return OrdinaryControl.constant(grid, 1.0)


# ---------------------------------------------------------------------------
# Hybrid LQR
# ---------------------------------------------------------------------------

HYBRID_LQR_A = np.array([
    [1.0979, -0.0105, 0.0167],
    [-0.0105, 1.0481, 0.0825],
    [0.0167, 0.0825, 1.1540],
])

HYBRID_LQR_B = np.array([
    [0.9801, -0.1987, 0.0],
    [0.1743, 0.8601, -0.4794],
    [0.0952, 0.4699, 0.8776],
])


class HybridLqrProblem(ProblemDefinition):
    """
    x' = A x + b_mode v, running cost 0.01 v^2, terminal cost |x - 1|^2.

    A control row is (mode, v) with mode in {1, 2, 3} and |v| <= v_max.
    """

    name = "hybrid-lqr"
    n_state = 3
    m_control = 2
    affine_in_u = False
    convex_cost_in_u = True
    effort_weight = 0.01
    v_max = 20.0
    oracle_grid_points = 401

    def __init__(self, x0=(0.0, 0.0, 0.0), t_f: float = 2.0, target=(1.0, 1.0, 1.0)):
        self.x0 = np.asarray(x0, dtype=float)
        self.t_f = float(t_f)
        self.target = np.asarray(target, dtype=float)
        self.A = HYBRID_LQR_A
        self.B = HYBRID_LQR_B
        self.hull = ModeBoxHull(len(self.B), -self.v_max, self.v_max)
        self.running_cost_bound = self.effort_weight * self.v_max ** 2

    def _mode_vectors(self, u: np.ndarray) -> np.ndarray:
        idx = np.clip(self.hull.mode_index(u), 0, len(self.B) - 1)
        return self.B[idx]

    def dynamics(self, x, u):
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        return x @ self.A.T + self._mode_vectors(u) * u[..., 1:2]

    def dynamics_jac_x(self, x, u):
        return np.broadcast_to(self.A, batch_shape(x, u) + self.A.shape)

    def running_cost(self, x, u):
        u = np.asarray(u, dtype=float)
        return np.broadcast_to(self.effort_weight * u[..., 1] ** 2, batch_shape(x, u))

    def running_cost_grad_x(self, x, u):
        return np.zeros(batch_shape(x, u) + (self.n_state,))

    def terminal_cost(self, x):
        return float(np.sum((np.asarray(x, dtype=float) - self.target) ** 2))

    def terminal_cost_grad(self, x):
        return 2.0 * (np.asarray(x, dtype=float) - self.target)

    def hamiltonian_minimizer(self, x, p):
        """
        Per mode i, minimize s_i v + 0.01 v^2 over |v| <= 20 with
        s_i = p^T b_i: v_i = -s_i / 0.02 clipped to the box. The mode
        with the smallest contribution wins; ties go to the lowest index.
        """
        p = np.broadcast_to(np.asarray(p, dtype=float), batch_shape(x, p) + (self.n_state,))
        s = p @ self.B.T
        v = np.clip(-s / (2.0 * self.effort_weight), -self.v_max, self.v_max)
        contribution = s * v + self.effort_weight * v ** 2
        best = np.argmin(contribution, axis=-1)
        v_best = np.take_along_axis(v, best[..., None], axis=-1)[..., 0]
        return _stack_last((best + 1).astype(float), v_best)

    def oracle_candidates(self):
        v = np.linspace(-self.v_max, self.v_max, self.oracle_grid_points)
        modes = np.arange(1, len(self.B) + 1, dtype=float)
        return np.array([(m, a) for m in modes for a in v])

    def sample_control(self, rng):
        return np.array([float(rng.integers(1, len(self.B) + 1)), rng.uniform(-self.v_max, self.v_max)])

    def initial_control(self, grid: TimeGrid) -> OrdinaryControl:
        return OrdinaryControl.constant(grid, [1.0, 0.0])

    def reduce_mixture(self, mu: RelaxedMixture) -> RelaxedMixture:
        """
        Rebuild a multi-atom mixture from EMBED_SLOTS equal-weight atoms.

        Per cell the signed mode integrals c_i = sum_a w_a [mode_a = i] v_a
        fix the vector field A x + sum_i c_i b_i. Mode i gets n_i slots at
        amplitude c_i S / n_i, which keeps that field (and so the state)
        while the effort 0.01 sum_i c_i^2 S / n_i approaches
        0.01 (sum_i |c_i|)^2 with n_i roughly proportional to |c_i|. Each
        mode with c_i != 0 keeps n_i >= max(1, |c_i| S / v_max) slots; if a
        cell cannot fit those, mu comes back unchanged.
        """
        if mu.n_atoms == 1:
            return mu
        S = EMBED_SLOTS
        U = mu.stacked                                                   # (a, n_steps, 2)
        onehot = self.hull.mode_index(U)[..., None] == np.arange(len(self.B))
        c = np.einsum("a,akm->km", mu.weights, onehot * U[..., 1:2])   # (n_steps, modes)
        share = np.einsum("a,akm->km", mu.weights, onehot.astype(float))

        load = np.abs(c)
        active = load > EMBED_ZERO_TOL
        floor = np.where(active, np.maximum(1.0, np.ceil(load * S / self.v_max - EMBED_ZERO_TOL)), 0.0).astype(int)
        if np.any(floor.sum(axis=1) > S):
            logger.debug(f"{self.name}: mixture left unreduced, a cell needs more than {S} slots")
            return mu
        idle = np.flatnonzero(~active.any(axis=1))
        floor[idle, np.argmax(share[idle], axis=1)] = S
        counts = allocate_slots(load, floor, S)

        amp = np.clip(c * S / np.maximum(counts, 1), -self.v_max, self.v_max)
        slot_mode = (np.arange(S)[None, :, None] >= np.cumsum(counts, axis=1)[:, None, :]).sum(axis=2)
        slot_amp = np.take_along_axis(amp, slot_mode, axis=1)           # (n_steps, S)
        values = np.stack([slot_mode.T + 1.0, slot_amp.T], axis=-1)
        controls = tuple(OrdinaryControl(mu.grid, v) for v in values)
        return prune_and_merge(RelaxedMixture(np.full(S, 1.0 / S), controls), weight_floor=0.0)


# ---------------------------------------------------------------------------
# Mobile sensor network
# ---------------------------------------------------------------------------

MOBILE_X0 = (1.0, 2.0, 7.0, 9.0, 12.0, 19.0)
MOBILE_INFEASIBLE_OFFSET = 4.3


class MobileNetworkProblem(ProblemDefinition):
    """
    N agents on [0, d] with x_i' = u_i, |u_i| <= u_bar.

    L(x, u) = sum_{i=1}^{N+1} (x_i - x_{i-1})^2 + c * sum_i |u_i| with the
    fixed anchors x_0 = 0 and x_{N+1} = d. The state is not confined to
    [0, d] during integration.
    """

    name = "mobile-network"
    m_control: int
    affine_in_u = True
    convex_cost_in_u = True
    state_free_dynamics = True
    oracle_max_agents = 8
    oracle_samples = 729

    def __init__(
        self,
        n_agents: int = 6,
        d: float = 20.0,
        c: float = 7.0,
        u_bar: float = 1.0,
        x0=None,
        t_f: float = 20.0,
    ):
        if n_agents < 1:
            raise ValueError(f"need at least one agent, got {n_agents}")
        if d <= 0 or c <= 0 or u_bar <= 0:
            raise ValueError(f"d, c and u_bar must be positive (got d={d}, c={c}, u_bar={u_bar})")
        if x0 is None:
            x0 = MOBILE_X0 if n_agents == len(MOBILE_X0) else np.linspace(0.0, d, n_agents + 2)[1:-1]
        self.x0 = np.asarray(x0, dtype=float).reshape(-1)
        if self.x0.size != n_agents:
            raise ValueError(f"x0 has {self.x0.size} entries for {n_agents} agents")
        self.n_state = self.m_control = int(n_agents)
        self.d = float(d)
        self.c = float(c)
        self.u_bar = float(u_bar)
        self.t_f = float(t_f)
        self.hull = BoxHull(np.full(n_agents, -u_bar), np.full(n_agents, u_bar))
        self.costate_scale = 2.0 * self.c

    def _gaps(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        lo = np.zeros(x.shape[:-1] + (1,))
        hi = np.full(x.shape[:-1] + (1,), self.d)
        return np.diff(np.concatenate([lo, x, hi], axis=-1), axis=-1)

    def dynamics(self, x, u):
        return np.broadcast_to(np.asarray(u, dtype=float), batch_shape(x, u) + (self.n_state,))

    def dynamics_jac_x(self, x, u):
        return np.zeros(batch_shape(x, u) + (self.n_state, self.n_state))

    def running_cost(self, x, u):
        spacing = np.sum(self._gaps(x) ** 2, axis=-1)
        effort = self.c * np.sum(np.abs(np.asarray(u, dtype=float)), axis=-1)
        return spacing + effort

    def running_cost_grad_x(self, x, u):
        gaps = self._gaps(x)
        grad = 2.0 * (gaps[..., :-1] - gaps[..., 1:])
        return np.broadcast_to(grad, batch_shape(x, u) + (self.n_state,))

    def hamiltonian_minimizer(self, x, p):
        # separable: p_i u_i + c |u_i| is minimized at a vertex or at 0; |p_i| = c goes to 0
        p = np.asarray(p, dtype=float)
        u = np.where(np.abs(p) > self.c, -np.sign(p) * self.u_bar, 0.0)
        return np.broadcast_to(u, batch_shape(x, p) + (self.n_state,)).copy()

    def oracle_candidates(self):
        levels = (-self.u_bar, 0.0, self.u_bar)
        if self.n_state <= self.oracle_max_agents:
            return np.array(list(itertools.product(levels, repeat=self.n_state)))
        rng = np.random.default_rng(self.n_state)
        return rng.choice(np.array(levels), size=(self.oracle_samples, self.n_state))

    def sample_state(self, rng):
        return rng.uniform(0.0, self.d, size=self.n_state)

    def initial_control(self, grid: TimeGrid) -> OrdinaryControl:
        """
        u1 = 1, u2 = sin(pi t / 4), u3 = 3 u2, u_i = 2 u_{i-1} up to u_{N-1},
        u_N = u_{N-1} - 4.3. Knowingly outside the box, flagged allow_infeasible.
        """
        return OrdinaryControl.from_function(grid, self._initial_profile, allow_infeasible=True)

    def _initial_profile(self, t: np.ndarray) -> np.ndarray:
        n = self.n_state
        s = np.sin(np.pi * t / 4.0)
        cols = [np.ones_like(t), s, 3.0 * s]
        while len(cols) < n - 1:
            cols.append(2.0 * cols[-1])
        if n == 1:
            return cols[0][:, None]
        cols = cols[: n - 1]
        cols.append(cols[-1] - MOBILE_INFEASIBLE_OFFSET)
        return np.stack(cols, axis=-1)


def mobile_network_costate(problem: MobileNetworkProblem, x: StateTrajectory) -> CostateTrajectory:
    """
    Costate of the mobile network from its explicit adjoint equation
    p_i' = 2 (x_{i-1} + x_{i+1} - 2 x_i), p(t_f) = 0, stepped with the same
    backward scheme as the generic integrator. The dynamics do not depend
    on x, so no control is needed.
    """
    X = x.values
    dt = x.grid.dt
    n = x.grid.n_steps
    padded = np.concatenate([np.zeros((n + 1, 1)), X, np.full((n + 1, 1), problem.d)], axis=1)
    p_dot = 2.0 * (padded[:, :-2] + padded[:, 2:] - 2.0 * padded[:, 1:-1])
    # p_k = p_{k+1} - dt * p_dot_{k+1}, summed from the end
    steps = -dt * p_dot[1:][::-1]
    p = np.cumsum(np.concatenate([np.zeros((1, X.shape[1])), steps]), axis=0)[::-1]
    return CostateTrajectory(x.grid, p)


# ---------------------------------------------------------------------------
# Registry
# ---------------------------------------------------------------------------

PROBLEMS: dict[str, type[ProblemDefinition]] = {
    DoubleTankProblem.name: DoubleTankProblem,
    HybridLqrProblem.name: HybridLqrProblem,
    MobileNetworkProblem.name: MobileNetworkProblem,
}

# accepted override keys per problem -> (constructor argument, parser)
_PARAM_ALIASES = {
    "mobile-network": {
        "n_agents": ("n_agents", int),
        "n": ("n_agents", int),
        "d": ("d", float),
        "c": ("c", float),
        "u_bar": ("u_bar", float),
        "x0": ("x0", lambda s: [float(v) for v in s.replace(";", ",").split(",") if v.strip()]),
    },
}


def _parse_params(name: str, params: Mapping[str, object]) -> dict:
    aliases = _PARAM_ALIASES.get(name, {})
    kwargs = {}
    for key, raw in params.items():
        norm = key.strip().lower().replace("-", "_")
        if norm not in aliases:
            known = ", ".join(sorted(aliases)) or "none"
            raise ValueError(f"{name} does not accept parameter '{key}' (accepted: {known})")
        arg, parse = aliases[norm]
        kwargs[arg] = parse(raw) if isinstance(raw, str) else raw
    return kwargs


def get_problem(name: str, params: Mapping[str, object] | None = None) -> ProblemDefinition:
    """Instantiate a benchmark by name, applying string or typed overrides."""
    key = name.strip().lower()
    if key not in PROBLEMS:
        raise ProblemLookupError(name, list(PROBLEMS))
    kwargs = _parse_params(key, params or {})
    problem = PROBLEMS[key](**kwargs)
    if kwargs:
        logger.info(f"{key}: overrides {kwargs}")
    return problem
