"""
Optimal Control Problem Interface
===================================
The contract every problem instance satisfies: dynamics f(x, u), running
cost L(x, u), their x-derivatives, an optional terminal cost phi(x), the
control set U, and a closed-form pointwise minimizer of the Hamiltonian

    H(x, u, p) = p^T f(x, u) + L(x, u).

All capabilities are vectorized over leading axes: x has shape (..., n),
u has shape (..., m), p has shape (..., n), and results broadcast over the
batch axes. The integrators rely on this to evaluate every mixture atom
in one call.

Terminal costs enter only through the costate boundary condition
p(t_f) = grad phi(x(t_f)); the state is never augmented.
"""

from __future__ import annotations

import logging
from abc import ABC, abstractmethod
from typing import TYPE_CHECKING, Callable, Sequence

import numpy as np

from .schemas import ConsistencyCheck, ConsistencyReport
from .settings import (
    CHECK_SEED,
    CHECK_TRIALS,
    FD_REL_TOL,
    FD_STEP,
    HULL_TOL,
    MINIMIZER_TOL,
    MIXTURE_TOL,
)

if TYPE_CHECKING:
    from .controls import RelaxedMixture

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Control sets
# ---------------------------------------------------------------------------

class ControlHull(ABC):
    """Descriptor of U and conv(U) used for feasibility checks and PWM."""

    @abstractmethod
    def hull_violation(self, values: np.ndarray) -> float:
        """Largest distance by which any row of values leaves conv(U)."""

    @abstractmethod
    def set_violation(self, values: np.ndarray) -> float:
        """Largest distance by which any row of values leaves U itself."""

    @property
    @abstractmethod
    def diameter(self) -> np.ndarray:
        """Per-coordinate extent of conv(U)."""


class BoxHull(ControlHull):
    """U = [lower, upper]^m; convex, so U = conv(U)."""

    def __init__(self, lower, upper):
        self.lower = np.atleast_1d(np.asarray(lower, dtype=float))
        self.upper = np.atleast_1d(np.asarray(upper, dtype=float))
        if np.any(self.lower > self.upper):
            raise ValueError("box lower bound exceeds upper bound")

    def hull_violation(self, values: np.ndarray) -> float:
        v = np.asarray(values, dtype=float)
        excess = np.maximum(v - self.upper, self.lower - v)
        return float(max(excess.max(initial=0.0), 0.0))

    def set_violation(self, values: np.ndarray) -> float:
        return self.hull_violation(values)

    @property
    def diameter(self) -> np.ndarray:
        return self.upper - self.lower

    def __repr__(self) -> str:
        return f"BoxHull({self.lower.tolist()}, {self.upper.tolist()})"


class FiniteSetHull(ControlHull):
    """
    Finite scalar control set U = {u_1, ..., u_q}; conv(U) = [min, max].

    points keeps the enumeration order given by the problem; PWM lays out
    its blocks in this order.
    """

    def __init__(self, points: Sequence[float]):
        pts = np.asarray(points, dtype=float).reshape(-1)
        if pts.size < 1 or np.unique(pts).size != pts.size:
            raise ValueError("finite control set needs distinct points")
        self.points = pts

    @property
    def low(self) -> float:
        return float(self.points.min())

    @property
    def high(self) -> float:
        return float(self.points.max())

    def hull_violation(self, values: np.ndarray) -> float:
        v = np.asarray(values, dtype=float)
        excess = np.maximum(v - self.high, self.low - v)
        return float(max(excess.max(initial=0.0), 0.0))

    def set_violation(self, values: np.ndarray) -> float:
        v = np.asarray(values, dtype=float).reshape(-1, 1)
        return float(np.abs(v - self.points[None, :]).min(axis=1).max(initial=0.0))

    def decompose(self, values: np.ndarray) -> np.ndarray:
        """
        Barycentric weights of each scalar in values on the two bracketing
        points of U. Returns shape values.shape + (q,), columns in
        enumeration order.
        """
        v = np.clip(np.asarray(values, dtype=float), self.low, self.high)
        order = np.argsort(self.points)
        sorted_pts = self.points[order]
        out = np.zeros(v.shape + (self.points.size,))
        if sorted_pts.size == 1:
            out[..., 0] = 1.0
            return out
        hi = np.clip(np.searchsorted(sorted_pts, v, side="right"), 1, sorted_pts.size - 1)
        lo = hi - 1
        frac = (v - sorted_pts[lo]) / (sorted_pts[hi] - sorted_pts[lo])
        sorted_w = np.zeros_like(out)
        np.put_along_axis(sorted_w, lo[..., None], (1.0 - frac)[..., None], axis=-1)
        np.put_along_axis(sorted_w, hi[..., None], frac[..., None], axis=-1)
        out[..., order] = sorted_w
        return out

    @property
    def diameter(self) -> np.ndarray:
        return np.array([self.high - self.low])

    def __repr__(self) -> str:
        return f"FiniteSetHull({self.points.tolist()})"


class ModeBoxHull(ControlHull):
    """
    Product set {1, ..., n_modes} x [lower, upper]^r for controlled
    switched systems. A control row is (mode index, amplitude...).

    A relaxed control over this set is carried as a mixture of U-valued
    atoms, so both violations measure distance to U.
    """

    def __init__(self, n_modes: int, lower, upper):
        if n_modes < 1:
            raise ValueError("need at least one mode")
        self.n_modes = int(n_modes)
        self.amplitude = BoxHull(lower, upper)

    def mode_index(self, values: np.ndarray) -> np.ndarray:
        """Zero-based mode of each row."""
        return np.rint(np.asarray(values)[..., 0]).astype(int) - 1

    def set_violation(self, values: np.ndarray) -> float:
        v = np.asarray(values, dtype=float)
        mode = v[..., 0]
        off_mode = np.abs(mode - np.clip(np.rint(mode), 1, self.n_modes)).max(initial=0.0)
        return float(max(off_mode, self.amplitude.hull_violation(v[..., 1:])))

    def hull_violation(self, values: np.ndarray) -> float:
        return self.set_violation(values)

    @property
    def diameter(self) -> np.ndarray:
        return np.concatenate([[self.n_modes - 1.0], self.amplitude.diameter])

    def __repr__(self) -> str:
        return f"ModeBoxHull({self.n_modes}, {self.amplitude.lower.tolist()}, {self.amplitude.upper.tolist()})"


# ---------------------------------------------------------------------------
# Problem definition
# ---------------------------------------------------------------------------

def batch_shape(*arrays: np.ndarray) -> tuple[int, ...]:
    """Common leading shape of (..., k) arrays."""
    return np.broadcast_shapes(*(np.shape(a)[:-1] for a in arrays))


class ProblemDefinition(ABC):
    """
    Base class for optimal control problems handled by the solver.

    Subclasses set the attributes below in __init__ and implement the
    abstract capabilities. terminal_cost / terminal_cost_grad default to
    the zero map (Lagrange form).
    """

    name: str = "problem"
    n_state: int
    m_control: int
    x0: np.ndarray
    t_f: float
    hull: ControlHull
    affine_in_u: bool = False
    convex_cost_in_u: bool = False
    costate_scale: float = 1.0
    running_cost_bound: float | None = None
    state_free_dynamics: bool = False  # f(x, u) does not read x

    @abstractmethod
    def dynamics(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        """f(x, u), shape batch + (n,)."""

    @abstractmethod
    def dynamics_jac_x(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        """df/dx, shape batch + (n, n)."""

    @abstractmethod
    def running_cost(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        """L(x, u), shape batch."""

    @abstractmethod
    def running_cost_grad_x(self, x: np.ndarray, u: np.ndarray) -> np.ndarray:
        """dL/dx, shape batch + (n,)."""

    @abstractmethod
    def hamiltonian_minimizer(self, x: np.ndarray, p: np.ndarray) -> np.ndarray:
        """A point of U minimizing H(x, ., p), shape batch + (m,)."""

    @abstractmethod
    def oracle_candidates(self) -> np.ndarray:
        """Finite (q, m) subset of U used by brute-force minimizer checks."""

    def terminal_cost(self, x: np.ndarray) -> float:
        return 0.0

    def terminal_cost_grad(self, x: np.ndarray) -> np.ndarray:
        return np.zeros(self.n_state)

    def sample_state(self, rng: np.random.Generator) -> np.ndarray:
        return rng.normal(size=self.n_state)

    def sample_costate(self, rng: np.random.Generator) -> np.ndarray:
        return self.costate_scale * rng.normal(size=self.n_state)

    def sample_control(self, rng: np.random.Generator) -> np.ndarray:
        cands = self.oracle_candidates()
        return cands[rng.integers(len(cands))]

    def reduce_mixture(self, mu: RelaxedMixture) -> RelaxedMixture:
        """
        A mixture with the same trajectory and no larger cost, or mu itself.
        General-mode descent passes every Armijo candidate through here.
        """
        return mu

    def __repr__(self) -> str:
        return f"{type(self).__name__}(n_state={self.n_state}, m_control={self.m_control}, t_f={self.t_f})"


def hamiltonian(problem: ProblemDefinition, x: np.ndarray, u: np.ndarray, p: np.ndarray) -> np.ndarray:
    """H(x, u, p) = p^T f(x, u) + L(x, u), vectorized over batch axes."""
    f = problem.dynamics(x, u)
    return np.sum(np.asarray(p) * f, axis=-1) + problem.running_cost(x, u)


def relaxed_hamiltonian(
    problem: ProblemDefinition,
    x: np.ndarray,
    atoms: Sequence[tuple[float, np.ndarray]],
    p: np.ndarray,
) -> float:
    """H(x, nu, p) = sum_i w_i H(x, u_i, p) for a finite mixture slice nu."""
    weights = np.array([w for w, _ in atoms], dtype=float)
    us = np.stack([np.atleast_1d(np.asarray(u, dtype=float)) for _, u in atoms])
    return float(weights @ hamiltonian(problem, x, us, p))


# ---------------------------------------------------------------------------
# Consistency diagnostics
# ---------------------------------------------------------------------------

def _central_difference(fn: Callable[[np.ndarray], np.ndarray], x: np.ndarray, h: float) -> np.ndarray:
    """Columns d fn / d x_j; output shape fn(x).shape + (n,)."""
    cols = []
    for j in range(x.size):
        e = np.zeros_like(x)
        e[j] = h
        cols.append((np.asarray(fn(x + e)) - np.asarray(fn(x - e))) / (2 * h))
    return np.stack(cols, axis=-1)


def _rel_error(numeric: np.ndarray, analytic: np.ndarray) -> float:
    numeric = np.asarray(numeric, dtype=float)
    analytic = np.asarray(analytic, dtype=float)
    return float(np.max(np.abs(numeric - analytic) / np.maximum(1.0, np.abs(analytic)), initial=0.0))


def check_problem_consistency(
    problem: ProblemDefinition,
    trials: int = CHECK_TRIALS,
    seed: int = CHECK_SEED,
    fd_step: float = FD_STEP,
    fd_tol: float = FD_REL_TOL,
    mixture_trials: int | None = None,
) -> ConsistencyReport:
    """
    Validate a problem's derivative and minimizer capabilities.

    Runs on `trials` random (x, u, p) samples:
      - dynamics_jac_x, running_cost_grad_x, terminal_cost_grad against
        central differences
      - hamiltonian_minimizer against brute force over oracle_candidates(),
        plus membership of the returned point in U
      - H(x, u*, p) <= H(x, nu, p) on random mixtures nu of candidates

    Every failed check is listed in the report; the call itself never raises.
    """
    rng = np.random.default_rng(seed)
    mixture_trials = trials if mixture_trials is None else mixture_trials
    errors: dict[str, float] = {
        "dynamics_jac_x": 0.0,
        "running_cost_grad_x": 0.0,
        "terminal_cost_grad": 0.0,
        "minimizer_vs_oracle": -np.inf,
        "minimizer_in_U": 0.0,
        "mixture_lower_bound": -np.inf,
    }
    limits = {
        "dynamics_jac_x": fd_tol,
        "running_cost_grad_x": fd_tol,
        "terminal_cost_grad": fd_tol,
        "minimizer_vs_oracle": MINIMIZER_TOL,
        "minimizer_in_U": HULL_TOL,
        "mixture_lower_bound": MIXTURE_TOL,
    }
    failures: dict[str, str] = {}

    def record(name: str, value: float, detail: str = "") -> None:
        if value > errors[name]:
            errors[name] = value
            if value > limits[name] and name not in failures:
                failures[name] = detail

    try:
        candidates = problem.oracle_candidates()
    except Exception as e:
        logger.error(f"oracle candidates unavailable: {e}")
        failures["minimizer"] = f"oracle candidates unavailable: {type(e).__name__}: {e}"
        candidates = None

    for trial in range(trials):
        x = problem.sample_state(rng)
        u = problem.sample_control(rng)
        p = problem.sample_costate(rng)
        try:
            fd = _central_difference(lambda z: problem.dynamics(z, u), x, fd_step)
            record("dynamics_jac_x", _rel_error(fd, problem.dynamics_jac_x(x, u)), f"trial {trial}, x={x}")

            fd = _central_difference(lambda z: problem.running_cost(z, u), x, fd_step)
            record("running_cost_grad_x", _rel_error(fd, problem.running_cost_grad_x(x, u)), f"trial {trial}, x={x}")

            fd = _central_difference(lambda z: np.asarray(problem.terminal_cost(z)), x, fd_step)
            record("terminal_cost_grad", _rel_error(fd, problem.terminal_cost_grad(x)), f"trial {trial}, x={x}")
        except Exception as e:
            failures.setdefault("derivatives", f"trial {trial}: {type(e).__name__}: {e}")

        if candidates is None:
            continue
        try:
            u_star = problem.hamiltonian_minimizer(x, p)
            h_star = float(hamiltonian(problem, x, u_star, p))
            h_oracle = hamiltonian(problem, x, candidates, p)
            record("minimizer_vs_oracle", h_star - float(h_oracle.min()), f"trial {trial}, x={x}, p={p}")
            record("minimizer_in_U", problem.hull.set_violation(u_star[None, :]), f"trial {trial}, u*={u_star}")

            if trial < mixture_trials:
                k = int(rng.integers(1, min(5, len(candidates)) + 1))
                idx = rng.choice(len(candidates), size=k, replace=False)
                w = rng.dirichlet(np.ones(k))
                h_mix = float(w @ h_oracle[idx])
                record("mixture_lower_bound", h_star - h_mix, f"trial {trial}, weights={w}")
        except Exception as e:
            failures.setdefault("minimizer", f"trial {trial}: {type(e).__name__}: {e}")

    checks = []
    for name, err in errors.items():
        err = max(float(err), 0.0)
        checks.append(
            ConsistencyCheck(
                name=name,
                passed=name not in failures,
                max_error=err,
                tolerance=limits[name],
                detail=failures.get(name, ""),
            )
        )
    for name in ("derivatives", "minimizer"):
        if name in failures:
            checks.append(ConsistencyCheck(name=name, passed=False, max_error=float("nan"), tolerance=0.0, detail=failures[name]))

    report = ConsistencyReport(problem=problem.name, trials=trials, seed=seed, checks=checks)
    if not report.passed:
        logger.warning(f"{problem.name}: consistency checks failed: {[c.name for c in checks if not c.passed]}")
    return report
