"""
Hamiltonian Descent Solver
============================
Relaxed-control descent driven by pointwise Hamiltonian minimization.

Each iteration:
  1. integrate the state forward and the costate backward under mu
  2. minimize H(x_k, ., p_k) on every cell -> u*, theta(mu)
  3. stop if |theta| <= theta_tol, otherwise take nu = dirac(u*)
  4. Armijo: smallest l with J(mu_l) - J(mu) <= alpha * beta^l * eta * theta
  5. mu_next = mu_l, where mu_l is
       general:      (1 - beta^l) mu + beta^l nu as measures
       convexified:  dirac(u + beta^l (v - u))   (affine f, convex L)
"""

from __future__ import annotations

import logging
import time
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np

from .controls import (
    OrdinaryControl,
    RelaxedMixture,
    convex_combine_controls,
    convex_combine_measures,
    dirac,
)
from .exceptions import ArmijoStallError, InfeasibleControlError, IntegrationDivergedError
from .grid import CostateTrajectory, StateTrajectory
from .integrate import cost_of, evaluate_cost, integrate_costate_backward, integrate_state_forward
from .problem import ProblemDefinition, hamiltonian
from .schemas import DerivativeCheck, IterationRecord, SolverConfig, SolverMode, StopReason
from .settings import DERIVATIVE_LAMBDA, HULL_TOL, THETA_CLAMP_TOL

logger = logging.getLogger(__name__)


class ArmijoResult(NamedTuple):
    l: int
    lam: float
    J_next: float
    mixture: RelaxedMixture
    n_cost_evals: int
    J_prev_trial: Optional[float]  # cost of the rejected trial at l - 1


class SolverRun(NamedTuple):
    mixture: RelaxedMixture
    records: list[IterationRecord]
    stop_reason: StopReason


def default_mode(problem: ProblemDefinition) -> SolverMode:
    return "convexified" if problem.affine_in_u and problem.convex_cost_in_u else "general"


def check_mode(problem: ProblemDefinition, mode: SolverMode, mu: RelaxedMixture | None = None) -> None:
    if mode == "general":
        return
    if mode != "convexified":
        raise ValueError(f"unknown solver mode '{mode}'")
    if not (problem.affine_in_u and problem.convex_cost_in_u):
        raise ValueError(f"convexified mode needs dynamics affine in u and cost convex in u ({problem.name} is not)")
    if mu is not None and mu.n_atoms != 1:
        raise ValueError(f"convexified mode works on a single control, got {mu.n_atoms} atoms")


# ---------------------------------------------------------------------------
# Optimality function
# ---------------------------------------------------------------------------

def _relaxed_hamiltonian_path(
    problem: ProblemDefinition, mu: RelaxedMixture, X: np.ndarray, P: np.ndarray
) -> np.ndarray:
    """H(x_k, mu_k, p_k) for every cell k."""
    if mu.n_atoms == 1:
        return hamiltonian(problem, X, mu.controls[0].values, P)
    per_atom = hamiltonian(problem, X[None], mu.stacked, P[None])
    return mu.weights @ per_atom


def optimality_theta(
    problem: ProblemDefinition,
    mu: RelaxedMixture,
    x: StateTrajectory,
    p: CostateTrajectory,
) -> tuple[float, OrdinaryControl]:
    """
    theta(mu) = sum_k dt * (H(x_k, u*_k, p_k) - H(x_k, mu_k, p_k)) <= 0,
    with u*_k the pointwise minimizer held over cell k.
    """
    X = x.values[:-1]
    P = p.values[:-1]
    u_star = np.asarray(problem.hamiltonian_minimizer(X, P), dtype=float)
    gap = hamiltonian(problem, X, u_star, P) - _relaxed_hamiltonian_path(problem, mu, X, P)
    theta = float(mu.grid.dt * np.sum(gap))
    if theta > THETA_CLAMP_TOL:
        logger.warning(f"theta={theta:.3e} is positive; minimizer of {problem.name} may be inexact")
    return min(theta, 0.0), OrdinaryControl(mu.grid, u_star)


def directional_derivative_check(
    problem: ProblemDefinition,
    mu: RelaxedMixture,
    nu: RelaxedMixture,
    lam: float = DERIVATIVE_LAMBDA,
) -> DerivativeCheck:
    """
    One-sided derivative of J along (1 - lam) mu + lam nu at lam = 0:
    the Hamiltonian integral sum_k dt (H(x_k, nu_k, p_{k+1}) - H(x_k, mu_k, p_{k+1}))
    against the forward difference (J(mu_lam) - J(mu)) / lam.

    Cell k is paired with p_{k+1}, the costate that weighs the Euler
    increment of cell k; with p_k the two sides drift apart by O(dt |f_x|).
    """
    if not 0.0 < lam <= 1e-3:
        raise ValueError(f"lam must lie in (0, 1e-3], got {lam}")
    x = integrate_state_forward(problem, mu)
    p = integrate_costate_backward(problem, mu, x)
    X, P = x.values[:-1], p.values[1:]
    gap = _relaxed_hamiltonian_path(problem, nu, X, P) - _relaxed_hamiltonian_path(problem, mu, X, P)
    analytic = float(mu.grid.dt * np.sum(gap))

    J = evaluate_cost(problem, mu, x)
    J_lam = cost_of(problem, convex_combine_measures(mu, nu, lam, weight_floor=0.0))
    return DerivativeCheck(analytic=analytic, finite_diff=(J_lam - J) / lam, lam=lam)


# ---------------------------------------------------------------------------
# Armijo step
# ---------------------------------------------------------------------------

def _candidate(
    problem: ProblemDefinition,
    mu: RelaxedMixture,
    nu: RelaxedMixture,
    lam: float,
    mode: SolverMode,
    config: SolverConfig,
) -> RelaxedMixture:
    if mode == "convexified":
        return dirac(convex_combine_controls(mu.controls[0], nu.controls[0], lam))
    cand = convex_combine_measures(mu, nu, lam, config.weight_floor)
    return problem.reduce_mixture(cand) if config.reduce_mixtures else cand


def armijo_step(
    problem: ProblemDefinition,
    mu: RelaxedMixture,
    nu: RelaxedMixture,
    theta: float,
    config: SolverConfig,
    mode: SolverMode = "general",
    J_mu: float | None = None,
) -> ArmijoResult:
    """
    Smallest l in 0..l_max with
        J(candidate(beta^l)) - J(mu) <= alpha * beta^l * eta * theta.
    The candidate is tested after pruning and, in general mode with
    reduce_mixtures set, after problem.reduce_mixture. A trial whose
    integration diverges counts as a failed test.
    """
    if theta >= 0:
        raise ValueError(f"Armijo step needs theta < 0, got {theta}")
    n_evals = 0
    if J_mu is None:
        J_mu = cost_of(problem, mu)
        n_evals += 1

    J_prev: Optional[float] = None
    for l in range(config.l_max + 1):
        lam = config.beta ** l
        cand = _candidate(problem, mu, nu, lam, mode, config)
        n_evals += 1
        try:
            J_cand = cost_of(problem, cand)
        except IntegrationDivergedError as e:
            logger.debug(f"Armijo trial l={l} diverged: {e}")
            J_prev = None
            continue
        if J_cand - J_mu <= config.alpha * lam * config.eta * theta:
            return ArmijoResult(l, lam, J_cand, cand, n_evals, J_prev)
        J_prev = J_cand

    raise ArmijoStallError(config.l_max, theta)


# ---------------------------------------------------------------------------
# Drivers
# ---------------------------------------------------------------------------

def iterate(
    problem: ProblemDefinition,
    mu: RelaxedMixture,
    config: SolverConfig | None = None,
    mode: SolverMode = "general",
    k: int = 0,
) -> tuple[RelaxedMixture, IterationRecord]:
    """One descent iteration. Returns mu unchanged with a converged record when |theta| <= theta_tol."""
    config = config or SolverConfig()
    check_mode(problem, mode, mu)
    started = time.perf_counter()

    x = integrate_state_forward(problem, mu)
    J = evaluate_cost(problem, mu, x)
    p = integrate_costate_backward(problem, mu, x)
    theta, u_star = optimality_theta(problem, mu, x, p)

    if abs(theta) <= config.theta_tol:
        record = IterationRecord(
            k=k, J=J, theta=theta, lam=0.0, l=0, n_cost_evals=1,
            wall_ms=(time.perf_counter() - started) * 1000.0,
            J_next=J, n_atoms=mu.n_atoms, status="converged",
        )
        return mu, record

    step = armijo_step(problem, mu, dirac(u_star), theta, config, mode, J_mu=J)
    record = IterationRecord(
        k=k,
        J=J,
        theta=theta,
        lam=step.lam,
        l=step.l,
        n_cost_evals=step.n_cost_evals + 1,
        wall_ms=(time.perf_counter() - started) * 1000.0,
        J_next=step.J_next,
        J_prev_trial=step.J_prev_trial,
        n_atoms=step.mixture.n_atoms,
        status="step",
    )
    return step.mixture, record


def check_feasible(problem: ProblemDefinition, mu: RelaxedMixture) -> float:
    """Largest hull violation over all atoms; raises unless the mixture is flagged allow_infeasible."""
    violation = max(problem.hull.hull_violation(c.values) for c in mu.controls)
    if violation > HULL_TOL:
        if not mu.allow_infeasible:
            raise InfeasibleControlError(violation, "initial control")
        logger.warning(f"{problem.name}: initial control leaves the hull by {violation:.3g} (allowed)")
    return violation


def run(
    problem: ProblemDefinition,
    mu0: RelaxedMixture,
    config: SolverConfig | None = None,
    mode: SolverMode = "general",
    on_iteration: Callable[[IterationRecord], None] | None = None,
) -> SolverRun:
    """
    Iterate until max_iters, |theta| <= theta_tol, or an Armijo stall.
    A stall ends the run cleanly; integration divergence propagates.
    """
    config = config or SolverConfig()
    check_mode(problem, mode, mu0)
    check_feasible(problem, mu0)

    mu = mu0
    records: list[IterationRecord] = []
    stop: StopReason = "max-iters"
    for k in range(config.max_iters):
        try:
            mu_next, record = iterate(problem, mu, config, mode, k)
        except ArmijoStallError as e:
            logger.warning(f"{problem.name}: stopping at iteration {k}: {e}")
            stop = "armijo-stall"
            break
        records.append(record)
        logger.info(
            f"{problem.name} k={k} J={record.J:.8g} theta={record.theta:.4e} "
            f"lam={record.lam:.4g} l={record.l} atoms={record.n_atoms}"
        )
        if on_iteration is not None:
            on_iteration(record)
        if record.status == "converged":
            stop = "converged"
            break
        mu = mu_next

    return SolverRun(mu, records, stop)


# ---------------------------------------------------------------------------
# Run-log diagnostics
# ---------------------------------------------------------------------------

def verify_run_log(records: Sequence[IterationRecord], config: SolverConfig, rel_tol: float = 1e-12) -> list[str]:
    """
    Re-check a run from its records alone. Returns one message per violated
    property (empty when the log is consistent):
      theta <= 0, J non-increasing, sufficient decrease at the accepted
      step, failure of the test at l - 1, and J_k equal to the previous J_next.
    """
    problems = []
    for i, r in enumerate(records):
        if r.theta > THETA_CLAMP_TOL:
            problems.append(f"k={r.k}: theta={r.theta} > 0")
        if r.status == "converged":
            continue
        if not 0.0 < r.lam <= 1.0 or abs(r.lam - config.beta ** r.l) > 1e-15:
            problems.append(f"k={r.k}: lam={r.lam} inconsistent with l={r.l}")
        if r.J_next > r.J:
            problems.append(f"k={r.k}: cost increased {r.J} -> {r.J_next}")
        if r.J_next - r.J > config.alpha * r.lam * config.eta * r.theta:
            problems.append(f"k={r.k}: sufficient-decrease test fails at accepted step")
        if r.l > 0 and r.J_prev_trial is not None:
            lam_prev = config.beta ** (r.l - 1)
            if r.J_prev_trial - r.J <= config.alpha * lam_prev * config.eta * r.theta:
                problems.append(f"k={r.k}: l={r.l} is not minimal (l-1 passes)")
        if i + 1 < len(records):
            nxt = records[i + 1].J
            if abs(nxt - r.J_next) > rel_tol * max(1.0, abs(r.J_next)):
                problems.append(f"k={r.k}: J_next={r.J_next} but next record starts at {nxt}")
    return problems


def cost_after(records: Sequence[IterationRecord], k: int) -> float:
    """Cost after k iterations (k = 0 is the initial cost)."""
    if not records:
        raise ValueError("empty run log")
    if k <= 0:
        return records[0].J
    return records[min(k, len(records)) - 1].J_next


def cost_reduction_fraction(records: Sequence[IterationRecord], k: int) -> float:
    """Share of the run's total cost reduction achieved within the first k iterations."""
    J0 = cost_after(records, 0)
    total = J0 - cost_after(records, len(records))
    if total <= 0:
        return 1.0
    return (J0 - cost_after(records, k)) / total


def iterations_to_fraction(records: Sequence[IterationRecord], q: float) -> int:
    """Fewest iterations after which the reduction fraction reaches q."""
    for k in range(len(records) + 1):
        if cost_reduction_fraction(records, k) >= q:
            return k
    return len(records)
