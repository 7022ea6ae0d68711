"""
Experiment Runs and Reproduction Tables
=========================================
execute_run() takes one RunConfig end to end (solve, optional PWM,
final states); run_table() repeats it for every row of a reproduction
table and sets the measurements next to the reference values.

Tables:
  1  double-tank, convexified, PWM cycle 0.5 s
  2  hybrid-lqr, general, PWM cycle 12 steps
  3  mobile-network, convexified, no projection
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Optional

import numpy as np

from .benchmarks import get_problem
from .controls import OrdinaryControl, dirac
from .csvio import write_rows
from .grid import StateTrajectory, TimeGrid
from .integrate import cost_of, evaluate_cost, integrate_state_forward
from .problem import ProblemDefinition
from .pwm import project_pwm, pwm_fidelity_report
from .schemas import PwmFidelityReport, RunConfig, SolverMode, TableRowResult
from .solver import SolverRun, check_mode, default_mode, iterations_to_fraction, run

logger = logging.getLogger(__name__)


class RunOutcome(NamedTuple):
    problem: ProblemDefinition
    mode: SolverMode
    result: SolverRun
    J0: float
    J_final: float
    x: StateTrajectory
    wall_s: float
    u_proj: Optional[OrdinaryControl] = None
    pwm_report: Optional[PwmFidelityReport] = None
    x_proj: Optional[StateTrajectory] = None
    wall_pwm_s: Optional[float] = None

    @property
    def J_projected(self) -> Optional[float]:
        return None if self.pwm_report is None else self.pwm_report.J_projected


def execute_run(cfg: RunConfig) -> RunOutcome:
    """Solve from the problem's initial control, then project if a PWM cycle is configured."""
    problem = get_problem(cfg.problem, cfg.params)
    grid = TimeGrid(problem.t_f, cfg.dt)
    mode = cfg.mode or default_mode(problem)
    check_mode(problem, mode)
    pwm = cfg.pwm_config()
    mu0 = dirac(problem.initial_control(grid))

    started = time.perf_counter()
    result = run(problem, mu0, cfg.solver_config(), mode)
    wall_s = time.perf_counter() - started

    J0 = result.records[0].J if result.records else cost_of(problem, mu0)
    x = integrate_state_forward(problem, result.mixture)
    J_final = evaluate_cost(problem, result.mixture, x)
    outcome = RunOutcome(problem, mode, result, J0, J_final, x, wall_s)
    if pwm is None:
        return outcome

    u_proj = project_pwm(problem, result.mixture, pwm)
    wall_pwm_s = time.perf_counter() - started
    report = pwm_fidelity_report(problem, result.mixture, u_proj, pwm)
    x_proj = integrate_state_forward(problem, dirac(u_proj))
    return outcome._replace(u_proj=u_proj, pwm_report=report, x_proj=x_proj, wall_pwm_s=wall_pwm_s)


# ---------------------------------------------------------------------------
# Table definitions
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TableRow:
    table: int
    problem: str
    dt: float
    iters: int
    mode: SolverMode
    ref_J0: float
    ref_J: float
    ref_cpu_s: float
    ref_J_fin: Optional[float] = None
    ref_cpu_pwm_s: Optional[float] = None
    pwm_cycle: Optional[float] = None
    pwm_cycle_steps: Optional[int] = None


TABLES: dict[int, list[TableRow]] = {
    1: [
        TableRow(1, "double-tank", 0.01, 100, "convexified", 50.5457, 4.7440, 2.6700, 4.7446, 2.6825, pwm_cycle=0.5),
        TableRow(1, "double-tank", 0.05, 50, "convexified", 50.5282, 4.8078, 0.2939, 4.8139, 0.3043, pwm_cycle=0.5),
        TableRow(1, "double-tank", 0.1, 50, "convexified", 50.5069, 4.8816, 0.1566, 4.8915, 0.1655, pwm_cycle=0.5),
    ],
    2: [
        TableRow(2, "hybrid-lqr", 0.01, 20, "general", 3.00, 2.768e-3, 0.761, 2.956e-3, 0.803, pwm_cycle_steps=12),
    ],
    3: [
        TableRow(3, "mobile-network", 0.01, 200, "convexified", 81883.4, 1253.4, 11.3647),
        TableRow(3, "mobile-network", 0.01, 100, "convexified", 81883.4, 1256.7, 5.2379),
        TableRow(3, "mobile-network", 0.01, 20, "convexified", 81883.4, 1455.5, 0.8653),
        TableRow(3, "mobile-network", 0.1, 100, "convexified", 81883.4, 1260.4, 0.5645),
    ],
}

TABLE_TITLES = {
    1: "Double tank (convexified, PWM 0.5 s)",
    2: "Hybrid LQR (general, PWM 12 dt)",
    3: "Mobile network (convexified)",
}


def run_config_for(row: TableRow, **solver_overrides) -> RunConfig:
    return RunConfig(
        problem=row.problem,
        dt=row.dt,
        max_iters=row.iters,
        mode=row.mode,
        pwm_cycle=row.pwm_cycle,
        pwm_cycle_steps=row.pwm_cycle_steps,
        **solver_overrides,
    )


def run_row(row: TableRow, solver_overrides: Optional[dict] = None) -> TableRowResult:
    outcome = execute_run(run_config_for(row, **(solver_overrides or {})))
    records = outcome.result.records
    return TableRowResult(
        table=row.table,
        problem=row.problem,
        dt=row.dt,
        iters=row.iters,
        mode=outcome.mode,
        J0=outcome.J0,
        J_final=outcome.J_final,
        J_projected=outcome.J_projected,
        wall_s=outcome.wall_s,
        wall_pwm_s=outcome.wall_pwm_s,
        n_iterations=len(records),
        stop_reason=outcome.result.stop_reason,
        iters_to_95=iterations_to_fraction(records, 0.95) if records else 0,
        iters_to_98=iterations_to_fraction(records, 0.98) if records else 0,
        x_final=[float(v) for v in outcome.x.final],
        x_projected=None if outcome.x_proj is None else [float(v) for v in outcome.x_proj.final],
        ref_J0=row.ref_J0,
        ref_J=row.ref_J,
        ref_J_fin=row.ref_J_fin,
        ref_cpu_s=row.ref_cpu_s,
        ref_cpu_pwm_s=row.ref_cpu_pwm_s,
    )


def _run_row_job(args: tuple[TableRow, Optional[dict]]) -> TableRowResult:
    row, overrides = args
    return run_row(row, overrides)


def run_table(
    n: int,
    jobs: int = 1,
    out_dir: Path | None = None,
    solver_overrides: Optional[dict] = None,
) -> list[TableRowResult]:
    """Run every row of table n; rows are independent and may run in a process pool."""
    if n not in TABLES:
        raise ValueError(f"unknown table {n} (known: {sorted(TABLES)})")
    rows = TABLES[n]
    work = [(row, solver_overrides) for row in rows]
    if jobs > 1 and len(rows) > 1:
        with ProcessPoolExecutor(max_workers=min(jobs, len(rows))) as pool:
            results = list(pool.map(_run_row_job, work))
    else:
        results = [_run_row_job(w) for w in work]

    if out_dir is not None:
        path = Path(out_dir) / f"table{n}.csv"
        write_rows(path, [r.as_row() for r in results])
        logger.info(f"table {n} written to {path}")
    return results


def _opt(v: Optional[float], spec: str) -> str:
    return "-" if v is None else format(v, spec)


def format_table(n: int, results: list[TableRowResult]) -> str:
    """Box-drawn text table with measured values beside the reference ones."""
    cost_fmt = ".4e" if n == 2 else ".4f"
    width = 96
    lines = [
        "╔" + "═" * (width - 2) + "╗",
        "║" + f"Table {n}: {TABLE_TITLES[n]}".center(width - 2) + "║",
        "╚" + "═" * (width - 2) + "╝",
        f"  {'dt':>6} {'iters':>5} │ {'J0':>12} {'J0 ref':>12} │ {'J_k':>11} {'J_k ref':>11} │ "
        f"{'J_fin':>11} {'J_fin ref':>11} │ {'wall s':>7} {'ref s':>7}",
        "  " + "─" * (width - 4),
    ]
    for r in results:
        lines.append(
            f"  {r.dt:>6g} {r.iters:>5d} │ {r.J0:>12.4f} {r.ref_J0:>12.4f} │ "
            f"{r.J_final:>11{cost_fmt}} {r.ref_J:>11{cost_fmt}} │ "
            f"{_opt(r.J_projected, '>11' + cost_fmt):>11} {_opt(r.ref_J_fin, '>11' + cost_fmt):>11} │ "
            f"{r.wall_s:>7.3f} {r.ref_cpu_s:>7.3f}"
        )
    lines.append("  " + "─" * (width - 4))
    for r in results:
        extra = f"  dt={r.dt:g} iters={r.iters}: stop={r.stop_reason}, 95% of reduction by k={r.iters_to_95}, 98% by k={r.iters_to_98}"
        extra += f", x(t_f)=({', '.join(format(v, '.4f') for v in r.x_final)})"
        if r.x_projected is not None:
            extra += f", projected x(t_f)=({', '.join(format(v, '.4f') for v in r.x_projected)})"
        lines.append(extra)
    return "\n".join(lines)


def final_state_rows(outcome: RunOutcome) -> dict[str, np.ndarray]:
    states = {"relaxed": outcome.x.final}
    if outcome.x_proj is not None:
        states["projected"] = outcome.x_proj.final
    return states
