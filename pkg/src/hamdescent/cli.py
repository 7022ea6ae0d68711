"""
hamdescent Command Line
=========================
  hamdescent solve  double-tank --dt 0.01 --iters 100 --pwm-cycle 0.5
  hamdescent solve  hybrid-lqr --dt 0.01 --iters 20 --mode general --pwm-cycle-steps 12
  hamdescent table  3 --jobs 4 --out runs/
  hamdescent check  mobile-network
  hamdescent project runs/final_control.csv --problem double-tank --pwm-cycle 0.5

Exit codes: 0 success, 1 runtime failure (or failed check), 2 usage error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from contextlib import contextmanager
from pathlib import Path
from typing import Any, Iterator, Optional, Sequence

import numpy as np
from dotenv import dotenv_values, load_dotenv
from pydantic import ValidationError

from . import settings
from .benchmarks import MobileNetworkProblem, get_problem, mobile_network_costate
from .controls import dirac
from .csvio import (
    read_mixture,
    write_control,
    write_final_state,
    write_iterations,
    write_mixture,
    write_trajectory,
)
from .exceptions import HamDescentError, ProblemLookupError
from .grid import TimeGrid
from .integrate import integrate_costate_backward, integrate_state_forward
from .problem import check_problem_consistency
from .pwm import project_pwm, pwm_fidelity_report
from .schemas import PwmConfig, RunConfig
from .solver import check_mode, default_mode, directional_derivative_check, optimality_theta
from .tables import TABLES, execute_run, final_state_rows, format_table, run_table

logger = logging.getLogger("hamdescent")

# flag name -> RunConfig field
_FLAG_FIELDS = {
    "dt": "dt",
    "iters": "max_iters",
    "alpha": "alpha",
    "beta": "beta",
    "eta": "eta",
    "l_max": "l_max",
    "theta_tol": "theta_tol",
    "weight_floor": "weight_floor",
    "mode": "mode",
    "pwm_cycle": "pwm_cycle",
    "pwm_cycle_steps": "pwm_cycle_steps",
    "out": "out",
}
_FILE_ALIASES = {"iters": "max_iters", "max_iterations": "max_iters"}
PARAM_PREFIX = "param."


class UsageError(Exception):
    pass


@contextmanager
def _invalid_input() -> Iterator[None]:
    """Re-raise a ValueError from validating user input as a UsageError."""
    try:
        yield
    except ValueError as e:
        raise UsageError(str(e)) from e


def configure_logging(level: Optional[str], verbose: bool) -> None:
    name = level or os.getenv(settings.LOG_LEVEL_ENV) or ("INFO" if verbose else "WARNING")
    numeric = logging.getLevelName(name.upper())
    if not isinstance(numeric, int):
        raise UsageError(f"unknown log level '{name}'")
    logging.basicConfig(level=numeric, format=settings.LOG_FORMAT, force=True)


def _parse_param(items: Sequence[str]) -> dict[str, str]:
    params = {}
    for item in items or []:
        key, sep, value = item.partition("=")
        if not sep or not key.strip():
            raise UsageError(f"--param expects KEY=VALUE, got '{item}'")
        params[key.strip()] = value.strip()
    return params


def load_config_file(path: str | os.PathLike) -> dict[str, Any]:
    """Read a `key = value` file into RunConfig fields; `param.<name>` keys become problem overrides."""
    if not Path(path).is_file():
        raise UsageError(f"config file not found: {path}")
    fields: dict[str, Any] = {}
    params: dict[str, str] = {}
    for key, value in dotenv_values(path).items():
        if value is None:
            continue
        norm = key.strip().lower().replace("-", "_")
        if norm.startswith(PARAM_PREFIX):
            params[norm[len(PARAM_PREFIX):]] = value
        else:
            fields[_FILE_ALIASES.get(norm, norm)] = value
    if params:
        fields["params"] = params
    return fields


def build_run_config(args: argparse.Namespace) -> RunConfig:
    """File values first, explicit flags on top."""
    fields: dict[str, Any] = load_config_file(args.config) if args.config else {}
    # a flag for one PWM spelling overrides the other spelling from the file
    if args.pwm_cycle is not None:
        fields.pop("pwm_cycle_steps", None)
    if args.pwm_cycle_steps is not None:
        fields.pop("pwm_cycle", None)
    for flag, field in _FLAG_FIELDS.items():
        value = getattr(args, flag, None)
        if value is not None:
            fields[field] = value
    if args.problem:
        fields["problem"] = args.problem
    params = dict(fields.get("params", {}))
    params.update(_parse_param(args.param))
    fields["params"] = params
    return RunConfig(**fields)


def resolve_run_config(args: argparse.Namespace) -> RunConfig:
    """Build the RunConfig and check everything execute_run derives from it before any work starts."""
    with _invalid_input():
        cfg = build_run_config(args)
        problem = get_problem(cfg.problem, cfg.params)
        TimeGrid(problem.t_f, cfg.dt)
        check_mode(problem, cfg.mode or default_mode(problem))
        cfg.pwm_config()
    return cfg


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def _fmt_opt(v: Optional[float]) -> str:
    return "-" if v is None else f"{v:.10g}"


def cmd_solve(args: argparse.Namespace) -> int:
    cfg = resolve_run_config(args)
    outcome = execute_run(cfg)
    result = outcome.result
    out = Path(cfg.out)

    write_iterations(out / "iterations.csv", result.records)
    write_mixture(out / "final_control.csv", result.mixture)
    p = integrate_costate_backward(outcome.problem, result.mixture, outcome.x)
    write_trajectory(out / "trajectory.csv", outcome.x, p)
    write_final_state(out / "final_state.csv", final_state_rows(outcome))
    if outcome.u_proj is not None:
        write_control(out / "projected_control.csv", outcome.u_proj)
        write_trajectory(out / "projected_trajectory.csv", outcome.x_proj)

    print(
        f"problem={outcome.problem.name}, dt={cfg.dt:g}, iters={len(result.records)}, "
        f"J0={outcome.J0:.10g}, J_final={outcome.J_final:.10g}, "
        f"J_projected={_fmt_opt(outcome.J_projected)}, wall_s={outcome.wall_s:.3f}"
    )
    print(f"  stop={result.stop_reason}, mode={outcome.mode}, atoms={result.mixture.n_atoms}")
    print(f"  x(t_f)=({', '.join(f'{v:.6g}' for v in outcome.x.final)})")
    if outcome.x_proj is not None:
        report = outcome.pwm_report
        print(f"  projected x(t_f)=({', '.join(f'{v:.6g}' for v in outcome.x_proj.final)})")
        print(
            f"  pwm cycles={report.n_cycles} x {report.cycle_steps} steps, "
            f"max cycle deviation={_fmt_opt(report.max_cycle_deviation)}, dJ={report.delta_J:.4g}"
        )
    print(f"  artifacts in {out}/")
    return 0


def cmd_table(args: argparse.Namespace) -> int:
    overrides = {
        field: getattr(args, flag)
        for flag, field in (("alpha", "alpha"), ("beta", "beta"), ("eta", "eta"), ("l_max", "l_max"))
        if getattr(args, flag, None) is not None
    }
    # validated the same way as a solve
    with _invalid_input():
        RunConfig(problem=TABLES[args.n][0].problem, **overrides)
    results = run_table(args.n, jobs=args.jobs, out_dir=args.out, solver_overrides=overrides)
    print(format_table(args.n, results))
    if args.out is not None:
        print(f"\n  Results saved: {Path(args.out) / f'table{args.n}.csv'}")
    return 0


def _mark(ok: bool) -> str:
    return "✅" if ok else "❌"


def cmd_check(args: argparse.Namespace) -> int:
    with _invalid_input():
        problem = get_problem(args.problem, _parse_param(args.param))
        grid = TimeGrid(problem.t_f, args.dt)
    report = check_problem_consistency(problem, trials=args.trials, seed=args.seed)
    print(f"Consistency checks: {problem.name} ({report.trials} trials, seed {report.seed})")
    for c in report.checks:
        detail = f" ({c.detail})" if c.detail else ""
        print(f"  {_mark(c.passed)} {c.name}: max error {c.max_error:.3e} (tol {c.tolerance:.0e}){detail}")
    all_ok = report.passed

    mu = dirac(problem.initial_control(grid))
    x = integrate_state_forward(problem, mu)
    p = integrate_costate_backward(problem, mu, x)
    _, u_star = optimality_theta(problem, mu, x, p)
    deriv = directional_derivative_check(problem, mu, dirac(u_star), args.lam)
    ok = deriv.rel_error <= settings.DERIVATIVE_REL_TOL
    all_ok &= ok
    print(
        f"  {_mark(ok)} directional_derivative: analytic {deriv.analytic:.6g}, "
        f"finite difference {deriv.finite_diff:.6g}, rel error {deriv.rel_error:.3e} (lam {deriv.lam:g})"
    )

    if isinstance(problem, MobileNetworkProblem):
        closed = mobile_network_costate(problem, x)
        gap = float(np.max(np.abs(closed.values - p.values)))
        scale = max(1.0, float(np.max(np.abs(p.values))))
        ok = gap <= 1e-12 * scale
        all_ok &= ok
        print(f"  {_mark(ok)} closed_form_costate: max gap {gap:.3e} (scale {scale:.3g})")

    print(f"\n  {'ALL CHECKS PASSED' if all_ok else 'SOME CHECKS FAILED'}")
    return 0 if all_ok else 1


def cmd_project(args: argparse.Namespace) -> int:
    with _invalid_input():
        problem = get_problem(args.problem, _parse_param(args.param))
        mu = read_mixture(args.mixture, t_f=problem.t_f)
        if args.pwm_cycle_steps is not None:
            cfg = PwmConfig(cycle_steps=args.pwm_cycle_steps)
        elif args.pwm_cycle is not None:
            cfg = PwmConfig.from_seconds(args.pwm_cycle, mu.grid.dt)
        else:
            raise UsageError("project needs --pwm-cycle or --pwm-cycle-steps")

    u_proj = project_pwm(problem, mu, cfg)
    report = pwm_fidelity_report(problem, mu, u_proj, cfg)
    out = Path(args.out) / "projected_control.csv"
    write_control(out, u_proj)
    print(
        f"problem={problem.name}, dt={mu.grid.dt:g}, atoms={mu.n_atoms}, J_relaxed={report.J_relaxed:.10g}, "
        f"J_projected={report.J_projected:.10g}, dJ={report.delta_J:.4g}, "
        f"max_cycle_deviation={_fmt_opt(report.max_cycle_deviation)}"
    )
    print(f"  written {out}")
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _add_solver_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--alpha", type=float, help=f"Armijo sufficient-decrease fraction (default {settings.ALPHA})")
    p.add_argument("--beta", type=float, help=f"Armijo contraction factor (default {settings.BETA})")
    p.add_argument("--eta", type=float, help=f"eta-minimizer fraction (default {settings.ETA})")
    p.add_argument("--l-max", dest="l_max", type=int, help=f"largest Armijo exponent (default {settings.L_MAX})")


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--log-level", default=None, help=f"logging level (env {settings.LOG_LEVEL_ENV})")
    p.add_argument("-v", "--verbose", action="store_true", help="log every iteration")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hamdescent", description="Relaxed-control Hamiltonian descent")
    sub = parser.add_subparsers(dest="command", required=True)

    ps = sub.add_parser("solve", help="Run the descent on one benchmark and dump CSVs")
    ps.add_argument("problem", nargs="?", default=None, help="double-tank | hybrid-lqr | mobile-network")
    ps.add_argument("--dt", type=float)
    ps.add_argument("--iters", type=int)
    _add_solver_flags(ps)
    ps.add_argument("--theta-tol", dest="theta_tol", type=float)
    ps.add_argument("--weight-floor", dest="weight_floor", type=float)
    ps.add_argument("--mode", choices=["general", "convexified"])
    ps.add_argument("--pwm-cycle", dest="pwm_cycle", type=float, help="PWM cycle in seconds")
    ps.add_argument("--pwm-cycle-steps", dest="pwm_cycle_steps", type=int, help="PWM cycle in grid steps")
    ps.add_argument("--out", type=Path, help=f"output directory (default {settings.DEFAULT_OUT_DIR})")
    ps.add_argument("--config", help="key = value file; flags override it")
    ps.add_argument("--param", action="append", default=[], metavar="KEY=VALUE", help="problem parameter override")
    _add_common(ps)
    ps.set_defaults(func=cmd_solve)

    pt = sub.add_parser("table", help="Reproduce a results table")
    pt.add_argument("n", type=int, choices=sorted(TABLES))
    pt.add_argument("--jobs", type=int, default=1, help="rows to run in parallel")
    pt.add_argument("--out", type=Path, default=None, help="directory for table<n>.csv")
    _add_solver_flags(pt)
    _add_common(pt)
    pt.set_defaults(func=cmd_table)

    pc = sub.add_parser("check", help="Derivative, minimizer and costate diagnostics")
    pc.add_argument("problem")
    pc.add_argument("--trials", type=int, default=settings.CHECK_TRIALS)
    pc.add_argument("--seed", type=int, default=settings.CHECK_SEED)
    pc.add_argument("--dt", type=float, default=0.01)
    pc.add_argument("--lam", type=float, default=settings.DERIVATIVE_LAMBDA)
    pc.add_argument("--param", action="append", default=[], metavar="KEY=VALUE")
    _add_common(pc)
    pc.set_defaults(func=cmd_check)

    pp = sub.add_parser("project", help="PWM-project a dumped mixture")
    pp.add_argument("mixture", help="final_control.csv from a solve run")
    pp.add_argument("--problem", required=True)
    pp.add_argument("--pwm-cycle", dest="pwm_cycle", type=float)
    pp.add_argument("--pwm-cycle-steps", dest="pwm_cycle_steps", type=int)
    pp.add_argument("--out", type=Path, default=Path(settings.DEFAULT_OUT_DIR))
    pp.add_argument("--param", action="append", default=[], metavar="KEY=VALUE")
    _add_common(pp)
    pp.set_defaults(func=cmd_project)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    load_dotenv()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    try:
        configure_logging(args.log_level, args.verbose)
        if args.command == "solve" and not (args.problem or args.config):
            raise UsageError("solve needs a problem name or --config")
        return args.func(args)
    except (UsageError, ValidationError, ProblemLookupError) as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 2
    except (HamDescentError, ValueError) as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
