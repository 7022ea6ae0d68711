"""
Command Line Tests
====================
solve / check / project end to end through main(), config files, and
the exit-code contract (0 success, 1 runtime failure, 2 usage).
"""

import csv

import pytest

from hamdescent import cli
from hamdescent.cli import build_parser, build_run_config, load_config_file, main, UsageError
from hamdescent.controls import OrdinaryControl, dirac
from hamdescent.csvio import read_iterations, read_mixture, write_mixture
from hamdescent.grid import TimeGrid
from hamdescent.schemas import SolverConfig
from hamdescent.solver import verify_run_log


def _summary(out: str) -> str:
    return out.splitlines()[0]


# --- solve ---

def test_solve_writes_artifacts(tmp_path, capsys):
    code = main(["solve", "double-tank", "--dt", "0.1", "--iters", "3", "--pwm-cycle", "0.5", "--out", str(tmp_path)])
    assert code == 0
    summary = _summary(capsys.readouterr().out)
    assert summary.startswith("problem=double-tank, dt=0.1, iters=3, J0=50.5")
    assert "J_projected=" in summary and "J_projected=-" not in summary

    for name in ("iterations.csv", "final_control.csv", "trajectory.csv", "final_state.csv",
                 "projected_control.csv", "projected_trajectory.csv"):
        assert (tmp_path / name).is_file(), name

    records = read_iterations(tmp_path / "iterations.csv")
    assert len(records) == 3
    assert verify_run_log(records, SolverConfig()) == []
    with open(tmp_path / "final_state.csv", newline="") as f:
        labels = [row[0] for row in csv.reader(f)]
    assert labels == ["trajectory", "relaxed", "projected"]
    assert read_mixture(tmp_path / "final_control.csv").n_atoms == 1


def test_solve_zero_iterations(tmp_path, capsys):
    assert main(["solve", "hybrid-lqr", "--dt", "0.1", "--iters", "0", "--out", str(tmp_path)]) == 0
    summary = _summary(capsys.readouterr().out)
    assert "iters=0, J0=3, J_final=3," in summary
    assert "J_projected=-" in summary


def test_solve_mobile_network_with_params(tmp_path, capsys):
    args = ["solve", "mobile-network", "--dt", "0.1", "--iters", "2", "--param", "n=4", "--out", str(tmp_path)]
    assert main(args) == 0
    assert "problem=mobile-network" in capsys.readouterr().out
    with open(tmp_path / "final_state.csv", newline="") as f:
        assert next(csv.reader(f)) == ["trajectory", "x1", "x2", "x3", "x4"]


@pytest.mark.parametrize("argv", [
    ["solve", "triple-tank"],
    ["solve", "double-tank", "--alpha", "1.5"],
    ["solve", "double-tank", "--pwm-cycle", "0.5", "--pwm-cycle-steps", "50"],
    ["solve", "hybrid-lqr", "--mode", "convexified", "--iters", "1"],
    ["solve", "double-tank", "--dt", "0.3", "--iters", "1"],
    ["solve", "double-tank", "--param", "d=3"],
    ["solve"],
    ["table", "7"],
    ["frobnicate"],
])
def test_usage_errors_exit_2(argv, tmp_path, capsys):
    if argv[0] == "solve":
        argv = argv + ["--out", str(tmp_path)]
    assert main(argv) == 2


# --- config files ---

def test_config_file_and_flag_precedence(tmp_path):
    cfg_file = tmp_path / "run.env"
    cfg_file.write_text("problem=mobile-network\ndt=0.1\niters=7\nalpha=0.2\nparam.n=4\n")
    fields = load_config_file(cfg_file)
    assert fields["max_iters"] == "7"
    assert fields["params"] == {"n": "4"}

    args = build_parser().parse_args(["solve", "--config", str(cfg_file), "--iters", "2", "--param", "c=5"])
    cfg = build_run_config(args)
    assert cfg.problem == "mobile-network"
    assert cfg.max_iters == 2
    assert cfg.alpha == 0.2
    assert cfg.dt == 0.1
    assert cfg.params == {"n": "4", "c": "5"}


def test_config_file_pwm_spelling_overridden_by_flag(tmp_path):
    cfg_file = tmp_path / "run.env"
    cfg_file.write_text("pwm_cycle=0.5\n")
    args = build_parser().parse_args(["solve", "double-tank", "--config", str(cfg_file), "--pwm-cycle-steps", "10"])
    cfg = build_run_config(args)
    assert cfg.pwm_cycle is None
    assert cfg.pwm_config().cycle_steps == 10


def test_both_pwm_flags_rejected_over_config_file(tmp_path):
    cfg_file = tmp_path / "run.env"
    cfg_file.write_text("pwm_cycle=0.5\n")
    args = build_parser().parse_args(
        ["solve", "double-tank", "--config", str(cfg_file), "--pwm-cycle", "0.5", "--pwm-cycle-steps", "50"]
    )
    with pytest.raises(ValueError):
        build_run_config(args)
    argv = ["solve", "double-tank", "--pwm-cycle", "0.5", "--pwm-cycle-steps", "50", "--out", str(tmp_path)]
    assert main(argv) == 2


def test_config_file_errors(tmp_path):
    with pytest.raises(UsageError):
        load_config_file(tmp_path / "missing.env")
    bad = tmp_path / "bad.env"
    bad.write_text("problem=double-tank\nfoo=1\n")
    assert main(["solve", "--config", str(bad), "--out", str(tmp_path)]) == 2


def test_solve_from_config_file(tmp_path, capsys):
    cfg_file = tmp_path / "run.env"
    cfg_file.write_text(f"problem=double-tank\ndt=0.1\niters=1\nout={tmp_path / 'out'}\n")
    assert main(["solve", "--config", str(cfg_file)]) == 0
    assert "iters=1" in capsys.readouterr().out
    assert (tmp_path / "out" / "iterations.csv").is_file()


# --- check ---

def test_check_mobile_network(capsys):
    assert main(["check", "mobile-network", "--trials", "20"]) == 0
    out = capsys.readouterr().out
    assert "closed_form_costate" in out
    assert "directional_derivative" in out
    assert "ALL CHECKS PASSED" in out


def test_check_unknown_problem():
    assert main(["check", "triple-tank"]) == 2


# --- project ---

def test_project_dumped_mixture(tmp_path, capsys):
    grid = TimeGrid(10.0, 0.1)
    mixture = tmp_path / "final_control.csv"
    write_mixture(mixture, dirac(OrdinaryControl.constant(grid, 1.5)))
    out = tmp_path / "proj"
    assert main(["project", str(mixture), "--problem", "double-tank", "--pwm-cycle", "0.5", "--out", str(out)]) == 0
    assert "problem=double-tank" in capsys.readouterr().out
    u = read_mixture(out / "projected_control.csv").controls[0].values[:5, 0]
    assert u.tolist()[:2] == [2.0, 2.0]
    assert u.tolist()[-2:] == [1.0, 1.0]


def test_project_needs_cycle(tmp_path):
    mixture = tmp_path / "final_control.csv"
    write_mixture(mixture, dirac(OrdinaryControl.constant(TimeGrid(10.0, 0.1), 1.5)))
    assert main(["project", str(mixture), "--problem", "double-tank", "--out", str(tmp_path)]) == 2


def test_runtime_value_error_exits_1(tmp_path, capsys, monkeypatch):
    def failing_run(cfg):
        raise ValueError("singular matrix")

    monkeypatch.setattr(cli, "execute_run", failing_run)
    assert main(["solve", "double-tank", "--iters", "1", "--out", str(tmp_path)]) == 1
    assert "error: ValueError: singular matrix" in capsys.readouterr().err


def test_project_infeasible_mixture_exits_1(tmp_path, capsys):
    mixture = tmp_path / "final_control.csv"
    write_mixture(mixture, dirac(OrdinaryControl.constant(TimeGrid(10.0, 0.1), 2.5)))
    code = main(["project", str(mixture), "--problem", "double-tank", "--pwm-cycle-steps", "5", "--out", str(tmp_path)])
    assert code == 1
    assert "error: InfeasibleControlError" in capsys.readouterr().err
