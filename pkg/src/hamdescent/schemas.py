from __future__ import annotations

from pathlib import Path
from typing import Dict, List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from . import settings

SolverMode = Literal["general", "convexified"]
RecordStatus = Literal["step", "converged"]
StopReason = Literal["max-iters", "converged", "armijo-stall"]


class SolverConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    alpha: float = Field(default=settings.ALPHA, gt=0.0, lt=1.0)
    beta: float = Field(default=settings.BETA, gt=0.0, lt=1.0)
    eta: float = Field(default=settings.ETA, gt=0.0, lt=1.0)
    max_iters: int = Field(default=settings.MAX_ITERS, ge=0)
    l_max: int = Field(default=settings.L_MAX, ge=0)
    theta_tol: float = Field(default=settings.THETA_TOL, ge=0.0)
    weight_floor: float = Field(default=settings.WEIGHT_FLOOR, ge=0.0, le=settings.WEIGHT_FLOOR_MAX)
    reduce_mixtures: bool = True  # general mode: pass Armijo candidates through problem.reduce_mixture


class PwmConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    cycle_steps: int = Field(ge=1)  # cycle duration = cycle_steps * dt

    @classmethod
    def from_seconds(cls, cycle_s: float, dt: float) -> "PwmConfig":
        steps = round(cycle_s / dt)
        if steps < 1 or abs(steps * dt - cycle_s) > settings.GRID_REL_TOL * max(cycle_s, dt):
            raise ValueError(f"PWM cycle {cycle_s}s is not a positive multiple of dt={dt}")
        return cls(cycle_steps=steps)


class IterationRecord(BaseModel):
    """One solver iteration: costs before/after, theta, and the Armijo outcome."""

    k: int
    J: float
    theta: float
    lam: float                            # accepted step beta**l (0 on a converged exit)
    l: int
    n_cost_evals: int
    wall_ms: float
    J_next: float
    J_prev_trial: Optional[float] = None  # cost at exponent l - 1 (rejected), when l > 0
    n_atoms: int = 1
    status: RecordStatus = "step"


class ConsistencyCheck(BaseModel):
    name: str
    passed: bool
    max_error: float
    tolerance: float
    detail: str = ""


class ConsistencyReport(BaseModel):
    problem: str
    trials: int
    seed: int
    checks: List[ConsistencyCheck] = []

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


class DerivativeCheck(BaseModel):
    analytic: float
    finite_diff: float
    lam: float

    @property
    def rel_error(self) -> float:
        scale = max(abs(self.analytic), abs(self.finite_diff), 1e-300)
        return abs(self.analytic - self.finite_diff) / scale


class PwmFidelityReport(BaseModel):
    n_cycles: int
    cycle_steps: int
    max_cycle_deviation: Optional[float] = None  # None when the mean control is not meaningful
    J_relaxed: float
    J_projected: float

    @property
    def delta_J(self) -> float:
        return self.J_projected - self.J_relaxed


class RunConfig(BaseModel):
    """Everything needed to reproduce one `solve` invocation."""

    model_config = ConfigDict(extra="forbid")

    problem: str
    dt: float = Field(default=0.01, gt=0.0)
    max_iters: int = Field(default=settings.MAX_ITERS, ge=0)
    alpha: float = Field(default=settings.ALPHA, gt=0.0, lt=1.0)
    beta: float = Field(default=settings.BETA, gt=0.0, lt=1.0)
    eta: float = Field(default=settings.ETA, gt=0.0, lt=1.0)
    l_max: int = Field(default=settings.L_MAX, ge=0)
    theta_tol: float = Field(default=settings.THETA_TOL, ge=0.0)
    weight_floor: float = Field(default=settings.WEIGHT_FLOOR, ge=0.0, le=settings.WEIGHT_FLOOR_MAX)
    mode: Optional[SolverMode] = None  # None: convexified when the problem allows it
    pwm_cycle: Optional[float] = Field(default=None, gt=0.0)
    pwm_cycle_steps: Optional[int] = Field(default=None, ge=1)
    out: Path = Path(settings.DEFAULT_OUT_DIR)
    params: Dict[str, str] = {}

    @field_validator("problem")
    @classmethod
    def _strip(cls, v: str) -> str:
        return v.strip()

    @model_validator(mode="after")
    def _one_cycle_spec(self) -> "RunConfig":
        if self.pwm_cycle is not None and self.pwm_cycle_steps is not None:
            raise ValueError("give either pwm_cycle (seconds) or pwm_cycle_steps, not both")
        return self

    def solver_config(self) -> SolverConfig:
        return SolverConfig(
            alpha=self.alpha,
            beta=self.beta,
            eta=self.eta,
            max_iters=self.max_iters,
            l_max=self.l_max,
            theta_tol=self.theta_tol,
            weight_floor=self.weight_floor,
        )

    def pwm_config(self) -> Optional[PwmConfig]:
        if self.pwm_cycle_steps is not None:
            return PwmConfig(cycle_steps=self.pwm_cycle_steps)
        if self.pwm_cycle is not None:
            return PwmConfig.from_seconds(self.pwm_cycle, self.dt)
        return None


class TableRowResult(BaseModel):
    """Measured outcome of one reproduction-table row next to its reference values."""

    table: int
    problem: str
    dt: float
    iters: int
    mode: SolverMode
    J0: float
    J_final: float
    J_projected: Optional[float] = None
    wall_s: float
    wall_pwm_s: Optional[float] = None
    n_iterations: int
    stop_reason: StopReason
    iters_to_95: int
    iters_to_98: int
    x_final: List[float]
    x_projected: Optional[List[float]] = None
    ref_J0: float
    ref_J: float
    ref_J_fin: Optional[float] = None
    ref_cpu_s: float
    ref_cpu_pwm_s: Optional[float] = None

    def as_row(self) -> Dict[str, object]:
        row = self.model_dump(exclude={"x_final", "x_projected"})
        row["x_final"] = " ".join(format(v, ".6g") for v in self.x_final)
        row["x_projected"] = "" if self.x_projected is None else " ".join(format(v, ".6g") for v in self.x_projected)
        return {k: ("" if v is None else v) for k, v in row.items()}
