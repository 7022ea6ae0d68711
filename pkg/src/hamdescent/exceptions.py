from __future__ import annotations


class HamDescentError(Exception):
    """Base class for every error the library raises on purpose."""


class GridMismatchError(HamDescentError):
    def __init__(self, what: str = "operands"):
        super().__init__(f"{what} are not defined on the same time grid")


class IntegrationDivergedError(HamDescentError):
    """A forward or backward sweep produced a non-finite value."""

    def __init__(self, step: int, which: str = "state"):
        self.step = step
        self.which = which
        super().__init__(f"{which} integration diverged at step {step}")


class ArmijoStallError(HamDescentError):
    """No Armijo exponent up to l_max satisfied the sufficient-decrease test."""

    def __init__(self, l_max: int, theta: float):
        self.l_max = l_max
        self.theta = theta
        super().__init__(f"Armijo test failed for every l <= {l_max} (theta={theta:.6g})")


class InfeasibleControlError(HamDescentError):
    def __init__(self, max_violation: float, where: str = "control"):
        self.max_violation = max_violation
        super().__init__(f"{where} leaves the control hull by {max_violation:.3g}")


class ProblemLookupError(HamDescentError):
    def __init__(self, name: str, known: list[str]):
        self.name = name
        super().__init__(f"unknown problem '{name}' (known: {', '.join(known)})")
