import numpy as np
import pytest

from hamdescent.benchmarks import DoubleTankProblem, HybridLqrProblem, MobileNetworkProblem
from .scenarios import solve_benchmark


@pytest.fixture(scope="session")
def double_tank():
    return DoubleTankProblem()


@pytest.fixture(scope="session")
def hybrid_lqr():
    return HybridLqrProblem()


@pytest.fixture(scope="session")
def mobile_network():
    return MobileNetworkProblem()


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# Full-length runs are shared between the solver, PWM and table tests.

@pytest.fixture(scope="session")
def double_tank_run(double_tank):
    return solve_benchmark(double_tank, 0.01, 100, "convexified")


@pytest.fixture(scope="session")
def hybrid_lqr_run(hybrid_lqr):
    return solve_benchmark(hybrid_lqr, 0.01, 20, "general")


@pytest.fixture(scope="session")
def mobile_network_run(mobile_network):
    return solve_benchmark(mobile_network, 0.01, 200, "convexified")
