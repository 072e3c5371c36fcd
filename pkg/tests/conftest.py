"""Pytest configuration and fixtures for the crowd MFG tests."""

import pytest

from crowd_mfg.grid import build_grid
from crowd_mfg.hjb import ControlSet
from crowd_mfg.interaction import InteractionParams, build_stencils
from crowd_mfg.models import CostConfig, CostMode, LinearX1RunningCost, DistanceTerminalCost


def pytest_addoption(parser):
    """Add custom command-line options."""
    parser.addoption(
        "--run-slow",
        action="store_true",
        default=False,
        help="Run the slow behavioural reproductions",
    )
    parser.addoption(
        "--full-scale",
        action="store_true",
        default=False,
        help="Run behavioural reproductions on the 50x50 reference grids",
    )


def pytest_collection_modifyitems(config, items):
    if config.getoption("--run-slow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --run-slow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture
def full_scale(request):
    """Whether behavioural tests use the reference grids."""
    return request.config.getoption("--full-scale")


@pytest.fixture
def unit_grid():
    """The 50x50 grid of the reference tests, T = 1 with 200 steps."""
    return build_grid((1.0, 1.0), 50, 50, T=1.0, nT=200)


@pytest.fixture
def small_grid():
    return build_grid((1.0, 1.0), 10, 10, T=0.2, nT=10)


@pytest.fixture
def controls():
    return ControlSet(32)


@pytest.fixture
def repulsion():
    return InteractionParams(c_rep=6.0, r0=0.01, r=0.06)


@pytest.fixture
def stencils(unit_grid, repulsion, controls):
    return build_stencils(unit_grid, repulsion, controls.directions)


@pytest.fixture
def finite_costs():
    return CostConfig(
        mode=CostMode.FINITE_HORIZON,
        running=LinearX1RunningCost(c0=3.0, c1=-2.0),
        terminal=DistanceTerminalCost(center=(0.5, 0.5)),
    )
