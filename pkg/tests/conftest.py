"""Shared fixtures: robot parameter sets and one cached online solve."""

import numpy as np
import pytest

from jumpkit.optimizer import DEConfig, optimize
from jumpkit.robot_model import RobotParams


@pytest.fixture(scope="session")
def mc() -> RobotParams:
    return RobotParams.named("mini_cheetah")


@pytest.fixture(scope="session")
def hum() -> RobotParams:
    return RobotParams.named("humanoid")


@pytest.fixture(scope="session")
def forward_solve(mc):
    """One converged forward jump, shared by optimizer/simulator tests."""
    return optimize(
        np.array([1.0, 0.0, 0.25]),
        mc,
        seed=np.random.default_rng(0),
        config=DEConfig.online(),
    )
