"""Jump trajectory planning toolkit for legged robots.

Plans single-jump trajectories for a reduced-order (single rigid body)
robot model by differential evolution over a small set of waypoint and
timing variables, converts waypoints to piecewise-polynomial ground
reaction force profiles, verifies candidate jumps against kino-dynamic
constraints, and relocalizes the robot against a planar-patch map after
landing.
"""

__version__ = "0.1.0"

from .robot_model import RobotParams, ReducedState, PlanarState
from .grf_profile import GRFProfile, PhaseTimes, OptVector
from .optimizer import DEConfig, OptimizeResult, OptimizationFailed, optimize

__all__ = [
    "RobotParams",
    "ReducedState",
    "PlanarState",
    "GRFProfile",
    "PhaseTimes",
    "OptVector",
    "DEConfig",
    "OptimizeResult",
    "OptimizationFailed",
    "optimize",
]
