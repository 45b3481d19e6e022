"""Deterministic world simulator: kinematics, obstacles, synthetic sensors."""

from .scenario import Scenario, TimedGoal, dump_scenario, load_scenario, parse_scenario
from .sensors import DepthCameraSpec, LidarSpec, SensorSpec, simulate_depth, simulate_lidar
from .world import ObstacleSpec, RobotState, World, advance_obstacles, step_robot

__all__ = [
    "Scenario",
    "TimedGoal",
    "parse_scenario",
    "load_scenario",
    "dump_scenario",
    "LidarSpec",
    "DepthCameraSpec",
    "SensorSpec",
    "simulate_lidar",
    "simulate_depth",
    "ObstacleSpec",
    "RobotState",
    "World",
    "advance_obstacles",
    "step_robot",
]
