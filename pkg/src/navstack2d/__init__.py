"""Deterministic 2D navigation stack and simulation harness.

Pipeline: depth/LiDAR point clouds are filtered and RANSAC-segmented into
ground and obstacles, which populate layered global/local costmaps;
scan-matching odometry localizes the robot; a D* Lite global planner and a
timed-elastic-band local optimizer drive a simulated differential-drive robot.
"""

__version__ = "0.1.0"

from . import _kernels

KERNEL_BACKEND = _kernels.BACKEND
