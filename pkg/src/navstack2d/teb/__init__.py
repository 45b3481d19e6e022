"""Timed-elastic-band local trajectory optimization."""

from .band import TebBand, TebConfig, initialize_band
from .obstacles import (
    CircleObstacle,
    PointObstacle,
    PolygonObstacle,
    SegmentObstacle,
    encode_obstacles,
)
from .optimizer import band_objective_fast, extract_command, optimize, resize_band
from .residuals import (
    ResidualBundle,
    acceleration,
    constraint_residuals,
    nonholonomic_residual,
    objective,
    penalty_equality,
    penalty_inequality,
    velocity,
)

__all__ = [
    "TebBand",
    "TebConfig",
    "initialize_band",
    "PointObstacle",
    "CircleObstacle",
    "SegmentObstacle",
    "PolygonObstacle",
    "encode_obstacles",
    "optimize",
    "resize_band",
    "extract_command",
    "band_objective_fast",
    "ResidualBundle",
    "acceleration",
    "constraint_residuals",
    "nonholonomic_residual",
    "objective",
    "penalty_equality",
    "penalty_inequality",
    "velocity",
]
