"""World state: unicycle robot, static/dynamic obstacles, collision checks."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..geometry import Pose2, wrap_angle

ROBOT_RADIUS = 0.25


@dataclass
class RobotState:
    pose: Pose2 = field(default_factory=Pose2)
    v: float = 0.0
    omega: float = 0.0
    radius: float = ROBOT_RADIUS


@dataclass(frozen=True)
class ObstacleSpec:
    """Cylinder or axis-aligned box, static or moving along a waypoint polyline."""

    obstacle_id: str
    shape: str  # "cylinder" | "box"
    radius: float = 0.15          # cylinders
    size: tuple[float, float] = (0.5, 0.5)  # boxes: w x h footprint
    height: float = 1.0
    position: tuple[float, float] = (0.0, 0.0)
    waypoints: tuple[tuple[float, float], ...] = ()
    speed: float = 0.0

    def __post_init__(self):
        if self.shape not in ("cylinder", "box"):
            raise ValueError(f"unknown obstacle shape {self.shape!r}")
        if self.speed < 0:
            raise ValueError("dynamic obstacle speed must be >= 0")
        if self.waypoints and len(self.waypoints) < 2:
            raise ValueError("dynamic obstacles need at least 2 waypoints")

    @property
    def dynamic(self) -> bool:
        return bool(self.waypoints) and self.speed > 0

    def position_at(self, t: float) -> tuple[float, float]:
        """Arc-length position speed*t along the waypoint polyline, clamped
        at the last waypoint; static obstacles stay put."""
        if not self.dynamic:
            return self.waypoints[0] if self.waypoints else self.position
        s = self.speed * max(t, 0.0)
        pts = self.waypoints
        for a, b in zip(pts, pts[1:]):
            leg = math.hypot(b[0] - a[0], b[1] - a[1])
            if s <= leg:
                if leg <= 0:
                    return a
                f = s / leg
                return (a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1]))
            s -= leg
        return pts[-1]


def advance_obstacles(specs, t: float) -> dict[str, tuple[float, float]]:
    return {spec.obstacle_id: spec.position_at(t) for spec in specs}


def step_robot(state: RobotState, v: float, omega: float, dt: float) -> RobotState:
    """Exact unicycle integration over one step of constant (v, omega)."""
    if dt <= 0:
        raise ValueError("dt must be > 0")
    x, y, beta = state.pose.x, state.pose.y, state.pose.beta
    if abs(omega) < 1e-9:
        x += v * math.cos(beta) * dt
        y += v * math.sin(beta) * dt
    else:
        x += (v / omega) * (math.sin(beta + omega * dt) - math.sin(beta))
        y += (v / omega) * (math.cos(beta) - math.cos(beta + omega * dt))
    beta = wrap_angle(beta + omega * dt)
    return RobotState(Pose2(x, y, beta), v, omega, state.radius)


@dataclass
class World:
    """Static description plus time-dependent obstacle placement."""

    bounds: tuple[float, float, float, float] = (-3.0, -3.0, 3.0, 3.0)
    walls: bool = True
    wall_height: float = 1.0
    wall_thickness: float = 0.1
    obstacles: list[ObstacleSpec] = field(default_factory=list)

    def wall_boxes(self) -> np.ndarray:
        """Walls as box rows [xmin, ymin, xmax, ymax, height] hugging the
        outside of the bounds."""
        if not self.walls:
            return np.empty((0, 5))
        x0, y0, x1, y1 = self.bounds
        t = self.wall_thickness
        h = self.wall_height
        return np.array(
            [
                [x0 - t, y0 - t, x1 + t, y0, h],
                [x0 - t, y1, x1 + t, y1 + t, h],
                [x0 - t, y0 - t, x0, y1 + t, h],
                [x1, y0 - t, x1 + t, y1 + t, h],
            ]
        )

    def shape_arrays(self, t: float) -> tuple[np.ndarray, np.ndarray]:
        """(cylinders [cx,cy,r,h], boxes [xmin,ymin,xmax,ymax,h]) at time t."""
        cylinders = []
        boxes = [row for row in self.wall_boxes()]
        for spec in self.obstacles:
            cx, cy = spec.position_at(t)
            if spec.shape == "cylinder":
                cylinders.append([cx, cy, spec.radius, spec.height])
            else:
                w, h = spec.size
                boxes.append([cx - w / 2, cy - h / 2, cx + w / 2, cy + h / 2, spec.height])
        cyl = np.array(cylinders).reshape(-1, 4) if cylinders else np.empty((0, 4))
        box = np.array(boxes).reshape(-1, 5) if boxes else np.empty((0, 5))
        return cyl, box

    def check_collision(self, pose: Pose2, t: float, radius: float = ROBOT_RADIUS) -> bool:
        """Strict-inequality disc collision against exact obstacle shapes."""
        cyl, box = self.shape_arrays(t)
        for cx, cy, r, _h in cyl:
            if math.hypot(pose.x - cx, pose.y - cy) < radius + r:
                return True
        for xmin, ymin, xmax, ymax, _h in box:
            dx = max(xmin - pose.x, 0.0, pose.x - xmax)
            dy = max(ymin - pose.y, 0.0, pose.y - ymax)
            if math.hypot(dx, dy) < radius:
                return True
        return False
