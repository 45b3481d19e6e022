"""Band container, planner configuration, and band construction from a path."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import WindowMismatchError
from ..geometry import Pose2, wrap_angle


@dataclass
class TebBand:
    """Alternating pose / time-interval sequence: the optimization variable.

    poses is (n, 3) rows [x, y, beta]; dts is (n-1,) strictly positive
    seconds. The first and last pose stay fixed during optimization.
    """

    poses: np.ndarray
    dts: np.ndarray
    stamp: float = 0.0

    def __post_init__(self):
        self.poses = np.asarray(self.poses, dtype=float).reshape(-1, 3)
        self.dts = np.asarray(self.dts, dtype=float).reshape(-1)
        if self.poses.shape[0] < 2:
            raise ValueError("band needs at least 2 poses")
        if self.dts.shape[0] != self.poses.shape[0] - 1:
            raise ValueError("need exactly n-1 time intervals")

    @property
    def n(self) -> int:
        return self.poses.shape[0]

    def total_time(self) -> float:
        return float(self.dts.sum())

    def pose(self, k: int) -> Pose2:
        x, y, b = self.poses[k]
        return Pose2(float(x), float(y), float(b))

    def copy(self) -> "TebBand":
        return TebBand(self.poses.copy(), self.dts.copy(), self.stamp)

    def dump(self) -> str:
        """Lines 'k x y beta dT' (last line carries dT 0)."""
        lines = []
        for k in range(self.n):
            dt = self.dts[k] if k < self.n - 1 else 0.0
            x, y, b = self.poses[k]
            lines.append(f"{k} {x:.6f} {y:.6f} {b:.6f} {dt:.6f}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class TebConfig:
    v_max: float = 0.5
    omega_max: float = 1.5
    a_max: float = 1.0
    omega_dot_max: float = 2.0
    rho_min: float = 0.2
    robot_radius: float = 0.25
    # Sigmoid sharpness of the motion-sign extraction. At cruise spacing the
    # factor must stay within a couple percent of 1, otherwise the band's
    # notion of speed undershoots the physical one.
    kappa: float = 400.0
    sigma_h: float = 1000.0
    sigma_v: float = 2.0
    sigma_alpha: float = 2.0
    sigma_o: float = 50.0
    ref_spacing: float = 0.25
    dt_ref: float = 0.3
    dt_min: float = 0.01
    outer_iterations: int = 4
    inner_iterations: int = 5
    fd_step: float = 1e-6
    # Penalty weights are multiplied by this factor each outer round, so the
    # soft constraints approach hard ones as the band converges. Quadratic
    # penalties at fixed weight would equilibrate with a visible limit
    # violation; the homotopy drives that violation below tolerance.
    weight_adapt_factor: float = 10.0

    def __post_init__(self):
        for name in ("v_max", "omega_max", "a_max", "omega_dot_max"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be > 0")
        for name in ("sigma_h", "sigma_v", "sigma_alpha", "sigma_o"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.dt_min <= 0:
            raise ValueError("dt_min must be > 0")


def _polyline_arclength(points: np.ndarray) -> np.ndarray:
    seg = np.linalg.norm(np.diff(points, axis=0), axis=1)
    return np.concatenate([[0.0], np.cumsum(seg)])


def _point_along(points: np.ndarray, cum: np.ndarray, s: float) -> np.ndarray:
    s = min(max(s, 0.0), float(cum[-1]))
    i = int(np.searchsorted(cum, s, side="right") - 1)
    i = min(i, len(points) - 2)
    seg_len = cum[i + 1] - cum[i]
    t = 0.0 if seg_len <= 0 else (s - cum[i]) / seg_len
    return points[i] + t * (points[i + 1] - points[i])


def initialize_band(
    path_xy,
    current_pose: Pose2,
    cfg: TebConfig,
    window_center: tuple[float, float],
    window_half: float,
    goal_pose: Pose2 | None = None,
    stamp: float = 0.0,
) -> TebBand:
    """Seed a band along the global path inside the local window.

    Poses are spaced `cfg.ref_spacing` along the path from the point nearest
    the robot; the first pose is the robot pose, the last is the window exit
    point, or the goal pose when the path ends inside the window. Intervals
    assume travel at half the velocity limit.
    """
    pts = np.asarray(path_xy, dtype=float).reshape(-1, 2)
    if pts.shape[0] == 0:
        raise WindowMismatchError("global path is empty")
    cx, cy = window_center

    def inside(p) -> bool:
        return abs(p[0] - cx) <= window_half and abs(p[1] - cy) <= window_half

    if not any(inside(p) for p in pts):
        raise WindowMismatchError("global path does not cross the local window")

    if pts.shape[0] == 1:
        samples = [pts[0]]
        goal_inside = inside(pts[0])
    else:
        cum = _polyline_arclength(pts)
        # Walk from the path position nearest the robot.
        dists = np.linalg.norm(pts - np.array([current_pose.x, current_pose.y]), axis=1)
        s0 = float(cum[int(np.argmin(dists))])
        samples = []
        goal_inside = False
        s = s0
        while s <= cum[-1] + 1e-12:
            p = _point_along(pts, cum, s)
            if not inside(p):
                break
            samples.append(p)
            if s >= cum[-1] - 1e-12:
                goal_inside = True
                break
            s += cfg.ref_spacing
        else:
            goal_inside = True
        if not samples:
            raise WindowMismatchError("path leaves the window before the robot position")

    positions = [np.array([current_pose.x, current_pose.y])]
    for p in samples:
        if np.linalg.norm(p - positions[-1]) > 0.5 * cfg.ref_spacing:
            positions.append(np.asarray(p, dtype=float))
    if len(positions) == 1:
        # Path shorter than the spacing: make the minimum 2-pose band.
        positions.append(np.asarray(samples[-1], dtype=float))

    n = len(positions)
    poses = np.zeros((n, 3))
    for k, p in enumerate(positions):
        poses[k, 0], poses[k, 1] = p
    for k in range(n - 1):
        d = positions[k + 1] - positions[k]
        poses[k, 2] = math.atan2(d[1], d[0]) if np.linalg.norm(d) > 1e-12 else current_pose.beta
    poses[0] = (current_pose.x, current_pose.y, current_pose.beta)
    if goal_inside and goal_pose is not None:
        poses[-1] = (goal_pose.x, goal_pose.y, goal_pose.beta)
    else:
        poses[-1, 2] = poses[n - 2, 2]

    dts = np.empty(n - 1)
    for k in range(n - 1):
        d = float(np.linalg.norm(positions[k + 1] - positions[k]))
        dts[k] = max(d / (0.5 * cfg.v_max), cfg.dt_min)
    return TebBand(poses, dts, stamp)
