"""Layered 2D costmaps: occupied/free global map, occupied/free/inflated local map.

Cost conventions: FREE = 0, OCCUPIED = 254, inflated costs strictly within
(0, 254). Global maps carry only FREE/OCCUPIED; inflation is a local-map
concept. Cells are stored row-major as uint8, indexed [row, col].
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from . import _kernels
from .errors import KindMismatchError, OutOfBoundsError
from .geometry import Pose2
from .pointcloud import PointCloud3

FREE = 0
OCCUPIED = 254

GLOBAL = "global"
LOCAL = "local"


@dataclass(frozen=True)
class GridSpec:
    resolution: float
    origin_x: float
    origin_y: float
    width: int
    height: int

    def __post_init__(self):
        if self.resolution <= 0:
            raise ValueError("resolution must be > 0")
        if self.width < 1 or self.height < 1:
            raise ValueError("grid must be at least 1x1")

    def contains(self, x: float, y: float) -> bool:
        cx = (x - self.origin_x) / self.resolution
        cy = (y - self.origin_y) / self.resolution
        return 0 <= cx < self.width and 0 <= cy < self.height

    def cell_center(self, col: int, row: int) -> tuple[float, float]:
        return (
            self.origin_x + (col + 0.5) * self.resolution,
            self.origin_y + (row + 0.5) * self.resolution,
        )


@dataclass
class Costmap:
    spec: GridSpec
    kind: str = GLOBAL
    cells: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        if self.kind not in (GLOBAL, LOCAL):
            raise ValueError(f"unknown costmap kind {self.kind!r}")
        if self.cells is None:
            self.cells = np.zeros((self.spec.height, self.spec.width), dtype=np.uint8)
        else:
            self.cells = np.asarray(self.cells, dtype=np.uint8).reshape(
                self.spec.height, self.spec.width
            )

    def copy(self) -> "Costmap":
        return Costmap(self.spec, self.kind, self.cells.copy())

    def occupied_cells(self) -> list[tuple[int, int]]:
        rows, cols = np.nonzero(self.cells == OCCUPIED)
        return [(int(c), int(r)) for r, c in zip(rows, cols)]

    def cost_at(self, col: int, row: int) -> int:
        return int(self.cells[row, col])


@dataclass(frozen=True)
class InflationConfig:
    inflation_radius: float = 0.55
    robot_radius: float = 0.25

    def __post_init__(self):
        if not (self.inflation_radius >= self.robot_radius > 0):
            raise ValueError("need inflation_radius >= robot_radius > 0")


def world_to_cell(spec: GridSpec, x: float, y: float) -> tuple[int, int]:
    """Map a world point to its (col, row) cell; raises when out of bounds."""
    if not spec.contains(x, y):
        raise OutOfBoundsError(f"point ({x:.3f}, {y:.3f}) outside map extent")
    col = int(math.floor((x - spec.origin_x) / spec.resolution))
    row = int(math.floor((y - spec.origin_y) / spec.resolution))
    return col, row


def mark_obstacles(grid: Costmap, obstacles: PointCloud3) -> Costmap:
    """Project obstacle points onto the grid; cells gaining a point become
    OCCUPIED, everything else is left untouched. Out-of-bounds points are
    skipped."""
    out = grid.copy()
    if len(obstacles) == 0:
        return out
    spec = grid.spec
    cols = np.floor((obstacles.xyz[:, 0] - spec.origin_x) / spec.resolution).astype(np.int64)
    rows = np.floor((obstacles.xyz[:, 1] - spec.origin_y) / spec.resolution).astype(np.int64)
    keep = (cols >= 0) & (cols < spec.width) & (rows >= 0) & (rows < spec.height)
    out.cells[rows[keep], cols[keep]] = OCCUPIED
    return out


def inflate(grid: Costmap, cfg: InflationConfig) -> Costmap:
    """Add the linear-decay inflation layer around occupied cells (local maps only)."""
    if grid.kind != LOCAL:
        raise KindMismatchError("inflation applies to local maps only")
    cells = _kernels.inflate_costs(grid.cells, grid.spec.resolution, cfg.inflation_radius)
    return Costmap(grid.spec, grid.kind, cells)


def make_local_spec(robot_pose: Pose2, resolution: float = 0.05, extent: float = 4.0) -> GridSpec:
    """Spec for the local window centered on the robot.

    The origin snaps to the resolution grid so a recenter never shifts which
    world region a cell covers.
    """
    half = extent / 2.0
    ox = math.floor((robot_pose.x - half) / resolution) * resolution
    oy = math.floor((robot_pose.y - half) / resolution) * resolution
    n = int(round(extent / resolution))
    return GridSpec(resolution, ox, oy, n, n)


def update_from_detections(
    global_map: Costmap,
    local_map: Costmap,
    lidar_obstacles: PointCloud3,
    depth_obstacles: PointCloud3,
    robot_pose: Pose2,
    inflation: InflationConfig = InflationConfig(),
) -> tuple[Costmap, Costmap]:
    """One mapping cycle: LiDAR feeds the global map; the local window is
    recentered on the robot, cleared, repopulated from both sensors, and
    inflated. Clearing is what lets dynamic obstacles vanish from the local
    map once they leave the field of view."""
    new_global = mark_obstacles(global_map, lidar_obstacles)
    spec = make_local_spec(robot_pose, local_map.spec.resolution,
                           local_map.spec.width * local_map.spec.resolution)
    fresh = Costmap(spec, LOCAL)
    fresh = mark_obstacles(fresh, lidar_obstacles)
    fresh = mark_obstacles(fresh, depth_obstacles)
    fresh = inflate(fresh, inflation)
    return new_global, fresh


def dump_costmap(grid: Costmap) -> str:
    """Snapshot text format: header 'res,ox,oy,width,height,kind' then the
    row-major cost bytes as comma-separated integers."""
    spec = grid.spec
    header = f"{spec.resolution},{spec.origin_x},{spec.origin_y},{spec.width},{spec.height},{grid.kind}"
    body = ",".join(str(int(v)) for v in grid.cells.ravel())
    return header + "\n" + body + "\n"


def load_costmap(text: str) -> Costmap:
    lines = text.strip().splitlines()
    res, ox, oy, w, h, kind = lines[0].split(",")
    spec = GridSpec(float(res), float(ox), float(oy), int(w), int(h))
    cells = np.array([int(v) for v in lines[1].split(",")], dtype=np.uint8)
    return Costmap(spec, kind, cells)
