"""Planar obstacle primitives for clearance constraints.

All shapes expose a signed distance from a query point to the obstacle
boundary (negative inside). For the optimizer hot path the set is encoded
into flat arrays: one row [type, x1, y1, x2, y2, r] per primitive, polygon
edges sharing a group.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TYPE_POINT = 0.0
TYPE_CIRCLE = 1.0
TYPE_SEGMENT = 2.0
TYPE_POLY_EDGE = 3.0


@dataclass(frozen=True)
class PointObstacle:
    x: float
    y: float

    def distance(self, px: float, py: float) -> float:
        return math.hypot(px - self.x, py - self.y)

    def rows(self):
        return [(TYPE_POINT, self.x, self.y, 0.0, 0.0, 0.0)]


@dataclass(frozen=True)
class CircleObstacle:
    x: float
    y: float
    radius: float

    def __post_init__(self):
        if self.radius < 0:
            raise ValueError("circle radius must be >= 0")

    def distance(self, px: float, py: float) -> float:
        return math.hypot(px - self.x, py - self.y) - self.radius

    def rows(self):
        return [(TYPE_CIRCLE, self.x, self.y, 0.0, 0.0, self.radius)]


def _segment_distance(px, py, x1, y1, x2, y2) -> float:
    vx, vy = x2 - x1, y2 - y1
    wx, wy = px - x1, py - y1
    denom = vx * vx + vy * vy
    t = 0.0 if denom <= 0 else min(max((wx * vx + wy * vy) / denom, 0.0), 1.0)
    return math.hypot(px - (x1 + t * vx), py - (y1 + t * vy))


@dataclass(frozen=True)
class SegmentObstacle:
    x1: float
    y1: float
    x2: float
    y2: float

    def distance(self, px: float, py: float) -> float:
        return _segment_distance(px, py, self.x1, self.y1, self.x2, self.y2)

    def rows(self):
        return [(TYPE_SEGMENT, self.x1, self.y1, self.x2, self.y2, 0.0)]


class PolygonObstacle:
    """Convex polygon; vertices are reordered counter-clockwise on build."""

    def __init__(self, vertices):
        v = np.asarray(vertices, dtype=float).reshape(-1, 2)
        if v.shape[0] < 3:
            raise ValueError("polygon needs at least 3 vertices")
        area2 = 0.0
        for i in range(len(v)):
            x1, y1 = v[i]
            x2, y2 = v[(i + 1) % len(v)]
            area2 += x1 * y2 - x2 * y1
        self.vertices = v if area2 >= 0 else v[::-1].copy()

    def distance(self, px: float, py: float) -> float:
        n = len(self.vertices)
        dmin = math.inf
        inside = True
        for i in range(n):
            x1, y1 = self.vertices[i]
            x2, y2 = self.vertices[(i + 1) % n]
            dmin = min(dmin, _segment_distance(px, py, x1, y1, x2, y2))
            if (x2 - x1) * (py - y1) - (y2 - y1) * (px - x1) < 0:
                inside = False
        return -dmin if inside else dmin

    def rows(self):
        n = len(self.vertices)
        out = []
        for i in range(n):
            x1, y1 = self.vertices[i]
            x2, y2 = self.vertices[(i + 1) % n]
            out.append((TYPE_POLY_EDGE, x1, y1, x2, y2, 0.0))
        return out


Obstacle = PointObstacle | CircleObstacle | SegmentObstacle | PolygonObstacle


def encode_obstacles(obstacles) -> tuple[np.ndarray, np.ndarray]:
    """Flatten an obstacle list into (rows, group_starts) for the kernels."""
    data = []
    starts = []
    for obs in obstacles:
        starts.append(len(data))
        data.extend(obs.rows())
    if not data:
        return np.empty((0, 6)), np.empty((0,), dtype=np.int64)
    return np.asarray(data, dtype=float), np.asarray(starts, dtype=np.int64)
