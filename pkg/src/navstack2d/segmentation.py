"""RANSAC ground-plane fitting and ground/obstacle split of a depth cloud."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInputError
from .pointcloud import PointCloud3

_COLLINEAR_EPS = 1e-12


@dataclass(frozen=True)
class PlaneModel:
    """Plane a*x + b*y + c*z + d = 0 with (a, b, c) stored as a unit normal.

    The normal sign is canonicalized (c >= 0, ties broken toward +b then +a)
    so two fits of the same plane compare equal.
    """

    a: float
    b: float
    c: float
    d: float

    def __post_init__(self):
        n = math.sqrt(self.a * self.a + self.b * self.b + self.c * self.c)
        if n == 0.0 or not math.isfinite(n):
            raise ValueError("plane normal must be non-zero and finite")
        a, b, c, d = self.a / n, self.b / n, self.c / n, self.d / n
        if c < 0 or (c == 0 and (b < 0 or (b == 0 and a < 0))):
            a, b, c, d = -a, -b, -c, -d
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "d", d)

    def normal(self) -> np.ndarray:
        return np.array([self.a, self.b, self.c])


@dataclass(frozen=True)
class RansacConfig:
    distance_threshold: float = 0.03
    alpha: float = 0.99
    inlier_prob: float = 0.5
    rng_seed: int = 0

    def __post_init__(self):
        if self.distance_threshold <= 0:
            raise ValueError("distance_threshold must be > 0")
        if not (0.0 < self.alpha < 1.0):
            raise ValueError("alpha must be in (0, 1)")
        if not (0.0 < self.inlier_prob < 1.0):
            raise ValueError("inlier_prob must be in (0, 1)")


@dataclass(frozen=True)
class SegmentationResult:
    plane: PlaneModel
    ground: PointCloud3
    obstacles: PointCloud3


def point_plane_abs_distance(p, m: PlaneModel) -> float:
    """|a*x + b*y + c*z + d| for a normalized plane model."""
    x, y, z = (p.x, p.y, p.z) if hasattr(p, "x") else p
    return abs(m.a * x + m.b * y + m.c * z + m.d)


def iteration_count(alpha: float, inlier_prob: float) -> int:
    """Number of RANSAC iterations for success probability `alpha` given
    per-point inlier probability `inlier_prob`; half-up rounded, at least 1."""
    if not (0.0 < alpha < 1.0) or not (0.0 < inlier_prob < 1.0):
        raise ValueError("alpha and inlier_prob must both be in (0, 1)")
    p_good = inlier_prob**3
    n = math.log(1.0 - alpha) / math.log(1.0 - p_good)
    return max(1, int(math.floor(n + 0.5)))


def _plane_from_points(p0, p1, p2) -> PlaneModel | None:
    normal = np.cross(p1 - p0, p2 - p0)
    norm = float(np.linalg.norm(normal))
    if norm < _COLLINEAR_EPS:
        return None
    d = -float(normal @ p0)
    return PlaneModel(float(normal[0]), float(normal[1]), float(normal[2]), d)


def fit_plane_ransac(cloud: PointCloud3, cfg: RansacConfig) -> SegmentationResult:
    """Segment a cloud into ground (plane inliers) and obstacles (outliers).

    Runs a fixed, seed-determined number of minimal-sample iterations; the
    winning model has the most inliers, ties broken by smaller inlier-distance
    standard deviation, then by earliest iteration. Inliers use a strict
    distance test (boundary points are obstacles).
    """
    pts = cloud.xyz
    n = pts.shape[0]
    if n < 3:
        raise DegenerateInputError(f"RANSAC needs >= 3 points, got {n}")
    iterations = iteration_count(cfg.alpha, cfg.inlier_prob)
    rng = np.random.Generator(np.random.PCG64(cfg.rng_seed))

    best: tuple[int, float, int, PlaneModel, np.ndarray] | None = None
    for it in range(iterations):
        i, j, k = rng.choice(n, size=3, replace=False)
        model = _plane_from_points(pts[i], pts[j], pts[k])
        if model is None:
            continue
        dist = np.abs(pts @ model.normal() + model.d)
        inlier_mask = dist < cfg.distance_threshold
        count = int(inlier_mask.sum())
        std = float(np.std(dist[inlier_mask])) if count else math.inf
        if best is None or count > best[0] or (count == best[0] and std < best[1]):
            best = (count, std, it, model, inlier_mask)

    if best is None:
        raise DegenerateInputError("all RANSAC samples were collinear")
    _, _, _, model, inlier_mask = best
    ground = cloud.with_points(pts[inlier_mask])
    obstacles = cloud.with_points(pts[~inlier_mask])
    return SegmentationResult(model, ground, obstacles)
