"""3D point-cloud container, pre-processing filters, and cloud fusion.

Clouds are immutable value objects holding an (N, 3) float64 array. All
filters are pure functions returning new clouds; output ordering is
deterministic so downstream results are reproducible.
"""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

from .errors import MissingFrameError
from .geometry import RigidTransform3


@dataclass(frozen=True)
class Point3:
    x: float
    y: float
    z: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])


@dataclass(frozen=True)
class PointCloud3:
    """Ordered bag of 3D points expressed in a named frame."""

    xyz: np.ndarray
    frame: str = "base"
    stamp: float = 0.0

    def __post_init__(self):
        arr = np.asarray(self.xyz, dtype=float).reshape(-1, 3)
        arr.setflags(write=False)
        object.__setattr__(self, "xyz", arr)
        if not self.frame:
            raise ValueError("frame identifier must be non-empty")

    def __len__(self) -> int:
        return self.xyz.shape[0]

    @classmethod
    def from_points(cls, points: Iterable, frame: str = "base", stamp: float = 0.0) -> "PointCloud3":
        rows = [p.as_array() if isinstance(p, Point3) else np.asarray(p, dtype=float) for p in points]
        arr = np.vstack(rows) if rows else np.empty((0, 3))
        return cls(arr, frame, stamp)

    def with_points(self, xyz: np.ndarray) -> "PointCloud3":
        return PointCloud3(xyz, self.frame, self.stamp)


@dataclass(frozen=True)
class FilterConfig:
    voxel_leaf: float = 0.02
    max_range: float = 2.9
    min_height: float = -0.05

    def __post_init__(self):
        if self.voxel_leaf <= 0:
            raise ValueError("voxel_leaf must be > 0")
        if self.max_range <= 0:
            raise ValueError("max_range must be > 0")


def voxel_filter(cloud: PointCloud3, leaf: float) -> PointCloud3:
    """Downsample to one centroid per occupied voxel.

    Voxels are half-open cubes [k*leaf, (k+1)*leaf) per axis; output points
    are ordered by ascending voxel index, z-major then y then x.
    """
    if leaf <= 0:
        raise ValueError("leaf size must be > 0")
    finite = np.isfinite(cloud.xyz).all(axis=1)
    if not finite.all():
        cloud = cloud.with_points(cloud.xyz[finite])
    if len(cloud) == 0:
        return cloud
    idx = np.floor(cloud.xyz / leaf).astype(np.int64)
    order = np.lexsort((idx[:, 0], idx[:, 1], idx[:, 2]))
    idx_sorted = idx[order]
    pts_sorted = cloud.xyz[order]
    boundaries = np.any(np.diff(idx_sorted, axis=0) != 0, axis=1)
    starts = np.concatenate(([0], np.nonzero(boundaries)[0] + 1))
    counts = np.diff(np.concatenate((starts, [len(cloud)])))
    sums = np.add.reduceat(pts_sorted, starts, axis=0)
    centroids = sums / counts[:, None]
    return cloud.with_points(centroids)


def range_filter(cloud: PointCloud3, origin: Point3 | np.ndarray, max_range: float) -> PointCloud3:
    """Keep points with Euclidean distance to `origin` <= max_range (closed bound)."""
    if max_range <= 0:
        raise ValueError("max_range must be > 0")
    o = origin.as_array() if isinstance(origin, Point3) else np.asarray(origin, dtype=float)
    if len(cloud) == 0:
        return cloud
    d = np.linalg.norm(cloud.xyz - o, axis=1)
    return cloud.with_points(cloud.xyz[d <= max_range])


def passthrough_filter(cloud: PointCloud3, min_height: float) -> PointCloud3:
    """Drop non-finite points and points below the height cutoff."""
    if len(cloud) == 0:
        return cloud
    finite = np.isfinite(cloud.xyz).all(axis=1)
    keep = finite & (np.where(finite, cloud.xyz[:, 2], 0.0) >= min_height)
    return cloud.with_points(cloud.xyz[keep])


def apply_filters(cloud: PointCloud3, cfg: FilterConfig, origin: Point3 | np.ndarray | None = None) -> PointCloud3:
    """Full pre-processing chain: voxel downsample, range cut, height cut."""
    o = np.zeros(3) if origin is None else origin
    out = voxel_filter(cloud, cfg.voxel_leaf)
    out = range_filter(out, o, cfg.max_range)
    return passthrough_filter(out, cfg.min_height)


def fuse(
    clouds: list[PointCloud3],
    target_frame: str,
    transforms: Mapping[str, RigidTransform3],
) -> PointCloud3:
    """Concatenate clouds after rigid transformation into `target_frame`.

    `transforms[frame]` must map points from `frame` into `target_frame`;
    clouds already in the target frame may omit their entry.
    """
    parts = []
    stamp = 0.0
    for cloud in clouds:
        tf = transforms.get(cloud.frame)
        if tf is None:
            if cloud.frame == target_frame:
                tf = RigidTransform3.identity()
            else:
                raise MissingFrameError(f"no transform from frame {cloud.frame!r} to {target_frame!r}")
        parts.append(tf.apply(cloud.xyz) if len(cloud) else cloud.xyz)
        stamp = max(stamp, cloud.stamp)
    xyz = np.vstack(parts) if parts else np.empty((0, 3))
    return PointCloud3(xyz, target_frame, stamp)


def dump_cloud(cloud: PointCloud3) -> str:
    """Whitespace text format: header line then one 'x y z' row per point."""
    buf = io.StringIO()
    buf.write(f"# frame={cloud.frame} stamp={cloud.stamp:.6f} n={len(cloud)}\n")
    for x, y, z in cloud.xyz:
        buf.write(f"{x:.6f} {y:.6f} {z:.6f}\n")
    return buf.getvalue()


def load_cloud(text: str) -> PointCloud3:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines or not lines[0].startswith("#"):
        raise ValueError("missing cloud header line")
    fields = dict(kv.split("=", 1) for kv in lines[0][1:].split())
    frame = fields["frame"]
    stamp = float(fields["stamp"])
    n = int(fields["n"])
    rows = [tuple(float(v) for v in ln.split()) for ln in lines[1:]]
    if len(rows) != n:
        raise ValueError(f"header says n={n} but found {len(rows)} rows")
    arr = np.array(rows, dtype=float).reshape(-1, 3)
    return PointCloud3(arr, frame, stamp)
