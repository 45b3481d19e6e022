"""Ray-cast emulation of the multi-ring LiDAR and the two depth cameras.

Returned clouds are expressed in each sensor's own frame (x forward at the
sensor's yaw, z up, origin at the sensor). The LiDAR ring elevations start
just below horizontal, so the ground plane stays outside its range while
obstacle and wall surfaces remain visible; the depth cameras pitch down and
do see the ground, which is what the plane segmentation feeds on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .. import _kernels
from ..geometry import Pose2
from ..loam import Scan
from ..pointcloud import PointCloud3
from .world import World


@dataclass(frozen=True)
class LidarSpec:
    height: float = 0.4
    rings: int = 16
    azimuth_steps: int = 720
    max_range: float = 10.0
    elevation_start_deg: float = -1.0
    elevation_step_deg: float = 1.0


@dataclass(frozen=True)
class DepthCameraSpec:
    name: str = "depth_front"
    yaw_offset: float = 0.0       # pi for the rearward camera
    height: float = 0.6
    pitch_down: float = math.radians(35.0)
    hfov: float = math.radians(86.0)
    vfov: float = math.radians(58.0)
    cols: int = 44
    rows: int = 30
    max_range: float = 3.5
    reliable_range: float = 3.0


@dataclass(frozen=True)
class SensorSpec:
    lidar: LidarSpec = field(default_factory=LidarSpec)
    cameras: tuple[DepthCameraSpec, ...] = (
        DepthCameraSpec("depth_front", 0.0),
        DepthCameraSpec("depth_rear", math.pi),
    )
    rate_hz: float = 14.0


def _sensor_dirs(azimuths: np.ndarray, elevations: np.ndarray) -> np.ndarray:
    """Unit direction grid, elevation-major: rows of constant elevation."""
    az = azimuths[None, :]
    el = elevations[:, None]
    ce = np.cos(el)
    dirs = np.stack(
        [np.cos(az) * ce, np.sin(az) * ce, np.broadcast_to(np.sin(el), (len(elevations), len(azimuths)))],
        axis=-1,
    )
    return dirs.reshape(-1, 3)


def _world_dirs(dirs_sensor: np.ndarray, yaw: float) -> np.ndarray:
    c, s = math.cos(yaw), math.sin(yaw)
    out = dirs_sensor.copy()
    out[:, 0] = c * dirs_sensor[:, 0] - s * dirs_sensor[:, 1]
    out[:, 1] = s * dirs_sensor[:, 0] + c * dirs_sensor[:, 1]
    return out


def simulate_lidar(
    world: World,
    robot_pose: Pose2,
    t: float,
    spec: LidarSpec = LidarSpec(),
    rng: np.random.Generator | None = None,
    noise_sigma: float = 0.0,
) -> tuple[Scan, PointCloud3]:
    """One sweep: per ring and azimuth the first surface hit within range.

    The firing phase is dithered inside one azimuth step per sweep (seeded,
    deterministic): a grid frozen to the sensor frame would alias surface
    sample points into systematically biased scan-matching correspondences.
    """
    phase = rng.uniform(0.0, 1.0) if rng is not None else 0.5
    azimuths = -math.pi + (np.arange(spec.azimuth_steps) + phase) * (2 * math.pi / spec.azimuth_steps)
    elevations = np.radians(
        spec.elevation_start_deg + spec.elevation_step_deg * np.arange(spec.rings)
    )
    dirs_sensor = _sensor_dirs(azimuths, elevations)
    origin = np.array([robot_pose.x, robot_pose.y, spec.height])
    cyl, box = world.shape_arrays(t)
    dist = _kernels.raycast_scene(origin, _world_dirs(dirs_sensor, robot_pose.beta), cyl, box, True, spec.max_range)
    if noise_sigma > 0 and rng is not None:
        noise = rng.normal(0.0, noise_sigma, size=dist.shape)
        dist = np.where(np.isfinite(dist), np.maximum(dist + noise, 0.05), dist)
    rings = []
    per_ring = spec.azimuth_steps
    for r in range(spec.rings):
        seg = dist[r * per_ring : (r + 1) * per_ring]
        hit = np.isfinite(seg)
        pts = dirs_sensor[r * per_ring : (r + 1) * per_ring][hit] * seg[hit][:, None]
        rings.append(pts)
    scan = Scan(rings, stamp=t)
    return scan, PointCloud3(scan.all_points(), "lidar", t)


def simulate_depth(
    world: World,
    robot_pose: Pose2,
    t: float,
    camera: DepthCameraSpec,
    rng: np.random.Generator | None = None,
    noise_sigma: float = 0.0,
) -> PointCloud3:
    """Dense FOV ray cast including ground returns; range noise triples past
    the reliable range, mirroring depth accuracy falling off with distance."""
    azimuths = np.linspace(-camera.hfov / 2, camera.hfov / 2, camera.cols)
    elevations = -camera.pitch_down + np.linspace(-camera.vfov / 2, camera.vfov / 2, camera.rows)
    dirs_sensor = _sensor_dirs(azimuths, elevations)
    yaw = robot_pose.beta + camera.yaw_offset
    origin = np.array([robot_pose.x, robot_pose.y, camera.height])
    cyl, box = world.shape_arrays(t)
    dist = _kernels.raycast_scene(origin, _world_dirs(dirs_sensor, yaw), cyl, box, True, camera.max_range)
    if noise_sigma > 0 and rng is not None:
        noise = rng.normal(0.0, noise_sigma, size=dist.shape)
        noise = np.where(dist > camera.reliable_range, 3.0 * noise, noise)
        dist = np.where(np.isfinite(dist), np.maximum(dist + noise, 0.05), dist)
    hit = np.isfinite(dist)
    pts = dirs_sensor[hit] * dist[hit][:, None]
    return PointCloud3(pts, camera.name, t)
