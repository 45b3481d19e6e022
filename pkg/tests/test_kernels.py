"""Backend equivalence: the compiled core must reproduce the NumPy fallback."""

import numpy as np
import pytest

from navstack2d import _kernels
from navstack2d._kernels import _fallback

core = pytest.importorskip("navstack2d._kernels._core")

from navstack2d.teb import (
    CircleObstacle,
    PointObstacle,
    PolygonObstacle,
    SegmentObstacle,
    TebConfig,
    encode_obstacles,
)
from navstack2d.teb.optimizer import _params_vector

from oracles import brute_force_inflation


def random_scene(rng):
    cylinders = np.column_stack(
        [
            rng.uniform(-4, 4, 5),
            rng.uniform(-4, 4, 5),
            rng.uniform(0.1, 0.5, 5),
            rng.uniform(0.5, 1.5, 5),
        ]
    )
    xmin = rng.uniform(-4, 3, 3)
    ymin = rng.uniform(-4, 3, 3)
    boxes = np.column_stack(
        [xmin, ymin, xmin + rng.uniform(0.2, 1.0, 3), ymin + rng.uniform(0.2, 1.0, 3), rng.uniform(0.4, 1.2, 3)]
    )
    return cylinders, boxes


def random_dirs(rng, m=500):
    az = rng.uniform(-np.pi, np.pi, m)
    el = rng.uniform(-0.4, 0.25, m)
    return np.column_stack([np.cos(az) * np.cos(el), np.sin(az) * np.cos(el), np.sin(el)])


class TestInflateEquivalence:
    def test_matches_fallback_and_oracle(self):
        rng = np.random.default_rng(0)
        for trial in range(5):
            cells = np.zeros((18, 22), dtype=np.uint8)
            cells[rng.random(cells.shape) < 0.07] = 254
            a = _fallback.inflate_costs(cells, 0.05, 0.55)
            b = core.inflate_costs(cells, 0.05, 0.55)
            np.testing.assert_array_equal(a, b)
            np.testing.assert_array_equal(b, brute_force_inflation(cells, 0.05, 0.55))

    def test_empty_grid(self):
        cells = np.zeros((5, 5), dtype=np.uint8)
        np.testing.assert_array_equal(core.inflate_costs(cells, 0.05, 0.55), cells)


class TestRaycastEquivalence:
    def test_matches_fallback(self):
        rng = np.random.default_rng(1)
        for trial in range(5):
            cylinders, boxes = random_scene(rng)
            dirs = random_dirs(rng)
            origin = np.array([0.0, 0.0, 0.4])
            a = _fallback.raycast_scene(origin, dirs, cylinders, boxes, True, 10.0)
            b = core.raycast_scene(origin, dirs, cylinders, boxes, True, 10.0)
            np.testing.assert_allclose(a, b, rtol=1e-12, atol=0)

    def test_hits_lie_on_surfaces(self):
        rng = np.random.default_rng(2)
        cylinders, boxes = random_scene(rng)
        dirs = random_dirs(rng, 300)
        origin = np.array([0.0, 0.0, 0.4])
        t = core.raycast_scene(origin, dirs, cylinders, boxes, True, 10.0)
        hits = np.isfinite(t)
        pts = origin + dirs[hits] * t[hits][:, None]
        for p in pts:
            d_surface = [abs(p[2])]  # ground plane
            for cx, cy, r, h in cylinders:
                if -1e-9 <= p[2] <= h + 1e-9:
                    d_surface.append(abs(np.hypot(p[0] - cx, p[1] - cy) - r))
            for xmin, ymin, xmax, ymax, h in boxes:
                dx = max(xmin - p[0], 0, p[0] - xmax)
                dy = max(ymin - p[1], 0, p[1] - ymax)
                dz = max(-p[2], 0, p[2] - h)
                d_surface.append(np.linalg.norm([dx, dy, dz]))
            assert min(d_surface) < 1e-9


def random_band_arrays(rng, n=7):
    poses = np.zeros((n, 3))
    poses[:, 0] = np.cumsum(rng.uniform(0.1, 0.4, n))
    poses[:, 1] = rng.uniform(-0.4, 0.4, n)
    poses[:, 2] = rng.uniform(-0.7, 0.7, n)
    dts = rng.uniform(0.15, 0.9, n - 1)
    return poses, dts


OBSTACLES = [
    PointObstacle(0.8, 0.3),
    CircleObstacle(1.6, -0.4, 0.25),
    SegmentObstacle(0.4, 0.8, 1.2, 0.9),
    PolygonObstacle([(2.0, 0.2), (2.5, 0.2), (2.5, 0.8), (2.0, 0.8)]),
]


class TestTebEquivalence:
    def test_residuals_match(self):
        rng = np.random.default_rng(3)
        obs_data, starts = encode_obstacles(OBSTACLES)
        params = _params_vector(TebConfig())
        for _ in range(20):
            poses, dts = random_band_arrays(rng)
            a = _fallback.teb_residuals(poses, dts, obs_data, starts, params)
            b = core.teb_residuals(poses, dts, obs_data, starts, params)
            np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-14)

    def test_residuals_match_no_obstacles(self):
        rng = np.random.default_rng(4)
        empty, starts = encode_obstacles([])
        params = _params_vector(TebConfig())
        poses, dts = random_band_arrays(rng, n=2)
        a = _fallback.teb_residuals(poses, dts, empty, starts, params)
        b = core.teb_residuals(poses, dts, empty, starts, params)
        np.testing.assert_allclose(a, b, rtol=1e-12)

    def test_jacobian_matches(self):
        rng = np.random.default_rng(5)
        obs_data, starts = encode_obstacles(OBSTACLES)
        params = _params_vector(TebConfig())
        for _ in range(5):
            poses, dts = random_band_arrays(rng, n=6)
            a = _fallback.teb_jacobian(poses, dts, obs_data, starts, params, 1e-6)
            b = core.teb_jacobian(poses, dts, obs_data, starts, params, 1e-6)
            np.testing.assert_allclose(a, b, rtol=1e-9, atol=1e-9)

    def test_backend_selection_env(self):
        assert _kernels.BACKEND in ("compiled", "fallback")
