import math

import numpy as np
import pytest

from navstack2d.errors import DegenerateInputError
from navstack2d.pointcloud import PointCloud3
from navstack2d.segmentation import (
    PlaneModel,
    RansacConfig,
    fit_plane_ransac,
    iteration_count,
    point_plane_abs_distance,
)


class TestPlaneModel:
    def test_normalized_on_construction(self):
        m = PlaneModel(0, 0, 2, 4)
        assert (m.a, m.b, m.c, m.d) == (0, 0, 1, 2)

    def test_sign_canonicalized(self):
        m = PlaneModel(0, 0, -1, 0.5)
        assert m.c == 1 and m.d == -0.5

    def test_zero_normal_rejected(self):
        with pytest.raises(ValueError):
            PlaneModel(0, 0, 0, 1)


class TestPointPlaneDistance:
    def test_axis_plane(self):
        assert point_plane_abs_distance((1, 2, 3), PlaneModel(0, 0, 1, 0)) == pytest.approx(3.0)

    def test_on_plane(self):
        assert point_plane_abs_distance((5, -2, 0), PlaneModel(0, 0, 1, 0)) == pytest.approx(0.0)

    def test_diagonal_plane(self):
        m = PlaneModel(1, 1, 1, 0)
        # direct formula: |(1+1+1)/sqrt(3)| = sqrt(3)
        assert point_plane_abs_distance((1, 1, 1), m) == pytest.approx(math.sqrt(3.0))


class TestIterationCount:
    def test_spot_value_high_inlier(self):
        assert iteration_count(0.99, 0.8) == 6

    def test_spot_value_even_split(self):
        assert iteration_count(0.9, 0.5) == 17

    def test_clamped_to_one(self):
        assert iteration_count(0.99, 0.999999) == 1

    def test_degenerate_probabilities_rejected(self):
        for alpha, u in ((0.0, 0.5), (1.0, 0.5), (0.5, 0.0), (0.5, 1.0)):
            with pytest.raises(ValueError):
                iteration_count(alpha, u)


def planted_cloud(rng, n_ground=100, n_obstacle=10, noise=0.0, obstacle_z=(1.0, 1.0)):
    gx = rng.uniform(-1, 1, size=(n_ground, 2))
    gz = rng.normal(0.0, noise, size=n_ground) if noise else np.zeros(n_ground)
    ground = np.column_stack([gx, gz])
    ox = rng.uniform(-1, 1, size=(n_obstacle, 2))
    oz = rng.uniform(obstacle_z[0], obstacle_z[1], size=n_obstacle)
    obstacle = np.column_stack([ox, oz])
    return PointCloud3(np.vstack([ground, obstacle])), n_ground


class TestRansac:
    def test_planted_plane_exact_split(self):
        rng = np.random.default_rng(42)
        cloud, n_ground = planted_cloud(rng)
        res = fit_plane_ransac(cloud, RansacConfig(distance_threshold=0.05, rng_seed=1))
        assert len(res.ground) == n_ground
        assert len(res.obstacles) == 10
        np.testing.assert_allclose(res.ground.xyz, cloud.xyz[:n_ground])
        assert abs(res.plane.c) > 0.999

    def test_all_coplanar_no_obstacles(self):
        rng = np.random.default_rng(2)
        xy = rng.uniform(-1, 1, size=(50, 2))
        cloud = PointCloud3(np.column_stack([xy, np.full(50, 0.3)]))
        res = fit_plane_ransac(cloud, RansacConfig(rng_seed=3))
        assert len(res.obstacles) == 0
        assert len(res.ground) == 50

    def test_noisy_ground_with_box(self):
        rng = np.random.default_rng(7)
        gx = rng.uniform(-1, 1, size=(200, 2))
        ground = np.column_stack([gx, rng.normal(0, 0.01, 200)])
        bx = rng.uniform(-0.3, 0.3, size=(30, 2))
        box = np.column_stack([bx, rng.uniform(0.2, 0.5, 30)])
        cloud = PointCloud3(np.vstack([ground, box]))
        res = fit_plane_ransac(cloud, RansacConfig(distance_threshold=0.03, rng_seed=11))
        ground_set = {tuple(p) for p in res.ground.xyz}
        planted_ground_hits = sum(tuple(p) in ground_set for p in ground)
        box_hits = sum(tuple(p) in ground_set for p in box)
        assert planted_ground_hits >= 0.99 * 200
        assert box_hits == 0

    def test_determinism(self):
        rng = np.random.default_rng(5)
        cloud, _ = planted_cloud(rng, noise=0.01)
        cfg = RansacConfig(rng_seed=99)
        a = fit_plane_ransac(cloud, cfg)
        b = fit_plane_ransac(cloud, cfg)
        assert (a.plane.a, a.plane.b, a.plane.c, a.plane.d) == (
            b.plane.a,
            b.plane.b,
            b.plane.c,
            b.plane.d,
        )
        np.testing.assert_array_equal(a.ground.xyz, b.ground.xyz)

    def test_partition_property(self):
        rng = np.random.default_rng(17)
        for seed in range(5):
            cloud, _ = planted_cloud(rng, noise=0.02)
            res = fit_plane_ransac(cloud, RansacConfig(rng_seed=seed))
            assert len(res.ground) + len(res.obstacles) == len(cloud)

    def test_inliers_reproducible_from_model(self):
        rng = np.random.default_rng(23)
        cloud, _ = planted_cloud(rng, noise=0.01)
        cfg = RansacConfig(distance_threshold=0.03, rng_seed=4)
        res = fit_plane_ransac(cloud, cfg)
        recomputed = [
            tuple(p)
            for p in cloud.xyz
            if point_plane_abs_distance(p, res.plane) < cfg.distance_threshold
        ]
        assert recomputed == [tuple(p) for p in res.ground.xyz]

    def test_normal_within_two_degrees(self):
        for seed in range(10):
            rng = np.random.default_rng(100 + seed)
            cloud, _ = planted_cloud(rng, n_ground=200, noise=0.01, obstacle_z=(0.3, 0.8))
            res = fit_plane_ransac(cloud, RansacConfig(rng_seed=seed))
            angle = math.degrees(math.acos(min(1.0, res.plane.c)))
            assert angle < 2.0

    def test_too_few_points(self):
        with pytest.raises(DegenerateInputError):
            fit_plane_ransac(PointCloud3(np.zeros((2, 3))), RansacConfig())

    def test_all_collinear_degenerate(self):
        pts = np.column_stack([np.linspace(0, 1, 30), np.zeros(30), np.zeros(30)])
        with pytest.raises(DegenerateInputError):
            fit_plane_ransac(PointCloud3(pts), RansacConfig(rng_seed=1))
