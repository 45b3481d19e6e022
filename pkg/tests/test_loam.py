import math

import numpy as np
import pytest

from navstack2d.errors import DegenerateCorrespondenceError, DegenerateGeometryError
from navstack2d.geometry import Pose2, RigidTransform3
from navstack2d.loam import (
    EdgeCorrespondence,
    LoamOdometry,
    OdomState,
    PlanarCorrespondence,
    Scan,
    accumulate,
    estimate_motion,
    extract_features,
    find_correspondences,
    point_to_line_distance,
    point_to_plane_distance,
    ring_smoothness,
    smoothness,
)

from oracles import random_rigid_transform

ROOM_HALF = 4.0  # square room, walls at +-4 m


def _room_wall_points(spacing=0.1):
    """World-fixed samples along the four walls, corners included, ordered
    counter-clockwise starting at (+4, -4)."""
    side = np.arange(-ROOM_HALF, ROOM_HALF, spacing)
    east = np.column_stack([np.full(len(side), ROOM_HALF), side])
    north = np.column_stack([-side, np.full(len(side), ROOM_HALF)])
    west = np.column_stack([np.full(len(side), -ROOM_HALF), -side])
    south = np.column_stack([side, np.full(len(side), -ROOM_HALF)])
    return np.vstack([east, north, west, south])


_WALL_XY = _room_wall_points()


def room_scan(pose: Pose2, ring_heights=(0.0, 0.1, 0.2, 0.3, 0.4), stamp=0.0):
    """Synthetic multi-ring sweep of the square room, points in sensor frame.

    Rings are horizontal slices of the walls at fixed heights; the wall
    sampling is world-fixed so corner points exist in every sweep.
    """
    c, s = math.cos(pose.beta), math.sin(pose.beta)
    dx = _WALL_XY[:, 0] - pose.x
    dy = _WALL_XY[:, 1] - pose.y
    local_x = c * dx + s * dy
    local_y = -s * dx + c * dy
    order = np.argsort(np.arctan2(local_y, local_x), kind="stable")
    rings = []
    for z in ring_heights:
        ring = np.column_stack([local_x[order], local_y[order], np.full(len(order), z)])
        rings.append(ring)
    return Scan(rings, stamp=stamp)


class TestSmoothness:
    def test_collinear_interior_zero(self):
        ring = np.column_stack([np.linspace(1, 2, 21), np.full(21, 2.0), np.zeros(21)])
        assert smoothness(ring, 10, 5) == pytest.approx(0.0, abs=1e-12)

    def test_boundary_skipped(self):
        ring = np.random.default_rng(0).normal(size=(20, 3)) + 5
        assert smoothness(ring, 2, 5) is None
        assert smoothness(ring, 17, 5) is None

    def test_corner_exceeds_flat(self):
        # L-shaped wall: corner at index 20.
        xs = np.linspace(2.0, 1.0, 21)
        wall_a = np.column_stack([xs, np.full(21, 1.0), np.zeros(21)])
        ys = np.linspace(1.0, 2.0, 21)[1:]
        wall_b = np.column_stack([np.full(20, 1.0), ys, np.zeros(20)])
        ring = np.vstack([wall_a, wall_b])
        c = ring_smoothness(ring, 5)
        corner = c[20]
        flats = np.concatenate([c[7:15], c[26:34]])
        assert corner > flats.max() * 3

    def test_scale_invariance(self):
        rng = np.random.default_rng(1)
        ring = rng.uniform(1, 3, size=(30, 3))
        c1 = ring_smoothness(ring, 5)
        c2 = ring_smoothness(2.0 * ring, 5)
        np.testing.assert_allclose(c1[5:-5], c2[5:-5], rtol=1e-12)

    def test_matches_scalar_variant(self):
        rng = np.random.default_rng(2)
        ring = rng.uniform(1, 3, size=(25, 3))
        vec = ring_smoothness(ring, 5)
        for i in range(5, 20):
            assert vec[i] == pytest.approx(smoothness(ring, i, 5), rel=1e-12)


class TestExtractFeatures:
    def test_empty_ring(self):
        fs = extract_features(Scan([np.empty((0, 3))]))
        assert fs.edges == [] and fs.planars == []

    def test_flat_wall_planars_near_zero(self):
        n = 80
        xs = np.linspace(-2, 2, n)
        ring = np.column_stack([xs, np.full(n, 3.0), np.zeros(n)])
        fs = extract_features(Scan([ring]))
        assert all(f.smoothness < 1e-6 for f in fs.planars)

    def test_budget_limits(self):
        scan = room_scan(Pose2(0.5, -0.3, 0.2))
        fs = extract_features(scan)
        per_bucket: dict = {}
        for f in fs.edges:
            per_bucket.setdefault(("e", f.ring, f.index // 60), 0)
        for ring_id in range(len(scan.rings)):
            edges = [f for f in fs.edges if f.ring == ring_id]
            planars = [f for f in fs.planars if f.ring == ring_id]
            assert len(edges) <= 2 * 4
            assert len(planars) <= 4 * 4

    def test_room_corners_found(self):
        scan = room_scan(Pose2(0, 0, 0))
        fs = extract_features(scan)
        ring = scan.rings[2]
        corner_azimuths = {math.pi / 4, 3 * math.pi / 4, -math.pi / 4, -3 * math.pi / 4}
        edge_points = [f.point for f in fs.edges if f.ring == 2]
        hits = 0
        for p in edge_points:
            az = math.atan2(p[1], p[0])
            if min(abs(az - ca) for ca in corner_azimuths) < 0.1:
                hits += 1
        assert hits >= 3

    def test_edge_smoothness_dominates_planars(self):
        scan = room_scan(Pose2(0.4, 0.1, 0.0))
        fs = extract_features(scan)
        for ring_id in range(len(scan.rings)):
            for sub in range(4):
                es = [f.smoothness for f in fs.edges if f.ring == ring_id]
                ps = [f.smoothness for f in fs.planars if f.ring == ring_id]
                if es and ps:
                    assert min(es) >= max(ps) - 1e-12


class TestDistances:
    def test_point_to_line_unit(self):
        assert point_to_line_distance((0, 1, 0), (0, 0, 0), (1, 0, 0)) == pytest.approx(1.0)

    def test_point_on_line(self):
        assert point_to_line_distance((0.5, 0, 0), (0, 0, 0), (1, 0, 0)) == pytest.approx(0.0)

    def test_point_to_line_derived(self):
        # sqrt(3^2 + 6^2) = sqrt(45)
        d = point_to_line_distance((2, 3, 6), (0, 0, 0), (1, 0, 0))
        assert d == pytest.approx(math.sqrt(45.0))

    def test_degenerate_line(self):
        with pytest.raises(DegenerateCorrespondenceError):
            point_to_line_distance((0, 1, 0), (1, 1, 1), (1, 1, 1))

    def test_point_to_plane_unit(self):
        assert point_to_plane_distance((0, 0, 1), (0, 0, 0), (1, 0, 0), (0, 1, 0)) == pytest.approx(1.0)

    def test_point_in_plane(self):
        assert point_to_plane_distance((0.3, 0.4, 0), (0, 0, 0), (1, 0, 0), (0, 1, 0)) == pytest.approx(0.0)

    def test_point_to_plane_offset(self):
        assert point_to_plane_distance((1, 1, 2), (0, 0, 0), (1, 0, 0), (0, 1, 0)) == pytest.approx(2.0)

    def test_collinear_patch(self):
        with pytest.raises(DegenerateCorrespondenceError):
            point_to_plane_distance((0, 0, 1), (0, 0, 0), (1, 0, 0), (2, 0, 0))

    def test_rigid_invariance(self):
        rng = np.random.default_rng(31)
        for _ in range(20):
            p, j, l, m = rng.uniform(-2, 2, size=(4, 3))
            if np.linalg.norm(np.cross(j - l, j - m)) < 1e-3:
                continue
            R, t = random_rigid_transform(rng)
            tf = lambda v: R @ v + t
            d1 = point_to_line_distance(p, j, l)
            d2 = point_to_line_distance(tf(p), tf(j), tf(l))
            assert abs(d1 - d2) < 1e-9
            e1 = point_to_plane_distance(p, j, l, m)
            e2 = point_to_plane_distance(tf(p), tf(j), tf(l), tf(m))
            assert abs(e1 - e2) < 1e-9
            assert d1 >= 0 and e1 >= 0


class TestCorrespondences:
    def test_identical_scans_zero_distance(self):
        scan = room_scan(Pose2(0, 0, 0))
        fs = extract_features(scan)
        corrs = find_correspondences(fs, scan)
        assert len(corrs) >= 6
        for c in corrs:
            if isinstance(c, EdgeCorrespondence):
                assert point_to_line_distance(c.p, c.j, c.l) < 1e-9
            else:
                assert point_to_plane_distance(c.p, c.j, c.l, c.m) < 1e-9

    def test_shifted_wall_planar_residual(self):
        # Single wall at y = 3, prev shifted 0.1 m toward it along the normal.
        n = 120
        xs = np.linspace(-2, 2, n)
        rings_new = []
        rings_prev = []
        for z in (0.0, 0.1):
            rings_new.append(np.column_stack([xs, np.full(n, 3.0), np.full(n, z)]))
            rings_prev.append(np.column_stack([xs, np.full(n, 2.9), np.full(n, z)]))
        fs = extract_features(Scan(rings_new))
        corrs = find_correspondences(fs, Scan(rings_prev))
        planars = [c for c in corrs if isinstance(c, PlanarCorrespondence)]
        assert planars
        for c in planars:
            assert point_to_plane_distance(c.p, c.j, c.l, c.m) == pytest.approx(0.1, abs=1e-9)

    def test_gate_drops_far_features(self):
        scan = room_scan(Pose2(0, 0, 0))
        fs = extract_features(scan)
        far = Scan([r + np.array([50.0, 0, 0]) for r in scan.rings])
        corrs = find_correspondences(fs, far, gate=0.5)
        assert corrs == []


def planted_motion_case(dx, dy, yaw):
    p1 = Pose2(0.3, -0.2, 0.1)
    delta = Pose2(dx, dy, yaw)
    p2 = p1.compose(delta)
    scan_prev = room_scan(p1, stamp=0.0)
    scan_new = room_scan(p2, stamp=0.1)
    fs = extract_features(scan_new)
    corrs = find_correspondences(fs, scan_prev)
    est = estimate_motion(corrs)
    return est, delta


class TestEstimateMotion:
    def test_identical_scans_identity(self):
        scan = room_scan(Pose2(0, 0, 0))
        fs = extract_features(scan)
        corrs = find_correspondences(fs, scan)
        est = estimate_motion(corrs)
        assert np.linalg.norm(est.translation) < 1e-9
        assert abs(est.yaw()) < 1e-9

    def test_planted_translation_and_yaw(self):
        est, delta = planted_motion_case(0.05, 0.0, 0.02)
        assert abs(est.translation[0] - delta.x) < 1e-3
        assert abs(est.translation[1] - delta.y) < 1e-3
        assert abs(est.yaw() - delta.beta) < 1e-3

    def test_planted_pure_yaw(self):
        est, delta = planted_motion_case(0.0, 0.0, 0.05)
        assert abs(est.yaw() - 0.05) < 1e-3
        assert np.linalg.norm(est.translation[:2]) < 1e-3

    def test_too_few_correspondences(self):
        corrs = [EdgeCorrespondence(np.zeros(3), np.array([1.0, 0, 0]), np.array([0, 1.0, 0]))]
        with pytest.raises(DegenerateGeometryError):
            estimate_motion(corrs)

    def test_parallel_directions_rejected(self):
        # All planar normals identical: motion along the wall unconstrained.
        corrs = []
        for i in range(8):
            x = float(i) * 0.3
            corrs.append(
                PlanarCorrespondence(
                    np.array([x, 2.0, 0.0]),
                    np.array([x, 2.0, 0.0]),
                    np.array([x + 0.1, 2.0, 0.0]),
                    np.array([x, 2.0, 0.1]),
                )
            )
        with pytest.raises(DegenerateGeometryError):
            estimate_motion(corrs)


class TestAccumulate:
    def test_identity_step(self):
        st = OdomState()
        out = accumulate(st, RigidTransform3.identity())
        assert np.allclose(out.pose.translation, 0)

    def test_two_steps_compose(self):
        st = OdomState()
        step = RigidTransform3.from_xyz_yaw(0.1, 0, 0, 0)
        out = accumulate(accumulate(st, step), step)
        assert out.pose.translation[0] == pytest.approx(0.2)

    def test_sequence_matches_product(self):
        rng = np.random.default_rng(12)
        steps = [
            RigidTransform3.from_xyz_yaw(*rng.uniform(-0.1, 0.1, size=3), rng.uniform(-0.2, 0.2))
            for _ in range(6)
        ]
        st = OdomState()
        for s in steps:
            st = accumulate(st, s)
        product = RigidTransform3.identity()
        for s in steps:
            product = product.compose(s)
        assert np.abs(st.pose.translation - product.translation).max() < 1e-12
        assert np.abs(st.pose.rotation - product.rotation).max() < 1e-12


class TestPipelineDrift:
    def test_straight_line_drift_under_one_percent(self):
        odo = LoamOdometry()
        start = Pose2(-0.5, 0.0, 0.0)
        for k in range(21):
            pose = Pose2(start.x + 0.05 * k, start.y, start.beta)
            odo.process(room_scan(pose, stamp=0.1 * k))
        est = odo.state.planar()
        # odometry frame starts at the first pose
        expected = Pose2(1.0, 0.0, 0.0)
        err = math.hypot(est.x - expected.x, est.y - expected.y)
        assert err < 0.01  # 1% of 1.0 m traveled
        assert odo.degenerate_count == 0

    def test_log_line_format(self):
        odo = LoamOdometry()
        odo.process(room_scan(Pose2(0, 0, 0), stamp=0.0))
        parts = odo.log_line().split()
        assert len(parts) == 4
        float(parts[0])
