import math

import numpy as np
import pytest

from navstack2d.costmap import GLOBAL, OCCUPIED, Costmap, GridSpec
from navstack2d.dstar import SUCCESS, UNREACHABLE, DStarLite, GridGraph, export_path_world
from navstack2d.errors import InvalidStateError

from oracles import dijkstra_grid


def grid_map(w, h, occupied=()):
    cells = np.zeros((h, w), dtype=np.uint8)
    for col, row in occupied:
        cells[row, col] = OCCUPIED
    return Costmap(GridSpec(0.1, 0.0, 0.0, w, h), GLOBAL, cells)


def fresh_planner(cm, start, goal):
    return DStarLite(GridGraph(cm), start, goal)


def path_cost_of(path):
    cost = 0.0
    for a, b in zip(path, path[1:]):
        cost += math.hypot(a[0] - b[0], a[1] - b[1])
    return cost


class TestBasics:
    def test_empty_3x3_diagonal(self):
        cm = grid_map(3, 3)
        p = fresh_planner(cm, (0, 0), (2, 2))
        assert p.compute_shortest_path() == SUCCESS
        assert p.path_cost() == pytest.approx(2 * math.sqrt(2), abs=1e-12)
        oracle = dijkstra_grid(cm.cells, (0, 0), (2, 2))
        assert abs(p.path_cost() - oracle) < 1e-9

    def test_start_equals_goal(self):
        cm = grid_map(4, 4)
        p = fresh_planner(cm, (1, 1), (1, 1))
        assert p.compute_shortest_path() == SUCCESS
        assert p.path_cost() == 0.0
        assert p.extract_path() == [(1, 1)]

    def test_enclosed_goal_unreachable(self):
        ring = [(1, 0), (0, 1), (1, 2), (2, 1), (0, 0), (2, 0), (0, 2), (2, 2)]
        cm = grid_map(5, 5, ring)
        p = fresh_planner(cm, (4, 4), (1, 1))
        assert p.compute_shortest_path() == UNREACHABLE

    def test_diagonal_corner_cut_forbidden(self):
        # Wall of two diagonal cells; squeezing between them is not allowed.
        cm = grid_map(3, 3, [(1, 0), (0, 1)])
        p = fresh_planner(cm, (0, 0), (2, 2))
        assert p.compute_shortest_path() == UNREACHABLE

    def test_wall_with_gap(self):
        wall = [(2, r) for r in range(5) if r != 3]
        cm = grid_map(5, 5, wall)
        p = fresh_planner(cm, (0, 0), (4, 0))
        assert p.compute_shortest_path() == SUCCESS
        path = p.extract_path()
        assert (2, 3) in path
        assert abs(path_cost_of(path) - dijkstra_grid(cm.cells, (0, 0), (4, 0))) < 1e-9


class TestKeys:
    def test_start_key_zero(self):
        cm = grid_map(3, 3)
        p = fresh_planner(cm, (2, 2), (0, 0))
        p.g[(2, 2)] = 0.0
        p.rhs[(2, 2)] = 0.0
        assert p.calculate_key((2, 2)) == (0.0, 0.0)

    def test_key_components(self):
        cm = grid_map(10, 10)
        p = fresh_planner(cm, (0, 0), (9, 9))
        s = (2, 0)
        p.g[s] = math.inf
        p.rhs[s] = 5.0
        assert p.calculate_key(s) == (7.0, 5.0)
        p.km += 3.0
        assert p.calculate_key(s) == (10.0, 5.0)

    def test_rhs_near_goal(self):
        cm = grid_map(5, 5)
        p = fresh_planner(cm, (0, 0), (2, 2))
        p.compute_shortest_path()
        assert p.rhs[(1, 2)] == pytest.approx(1.0)
        assert p.rhs[(1, 1)] == pytest.approx(math.sqrt(2))

    def test_walled_off_cell_infinite_rhs(self):
        ring = [(1, 0), (0, 1), (1, 2), (2, 1), (0, 0), (2, 0), (0, 2), (2, 2)]
        cm = grid_map(5, 5, ring)
        p = fresh_planner(cm, (4, 4), (3, 3))
        p.compute_shortest_path()
        p.update_vertex((1, 1))
        assert p.rhs.get((1, 1), math.inf) == math.inf


class TestPathExtraction:
    def test_pure_diagonal_5x5(self):
        cm = grid_map(5, 5)
        p = fresh_planner(cm, (0, 0), (4, 4))
        p.compute_shortest_path()
        path = p.extract_path()
        assert len(path) == 5
        assert path[0] == (0, 0) and path[-1] == (4, 4)
        assert abs(path_cost_of(path) - dijkstra_grid(cm.cells, (0, 0), (4, 4))) < 1e-9

    def test_extract_before_compute_rejected(self):
        cm = grid_map(3, 3)
        p = fresh_planner(cm, (0, 0), (2, 2))
        with pytest.raises(InvalidStateError):
            p.extract_path()

    def test_world_export_cell_centers(self):
        cm = grid_map(3, 3)
        p = fresh_planner(cm, (0, 0), (1, 1))
        p.compute_shortest_path()
        world = export_path_world(p.extract_path(), cm.spec)
        assert world[0] == pytest.approx((0.05, 0.05))
        assert world[-1] == pytest.approx((0.15, 0.15))


def random_world(rng, w=20, h=20, density=0.2):
    cells = np.zeros((h, w), dtype=np.uint8)
    mask = rng.random((h, w)) < density
    cells[mask] = OCCUPIED
    cells[0, 0] = 0
    cells[h - 1, w - 1] = 0
    return cells


class TestOptimality:
    def test_matches_dijkstra_on_random_maps(self):
        for seed in range(25):
            rng = np.random.default_rng(seed)
            cells = random_world(rng)
            cm = Costmap(GridSpec(0.1, 0.0, 0.0, 20, 20), GLOBAL, cells)
            start, goal = (0, 0), (19, 19)
            p = fresh_planner(cm, start, goal)
            status = p.compute_shortest_path()
            oracle = dijkstra_grid(cells, start, goal)
            if status == UNREACHABLE:
                assert oracle == math.inf
            else:
                assert abs(p.path_cost() - oracle) < 1e-9
                assert abs(path_cost_of(p.extract_path()) - oracle) < 1e-9

    def test_no_expanded_cell_occupied(self):
        rng = np.random.default_rng(3)
        cells = random_world(rng)
        cm = Costmap(GridSpec(0.1, 0.0, 0.0, 20, 20), GLOBAL, cells)
        p = fresh_planner(cm, (0, 0), (19, 19))
        p.compute_shortest_path()
        for (col, row), val in p.g.items():
            if val < math.inf:
                assert cells[row, col] != OCCUPIED

    def test_heuristic_admissible(self):
        rng = np.random.default_rng(4)
        cells = random_world(rng, density=0.1)
        cm = Costmap(GridSpec(0.1, 0.0, 0.0, 20, 20), GLOBAL, cells)
        start = (0, 0)
        p = fresh_planner(cm, start, (19, 19))
        p.compute_shortest_path()
        # true distance from s to start >= euclidean heuristic
        for col in range(20):
            for row in range(20):
                s = (col, row)
                d = dijkstra_grid(cells, s, start)
                if d < math.inf:
                    assert math.hypot(col - start[0], row - start[1]) <= d + 1e-9


class TestIncremental:
    def test_obstacle_on_path_replan_equals_fresh(self):
        cm = grid_map(10, 10)
        p = fresh_planner(cm, (0, 0), (9, 9))
        p.compute_shortest_path()
        path = p.extract_path()
        block = path[len(path) // 2]
        cm.cells[block[1], block[0]] = OCCUPIED
        p.apply_cost_changes([block])
        assert p.replan() == SUCCESS
        oracle = dijkstra_grid(cm.cells, (0, 0), (9, 9))
        assert abs(p.path_cost() - oracle) < 1e-9

    def test_irrelevant_change_same_cost(self):
        cm = grid_map(20, 20)
        p = fresh_planner(cm, (0, 0), (5, 5))
        p.compute_shortest_path()
        before = p.path_cost()
        cm.cells[19, 19] = OCCUPIED
        p.apply_cost_changes([(19, 19)])
        p.replan()
        assert p.path_cost() == pytest.approx(before, abs=1e-12)

    def test_moving_start_keeps_optimality(self):
        for seed in range(10):
            rng = np.random.default_rng(100 + seed)
            cells = random_world(rng, density=0.15)
            cm = Costmap(GridSpec(0.1, 0.0, 0.0, 20, 20), GLOBAL, cells)
            p = fresh_planner(cm, (0, 0), (19, 19))
            if p.compute_shortest_path() == UNREACHABLE:
                continue
            path = p.extract_path()
            if len(path) < 5:
                continue
            km_before = p.km
            p.set_start(path[3])
            p.apply_cost_changes([])
            assert p.km > km_before
            p.replan()
            oracle = dijkstra_grid(cells, path[3], (19, 19))
            assert abs(p.path_cost() - oracle) < 1e-9

    def test_incremental_batches_match_scratch(self):
        for seed in range(10):
            rng = np.random.default_rng(200 + seed)
            cells = random_world(rng, density=0.15)
            cm = Costmap(GridSpec(0.1, 0.0, 0.0, 20, 20), GLOBAL, cells)
            p = fresh_planner(cm, (0, 0), (19, 19))
            p.compute_shortest_path()
            for batch in range(10):
                changes = []
                for _ in range(4):
                    col = int(rng.integers(0, 20))
                    row = int(rng.integers(0, 20))
                    if (col, row) in ((0, 0), (19, 19)):
                        continue
                    cells[row, col] = OCCUPIED if rng.random() < 0.5 else 0
                    changes.append((col, row))
                p.apply_cost_changes(changes)
                status = p.replan()
                oracle = dijkstra_grid(cells, (0, 0), (19, 19))
                if status == UNREACHABLE:
                    assert oracle == math.inf
                else:
                    assert abs(p.path_cost() - oracle) < 1e-9
