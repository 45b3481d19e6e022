"""Incremental shortest-path planning on an 8-connected costmap grid.

Search runs from the goal toward the start; the heuristic offset k_m keeps
previously computed values usable as the start cell moves between replans.
Cells are (col, row) tuples; costs are in cell units (1 axial, sqrt(2)
diagonal).
"""

from __future__ import annotations

import heapq
import math
from typing import Iterable, Iterator

from .costmap import OCCUPIED, Costmap
from .errors import InvalidStateError

INF = math.inf
SQRT2 = math.sqrt(2.0)

_MOVES = (
    (1, 0, 1.0),
    (-1, 0, 1.0),
    (0, 1, 1.0),
    (0, -1, 1.0),
    (1, 1, SQRT2),
    (1, -1, SQRT2),
    (-1, 1, SQRT2),
    (-1, -1, SQRT2),
)

UNREACHABLE = "unreachable"
SUCCESS = "success"


class GridGraph:
    """8-connected traversability view over a costmap's cell array.

    Diagonal moves are forbidden when either adjacent axial cell is occupied,
    so paths cannot squeeze between diagonally touching obstacles.
    """

    def __init__(self, costmap: Costmap):
        self.cells = costmap.cells
        self.width = costmap.spec.width
        self.height = costmap.spec.height

    def in_bounds(self, s: tuple[int, int]) -> bool:
        return 0 <= s[0] < self.width and 0 <= s[1] < self.height

    def traversable(self, s: tuple[int, int]) -> bool:
        return self.in_bounds(s) and self.cells[s[1], s[0]] < OCCUPIED

    def edge_cost(self, a: tuple[int, int], b: tuple[int, int]) -> float:
        if not (self.traversable(a) and self.traversable(b)):
            return INF
        dc, dr = b[0] - a[0], b[1] - a[1]
        if dc and dr:
            if not (self.traversable((a[0] + dc, a[1])) and self.traversable((a[0], a[1] + dr))):
                return INF
            return SQRT2
        return 1.0

    def neighbors(self, s: tuple[int, int]) -> Iterator[tuple[int, int]]:
        for dc, dr, _ in _MOVES:
            t = (s[0] + dc, s[1] + dr)
            if self.in_bounds(t):
                yield t


def heuristic(a: tuple[int, int], b: tuple[int, int]) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1])


class DStarLite:
    """Planner state: g/rhs maps, priority queue, and the k_m offset."""

    def __init__(self, graph: GridGraph, start: tuple[int, int], goal: tuple[int, int]):
        self.graph = graph
        self.s_start = start
        self.s_goal = goal
        self.s_last = start
        self.km = 0.0
        self.g: dict[tuple[int, int], float] = {}
        self.rhs: dict[tuple[int, int], float] = {goal: 0.0}
        self._heap: list[tuple[float, float, int, tuple[int, int]]] = []
        self._queued: dict[tuple[int, int], tuple[float, float]] = {}
        self._counter = 0
        self._status: str | None = None
        self._insert(goal, self.calculate_key(goal))

    # -- queue plumbing (lazy deletion) --
    def _insert(self, s, key):
        self._queued[s] = key
        self._counter += 1
        heapq.heappush(self._heap, (key[0], key[1], self._counter, s))

    def _remove(self, s):
        self._queued.pop(s, None)

    def _top(self):
        while self._heap:
            k1, k2, _, s = self._heap[0]
            current = self._queued.get(s)
            if current is None or current != (k1, k2):
                heapq.heappop(self._heap)
                continue
            return (k1, k2), s
        return None, None

    def calculate_key(self, s) -> tuple[float, float]:
        v = min(self.g.get(s, INF), self.rhs.get(s, INF))
        return (v + heuristic(s, self.s_start) + self.km, v)

    def update_vertex(self, u):
        if u != self.s_goal:
            best = INF
            for s2 in self.graph.neighbors(u):
                c = self.graph.edge_cost(u, s2)
                if c < INF:
                    v = self.g.get(s2, INF) + c
                    if v < best:
                        best = v
            self.rhs[u] = best
        if self.g.get(u, INF) != self.rhs.get(u, INF):
            self._insert(u, self.calculate_key(u))
        else:
            self._remove(u)

    def compute_shortest_path(self) -> str:
        start = self.s_start
        while True:
            top_key, u = self._top()
            start_key = self.calculate_key(start)
            start_consistent = self.g.get(start, INF) == self.rhs.get(start, INF)
            # Keys up to the start key plus a float-noise margin are processed:
            # cells on a shortest path can tie the start key exactly (Euclidean
            # heuristic, sqrt(2) edges) but land an ulp off after summation,
            # and a stale tied cell would derail path extraction.
            if top_key is None or (
                start_consistent
                and top_key > (start_key[0] + 1e-9, start_key[1] + 1e-9)
            ):
                break
            k_old = top_key
            k_new = self.calculate_key(u)
            if k_old < k_new:
                self._remove(u)
                self._insert(u, k_new)
                continue
            g_u = self.g.get(u, INF)
            rhs_u = self.rhs.get(u, INF)
            if g_u > rhs_u:
                self.g[u] = rhs_u
                self._remove(u)
                for s in self.graph.neighbors(u):
                    self.update_vertex(s)
            else:
                self.g[u] = INF
                for s in self.graph.neighbors(u):
                    self.update_vertex(s)
                self.update_vertex(u)
        self._status = SUCCESS if self.rhs.get(start, INF) < INF else UNREACHABLE
        return self._status

    def set_start(self, start: tuple[int, int]):
        """Move the search anchor as the robot advances; folds the heuristic
        drift into k_m instead of reordering the queue."""
        if start == self.s_start:
            return
        self.km += heuristic(self.s_last, start)
        self.s_last = start
        self.s_start = start
        self._status = None

    def apply_cost_changes(self, changed_cells: Iterable[tuple[int, int]], cells_array=None):
        """Re-anchor after map edits: every vertex incident to an edge whose
        cost may have changed (the cell and its 8 neighbors) is recomputed."""
        if cells_array is not None:
            self.graph.cells = cells_array
        self.km += heuristic(self.s_last, self.s_start)
        self.s_last = self.s_start
        touched = set()
        for cell in changed_cells:
            touched.add(cell)
            touched.update(self.graph.neighbors(cell))
        for u in touched:
            self.update_vertex(u)
        self._status = None

    def replan(self) -> str:
        return self.compute_shortest_path()

    def path_cost(self) -> float:
        return self.g.get(self.s_start, INF)

    def extract_path(self) -> list[tuple[int, int]]:
        """Greedy descent from start: next cell minimizes c(s, s') + g(s'),
        ties by smallest linear cell index."""
        if self._status != SUCCESS:
            raise InvalidStateError("extract_path requires a successful compute_shortest_path")
        path = [self.s_start]
        s = self.s_start
        limit = self.graph.width * self.graph.height + 1
        while s != self.s_goal:
            best = None
            for s2 in self.graph.neighbors(s):
                c = self.graph.edge_cost(s, s2)
                if c == INF:
                    continue
                v = c + self.g.get(s2, INF)
                idx = s2[1] * self.graph.width + s2[0]
                if best is None or (v, idx) < best[:2]:
                    best = (v, idx, s2)
            if best is None or not math.isfinite(best[0]):
                raise InvalidStateError("path descent hit a dead end; stale plan")
            s = best[2]
            path.append(s)
            if len(path) > limit:
                raise InvalidStateError("path extraction exceeded the cell budget")
        return path


def export_path_world(path: list[tuple[int, int]], spec) -> list[tuple[float, float]]:
    """Waypoints as world coordinates at cell centers."""
    return [spec.cell_center(c, r) for c, r in path]


def dump_path(path_world: list[tuple[float, float]]) -> str:
    return "".join(f"{x:.6f} {y:.6f}\n" for x, y in path_world)
