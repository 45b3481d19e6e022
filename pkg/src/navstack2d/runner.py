"""Pipeline orchestration on a simulated clock.

One base tick drives every stage at its own rate, in a fixed order:
sensors -> filters -> plane segmentation -> maps -> odometry -> global plan
-> band optimization -> command -> world step. Mapping stages consume the
previous cycle's pose estimate; nothing reads state newer than its tick.
Runs are deterministic: re-running a scenario with the same seed produces a
byte-identical log.
"""

from __future__ import annotations

import json
import math
import os
import threading
from dataclasses import dataclass, field

import numpy as np

from . import costmap as cm
from .dstar import SUCCESS, UNREACHABLE, DStarLite, GridGraph, export_path_world
from .errors import OptimizationFailureError, ScenarioError, WindowMismatchError
from .geometry import Pose2, wrap_angle
from .loam import LoamOdometry
from .pointcloud import FilterConfig, PointCloud3, apply_filters, dump_cloud, fuse
from .segmentation import RansacConfig, fit_plane_ransac
from .sim.scenario import Scenario, TimedGoal
from .sim.sensors import SensorSpec, simulate_depth, simulate_lidar
from .sim.world import RobotState, step_robot
from .teb import PointObstacle, TebBand, TebConfig, extract_command, initialize_band, optimize
from .geometry import RigidTransform3

LOG_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class RateTable:
    """Stage rates; periods snap to the nearest whole number of base ticks."""

    base_tick: float = 0.005
    sensor_hz: float = 14.0
    local_hz: float = 10.0
    global_plan_hz: float = 5.0
    global_map_hz: float = 2.0
    control_period: float = 0.1

    def every(self, hz: float) -> int:
        return max(1, int(round(1.0 / (hz * self.base_tick))))

    @property
    def sensor_every(self) -> int:
        return self.every(self.sensor_hz)

    @property
    def local_every(self) -> int:
        return self.every(self.local_hz)

    @property
    def plan_every(self) -> int:
        return self.every(self.global_plan_hz)

    @property
    def global_map_every(self) -> int:
        return self.every(self.global_map_hz)


@dataclass(frozen=True)
class GoalSpec:
    pose: Pose2
    position_tolerance: float = 0.2
    heading_tolerance: float = 0.2

    def __post_init__(self):
        if self.position_tolerance <= 0 or self.heading_tolerance <= 0:
            raise ValueError("goal tolerances must be > 0")

    def reached_by(self, pose: Pose2) -> bool:
        if math.hypot(pose.x - self.pose.x, pose.y - self.pose.y) > self.position_tolerance:
            return False
        return abs(wrap_angle(pose.beta - self.pose.beta)) <= self.heading_tolerance


@dataclass
class RunLog:
    scenario_name: str
    status: str = "running"
    records: list[dict] = field(default_factory=list)

    def to_jsonl(self) -> str:
        lines = [
            json.dumps(rec, sort_keys=True, separators=(",", ":"), allow_nan=False)
            for rec in self.records
        ]
        return "\n".join(lines) + "\n"

    def events(self, kind: str | None = None) -> list[dict]:
        out = []
        for rec in self.records:
            for ev in rec.get("events", ()):
                if kind is None or ev["type"] == kind:
                    out.append({**ev, "t": rec["t"]})
        return out


GLOBAL_RESOLUTION = 0.1
LOCAL_RESOLUTION = 0.05
LOCAL_EXTENT = 4.0
MAP_MARGIN = 0.3
UNREACHABLE_GRACE = 5.0
BAND_OBSTACLE_REACH = 0.9
BAND_OBSTACLE_CAP = 60


class NavRunner:
    """Owns the world, the perception/planning stages, and the run log."""

    def __init__(
        self,
        scenario: Scenario,
        rates: RateTable = RateTable(),
        use_ground_truth: bool = False,
        dump_maps: str | None = None,
        dump_clouds: str | None = None,
    ):
        self.scenario = scenario
        self.rates = rates
        self.use_ground_truth = use_ground_truth
        self.dump_maps = dump_maps
        self.dump_clouds = dump_clouds

        self.world = scenario.make_world()
        self.robot = RobotState(scenario.robot_start)
        self.sensors = SensorSpec()
        self.noise_rng = np.random.Generator(np.random.PCG64(scenario.seed))

        self.filter_cfg = FilterConfig()
        self.ransac_cfg = RansacConfig(rng_seed=scenario.seed)
        # Gentler turn rate than the optimizer default: scan matching keeps a
        # tighter lock when inter-sweep rotation stays small.
        self.teb_cfg = TebConfig(omega_max=1.0)
        self.inflation = cm.InflationConfig()

        x0, y0, x1, y1 = scenario.bounds
        m = MAP_MARGIN
        width = int(math.ceil((x1 - x0 + 2 * m) / GLOBAL_RESOLUTION))
        height = int(math.ceil((y1 - y0 + 2 * m) / GLOBAL_RESOLUTION))
        self.global_map = cm.Costmap(
            cm.GridSpec(GLOBAL_RESOLUTION, x0 - m, y0 - m, width, height), cm.GLOBAL
        )
        self.local_map = cm.Costmap(
            cm.make_local_spec(scenario.robot_start, LOCAL_RESOLUTION, LOCAL_EXTENT), cm.LOCAL
        )

        self.odometry = LoamOdometry()
        self.start_pose = scenario.robot_start
        self.est_pose = scenario.robot_start

        self.pending_goals = sorted(scenario.goals, key=lambda g: g.issue_time)
        self.active_goal: GoalSpec | None = None
        self.final_goal_time = max((g.issue_time for g in scenario.goals), default=0.0)
        self.planner: DStarLite | None = None
        self._plan_cells: np.ndarray | None = None
        self.path_cells: list[tuple[int, int]] | None = None
        self.path_world: list[tuple[float, float]] | None = None
        self.pending_changes: set[tuple[int, int]] = set()
        self.unreachable_since: float | None = None

        self.latest_scan = None
        self.lidar_world: PointCloud3 | None = None
        self.depth_obstacles_world: PointCloud3 | None = None
        self.band: TebBand | None = None
        self.band_goal: tuple[float, float, float] | None = None
        self.cmd = (0.0, 0.0)

        self.tick_index = 0
        self.status = "running"
        self.log = RunLog(scenario.name)
        self.trail: list[tuple[float, float]] = []
        self._tick_events: list[dict] = []
        self._recent_events: list[dict] = []
        self._commands: list[dict] = []
        self._lock = threading.RLock()

    # ---- service entry points -------------------------------------------
    @property
    def t(self) -> float:
        return self.tick_index * self.rates.base_tick

    @property
    def done(self) -> bool:
        return self.status != "running"

    def submit_command(self, cmd: dict):
        """Queue an external command; it is applied at the next tick boundary."""
        with self._lock:
            self._commands.append(dict(cmd))

    def set_goal(self, pose: Pose2, at_time: float | None = None):
        """Replace the active goal; takes effect before the next plan cycle."""
        issue = self.t if at_time is None else at_time
        self.pending_goals.append(TimedGoal(pose, issue))
        self.pending_goals.sort(key=lambda g: g.issue_time)
        self.final_goal_time = max(self.final_goal_time, issue)

    # ---- pipeline stages --------------------------------------------------
    def _event(self, kind: str, **info):
        ev = {"type": kind, **info}
        self._tick_events.append(ev)
        self._recent_events.append({**ev, "t": self.t})
        del self._recent_events[:-30]

    def _apply_commands(self):
        with self._lock:
            cmds, self._commands = self._commands, []
        for c in cmds:
            kind = c.get("type")
            if kind == "set_goal":
                self.set_goal(Pose2(float(c["x"]), float(c["y"]), float(c.get("beta", 0.0))))
            elif kind == "obstacle_cmd":
                self._apply_obstacle_cmd(c)

    def _apply_obstacle_cmd(self, c: dict):
        action = c.get("action")
        oid = str(c.get("id", ""))
        x = float(c.get("x", 0.0))
        y = float(c.get("y", 0.0))
        from .sim.world import ObstacleSpec

        if action == "add":
            spec = ObstacleSpec(oid or f"ui{len(self.world.obstacles)}", "cylinder",
                                radius=float(c.get("radius", 0.15)), position=(x, y))
            self.world.obstacles.append(spec)
            self._event("obstacle-added", id=spec.obstacle_id)
        elif action == "move":
            for i, spec in enumerate(self.world.obstacles):
                if spec.obstacle_id == oid:
                    from dataclasses import replace

                    self.world.obstacles[i] = replace(spec, position=(x, y), waypoints=(), speed=0.0)
                    self._event("obstacle-moved", id=oid)
                    return
            self._event("error", message=f"no obstacle {oid!r}")

    def _sensor_stage(self):
        t = self.t
        scan, _cloud = simulate_lidar(
            self.world, self.robot.pose, t, self.sensors.lidar,
            self.noise_rng, self.scenario.noise_sigma,
        )
        self.latest_scan = scan
        self._depth_raw = [
            simulate_depth(self.world, self.robot.pose, t, cam, self.noise_rng, self.scenario.noise_sigma)
            for cam in self.sensors.cameras
        ]

    def _perception_stage(self):
        """Filters + plane segmentation on the depth clouds (robot frame)."""
        if self.latest_scan is None:
            return
        filtered = [apply_filters(c, self.filter_cfg) for c in self._depth_raw]
        transforms = {
            cam.name: RigidTransform3.from_xyz_yaw(0.0, 0.0, cam.height, cam.yaw_offset)
            for cam in self.sensors.cameras
        }
        fused = fuse(filtered, "base", transforms)
        if len(fused) >= 3:
            try:
                seg = fit_plane_ransac(fused, self._ransac_for_tick())
                obstacles_base = seg.obstacles
            except Exception:
                obstacles_base = fused
        else:
            obstacles_base = fused
        self.depth_obstacles_world = self._to_world(obstacles_base)
        lidar_base = PointCloud3(
            self._lidar_base_points(), "base", self.latest_scan.stamp
        )
        self.lidar_world = self._to_world(lidar_base)
        if self.dump_clouds:
            os.makedirs(self.dump_clouds, exist_ok=True)
            tag = f"{self.tick_index:06d}"
            with open(os.path.join(self.dump_clouds, f"fused_{tag}.txt"), "w") as f:
                f.write(dump_cloud(fused))
            with open(os.path.join(self.dump_clouds, f"obstacles_{tag}.txt"), "w") as f:
                f.write(dump_cloud(obstacles_base))

    def _ransac_for_tick(self) -> RansacConfig:
        # One deterministic sub-seed per cycle; replays stay bit-identical.
        mix = (self.scenario.seed * 1_000_003 + self.tick_index) % (2**63)
        return RansacConfig(
            distance_threshold=self.ransac_cfg.distance_threshold,
            alpha=self.ransac_cfg.alpha,
            inlier_prob=self.ransac_cfg.inlier_prob,
            rng_seed=mix,
        )

    def _lidar_base_points(self) -> np.ndarray:
        pts = self.latest_scan.all_points()
        if len(pts) == 0:
            return pts
        out = pts.copy()
        out[:, 2] += self.sensors.lidar.height
        return out

    def _to_world(self, cloud: PointCloud3) -> PointCloud3:
        pose = self.est_pose
        tf = RigidTransform3.from_xyz_yaw(pose.x, pose.y, 0.0, pose.beta)
        return PointCloud3(tf.apply(cloud.xyz) if len(cloud) else cloud.xyz, "map", cloud.stamp)

    def _global_map_stage(self):
        if self.lidar_world is None:
            return
        before = self.global_map.cells
        updated = cm.mark_obstacles(self.global_map, self.lidar_world)
        new_rows, new_cols = np.nonzero((updated.cells == cm.OCCUPIED) & (before != cm.OCCUPIED))
        if len(new_rows):
            cells = {(int(c), int(r)) for r, c in zip(new_rows, new_cols)}
            self.pending_changes |= cells
            self._event("obstacle-detected", cells=len(cells))
        self.global_map = updated
        if self.dump_maps:
            os.makedirs(self.dump_maps, exist_ok=True)
            tag = f"{self.tick_index:06d}"
            with open(os.path.join(self.dump_maps, f"global_{tag}.txt"), "w") as f:
                f.write(cm.dump_costmap(self.global_map))
            with open(os.path.join(self.dump_maps, f"local_{tag}.txt"), "w") as f:
                f.write(cm.dump_costmap(self.local_map))

    def _local_map_stage(self):
        spec = cm.make_local_spec(self.est_pose, LOCAL_RESOLUTION, LOCAL_EXTENT)
        fresh = cm.Costmap(spec, cm.LOCAL)
        if self.lidar_world is not None:
            fresh = cm.mark_obstacles(fresh, self.lidar_world)
        if self.depth_obstacles_world is not None:
            fresh = cm.mark_obstacles(fresh, self.depth_obstacles_world)
        self.local_map = cm.inflate(fresh, self.inflation)

    def _odometry_stage(self):
        if self.latest_scan is None:
            return
        if self.use_ground_truth:
            self.est_pose = self.robot.pose
            return
        odom = self.odometry.process(self.latest_scan)
        self.est_pose = self.start_pose.compose(odom)

    def _planning_cells(self) -> np.ndarray:
        """Configuration-space view of the global map: occupied cells dilated
        by the robot radius, so the planner cannot thread gaps narrower than
        the robot. The map itself stays two-state; this is collision
        geometry, not cost inflation."""
        from scipy.ndimage import distance_transform_edt

        occ = self.global_map.cells == cm.OCCUPIED
        if not occ.any():
            return self.global_map.cells.copy()
        d = distance_transform_edt(~occ) * self.global_map.spec.resolution
        out = self.global_map.cells.copy()
        out[d <= self.robot.radius] = cm.OCCUPIED
        return out

    def _goal_cell(self, pose: Pose2):
        return cm.world_to_cell(self.global_map.spec, pose.x, pose.y)

    def _free_cell_near(self, cell: tuple[int, int], graph: GridGraph) -> tuple[int, int]:
        if graph.traversable(cell):
            return cell
        best = None
        for dr in range(-4, 5):
            for dc in range(-4, 5):
                cand = (cell[0] + dc, cell[1] + dr)
                if graph.traversable(cand):
                    d = dc * dc + dr * dr
                    if best is None or d < best[0]:
                        best = (d, cand)
        return best[1] if best else cell

    def _plan_stage(self):
        plan_cells = self._planning_cells()
        changed = set(self.pending_changes)
        self.pending_changes = set()
        if self._plan_cells is not None:
            rows, cols = np.nonzero(plan_cells != self._plan_cells)
            changed |= {(int(c), int(r)) for r, c in zip(rows, cols)}
        self._plan_cells = plan_cells
        plan_view = cm.Costmap(self.global_map.spec, cm.GLOBAL, plan_cells)
        graph = GridGraph(plan_view)

        # Apply due goal updates (latest issue wins) atomically before planning.
        # Validation runs against the configuration-space view: a goal inside
        # an obstacle's unseen hollow interior is just as unreachable as one
        # on a marked cell.
        due = [g for g in self.pending_goals if g.issue_time <= self.t + 1e-12]
        if due:
            self.pending_goals = [g for g in self.pending_goals if g.issue_time > self.t + 1e-12]
            candidate = due[-1]
            try:
                blocked = not graph.traversable(self._goal_cell(candidate.pose))
            except Exception:
                blocked = True
            if blocked:
                self._event("goal-rejected", x=candidate.pose.x, y=candidate.pose.y)
            else:
                new_goal = GoalSpec(candidate.pose)
                if self.active_goal is None or new_goal.pose != self.active_goal.pose:
                    self.active_goal = new_goal
                    self.planner = None  # a new anchor invalidates g/rhs
                    self._event("goal-set", x=candidate.pose.x, y=candidate.pose.y)

        if self.active_goal is None:
            return
        start_cell = self._free_cell_near(self._goal_cell(self.est_pose), graph)
        goal_cell = self._goal_cell(self.active_goal.pose)
        prev_path = set(self.path_cells or ())

        if self.planner is None:
            self.planner = DStarLite(graph, start_cell, goal_cell)
            self._event("replan", cause="new-goal")
        else:
            self.planner.set_start(start_cell)
            self.planner.apply_cost_changes(changed, plan_view.cells)

        status = self.planner.compute_shortest_path()
        if status == UNREACHABLE:
            if self.unreachable_since is None:
                self.unreachable_since = self.t
                self._event("unreachable")
            self.path_cells = None
            self.path_world = None
            return
        self.unreachable_since = None
        self.path_cells = self.planner.extract_path()
        self.path_world = export_path_world(self.path_cells, self.global_map.spec)
        if changed and prev_path:
            corridor = set(prev_path)
            for col, row in prev_path:
                for dc in (-1, 0, 1):
                    for dr in (-1, 0, 1):
                        corridor.add((col + dc, row + dr))
            if corridor & changed:
                self._event("replan", cause="obstacle")

    def _band_obstacles(self, band: TebBand) -> list[PointObstacle]:
        occ = self.local_map.occupied_cells()
        if not occ:
            return []
        centers = np.array([self.local_map.spec.cell_center(c, r) for c, r in occ])
        band_xy = band.poses[:, :2]
        diff = centers[:, None, :] - band_xy[None, :, :]
        dists = np.sqrt((diff * diff).sum(axis=2)).min(axis=1)
        keep = [
            (float(d), row, col, center)
            for (col, row), center, d in zip(occ, centers, dists)
            if d <= BAND_OBSTACLE_REACH
        ]
        # Nearest cells first: when the cap bites it must trim the far side
        # of a wall run, not whichever obstacle sorts later.
        keep.sort(key=lambda item: (item[0], item[1], item[2]))
        return [PointObstacle(float(c[0]), float(c[1])) for _d, _r, _c, c in keep[:BAND_OBSTACLE_CAP]]

    def _teb_stage(self):
        if self.path_world is None or self.active_goal is None:
            return
        spec = self.local_map.spec
        center = (
            spec.origin_x + spec.width * spec.resolution / 2.0,
            spec.origin_y + spec.height * spec.resolution / 2.0,
        )
        half = spec.width * spec.resolution / 2.0
        try:
            seed = initialize_band(
                self.path_world, self.est_pose, self.teb_cfg, center, half,
                goal_pose=self.active_goal.pose, stamp=self.t,
            )
        except WindowMismatchError:
            return
        goal_key = (self.active_goal.pose.x, self.active_goal.pose.y, self.active_goal.pose.beta)
        band = None
        if self.band is not None and self.band_goal == goal_key:
            drift_n = math.hypot(
                self.band.poses[-1, 0] - seed.poses[-1, 0],
                self.band.poses[-1, 1] - seed.poses[-1, 1],
            )
            drift_1 = math.hypot(
                self.band.poses[0, 0] - self.est_pose.x,
                self.band.poses[0, 1] - self.est_pose.y,
            )
            if drift_n <= 0.6 and drift_1 <= 0.5:
                band = self._rebase_band(self.band, seed)
        if band is None:
            band = seed
        obstacles = self._band_obstacles(band)
        try:
            self.band = optimize(band, self.teb_cfg, obstacles)
            self.band.stamp = self.t
            self.band_goal = goal_key
        except OptimizationFailureError:
            self._event("teb-failure")

    def _rebase_band(self, band: TebBand, seed: TebBand) -> TebBand:
        """Warm start: drop passed poses, pin the first pose to the estimate."""
        poses = [band.poses[k].copy() for k in range(band.n)]
        dts = list(band.dts)
        est = (self.est_pose.x, self.est_pose.y)
        while len(poses) > 2 and math.hypot(poses[1][0] - est[0], poses[1][1] - est[1]) < 0.75 * self.teb_cfg.ref_spacing:
            del poses[0]
            merged = dts[0] + dts[1] if len(dts) > 1 else dts[0]
            del dts[0]
            if dts:
                dts[0] = min(merged, 2.0 * self.teb_cfg.dt_ref)
        poses[0] = np.array([self.est_pose.x, self.est_pose.y, self.est_pose.beta])
        poses[-1] = seed.poses[-1].copy()
        return TebBand(np.array(poses), np.array(dts), band.stamp)

    def _control_stage(self):
        if self.band is None:
            self.cmd = (0.0, 0.0)
            return
        self.cmd = extract_command(self.band, self.teb_cfg, self.rates.control_period, now=self.t)

    def _check_termination(self):
        if self.status != "running":
            return
        t = self.t
        if self.world.check_collision(self.robot.pose, t, self.robot.radius):
            self._event("collision")
            self.status = "collision"
            return
        if self.active_goal is not None and self.active_goal.reached_by(self.est_pose):
            no_future = not self.pending_goals
            self._event("goal-reached", x=self.active_goal.pose.x, y=self.active_goal.pose.y)
            if no_future:
                self.status = "goal-reached"
                return
            self.active_goal = None
            self.planner = None
            self.path_world = None
            self.path_cells = None
            self.band = None
        if self.unreachable_since is not None and t - self.unreachable_since > UNREACHABLE_GRACE:
            self.status = "unreachable"
            return
        if t >= self.scenario.duration:
            self.status = "timeout"

    def tick(self):
        """Advance one base tick: fire due stages in order, then step the world."""
        if self.done:
            return
        with self._lock:
            self._tick_events = []
            self._apply_commands()
            r = self.rates
            i = self.tick_index
            if i % r.sensor_every == 0:
                self._sensor_stage()
            if i % r.local_every == 0:
                # Odometry runs before the map stages: a sweep must be placed
                # into the maps with the pose estimate of its own timestamp,
                # otherwise every rotation smears phantom obstacles at range.
                self._odometry_stage()
                self._perception_stage()
            if i % r.global_map_every == 0:
                self._global_map_stage()
            if i % r.local_every == 0:
                self._local_map_stage()
            if i % r.plan_every == 0:
                self._plan_stage()
            if i % r.local_every == 0:
                self._teb_stage()
                self._control_stage()
                self.trail.append((self.est_pose.x, self.est_pose.y))

            self.robot = step_robot(self.robot, self.cmd[0], self.cmd[1], r.base_tick)
            self.tick_index += 1
            self._check_termination()
            self._record()

    def _record(self):
        rec = {
            "v": LOG_SCHEMA_VERSION,
            "t": round(self.t, 9),
            "true": [round(self.robot.pose.x, 9), round(self.robot.pose.y, 9), round(self.robot.pose.beta, 9)],
            "est": [round(self.est_pose.x, 9), round(self.est_pose.y, 9), round(self.est_pose.beta, 9)],
            "goal": (
                [self.active_goal.pose.x, self.active_goal.pose.y, self.active_goal.pose.beta]
                if self.active_goal
                else None
            ),
            "cmd": [round(self.cmd[0], 9), round(self.cmd[1], 9)],
            "status": self.status,
        }
        if self._tick_events:
            rec["events"] = self._tick_events
        self.log.records.append(rec)
        self.log.status = self.status

    def run(self) -> RunLog:
        while not self.done:
            self.tick()
        return self.log

    # ---- snapshots for the state-stream service ---------------------------
    def snapshot(self) -> dict:
        with self._lock:
            band = None
            if self.band is not None:
                band = [
                    [
                        round(float(self.band.poses[k, 0]), 6),
                        round(float(self.band.poses[k, 1]), 6),
                        round(float(self.band.poses[k, 2]), 6),
                        round(float(self.band.dts[k]) if k < self.band.n - 1 else 0.0, 6),
                    ]
                    for k in range(self.band.n)
                ]
            obstacles = []
            for spec in self.world.obstacles:
                x, y = spec.position_at(self.t)
                entry = {"id": spec.obstacle_id, "shape": spec.shape, "x": round(x, 6), "y": round(y, 6)}
                if spec.shape == "cylinder":
                    entry["radius"] = spec.radius
                else:
                    entry["w"], entry["h"] = spec.size
                obstacles.append(entry)
            return {
                "type": "snapshot",
                "v": LOG_SCHEMA_VERSION,
                "t": round(self.t, 6),
                "status": self.status,
                "pose": [round(self.est_pose.x, 6), round(self.est_pose.y, 6), round(self.est_pose.beta, 6)],
                "true_pose": [round(self.robot.pose.x, 6), round(self.robot.pose.y, 6), round(self.robot.pose.beta, 6)],
                "goal": (
                    [self.active_goal.pose.x, self.active_goal.pose.y, self.active_goal.pose.beta]
                    if self.active_goal
                    else None
                ),
                "global_map": cm.dump_costmap(self.global_map),
                "local_map": cm.dump_costmap(self.local_map),
                "global_path": [[round(x, 6), round(y, 6)] for x, y in (self.path_world or [])],
                "band": band,
                "obstacles": obstacles,
                "trail": [[round(x, 6), round(y, 6)] for x, y in self.trail[-400:]],
                "events": list(self._recent_events),
            }


def run_scenario(
    scenario: Scenario,
    rates: RateTable = RateTable(),
    **kwargs,
) -> RunLog:
    return NavRunner(scenario, rates, **kwargs).run()
