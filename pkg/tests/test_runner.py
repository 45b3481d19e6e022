import json
import math

import numpy as np
import pytest

from navstack2d.geometry import Pose2
from navstack2d.runner import GoalSpec, NavRunner, RateTable, run_scenario
from navstack2d.sim import parse_scenario

SMALL_WORLD = """
name = tiny
bounds = -2 -2 2 2
walls = true
wall_height = 1.5
seed = 3
duration = 20
robot_start = -1.4 -1.4 0.0
goal = 1.4 1.4 0.0 @ 0.0

[obstacle c1]
shape = cylinder
radius = 0.15
height = 1.0
position = 0.0 0.0
"""


@pytest.fixture(scope="module")
def finished_run():
    sc = parse_scenario(SMALL_WORLD)
    runner = NavRunner(sc)
    log = runner.run()
    return sc, runner, log


class TestRateTable:
    def test_periods_commensurate_with_base_tick(self):
        r = RateTable()
        assert r.sensor_every == 14    # 0.07 s, ~14.3 Hz
        assert r.local_every == 20     # 0.1 s
        assert r.plan_every == 40      # 0.2 s
        assert r.global_map_every == 100  # 0.5 s

    def test_one_second_stage_counts(self):
        sc = parse_scenario(SMALL_WORLD)
        runner = NavRunner(sc)
        counts = {"local": 0, "plan": 0, "global": 0}
        orig_local = runner._local_map_stage
        orig_plan = runner._plan_stage
        orig_global = runner._global_map_stage
        runner._local_map_stage = lambda: (counts.__setitem__("local", counts["local"] + 1), orig_local())
        runner._plan_stage = lambda: (counts.__setitem__("plan", counts["plan"] + 1), orig_plan())
        runner._global_map_stage = lambda: (counts.__setitem__("global", counts["global"] + 1), orig_global())
        for _ in range(200):  # exactly 1 s of simulated time
            runner.tick()
        assert counts["local"] == 10
        assert counts["plan"] == 5
        assert counts["global"] == 2


class TestGoalSpec:
    def test_defaults(self):
        g = GoalSpec(Pose2(1, 2, 0.3))
        assert g.position_tolerance == pytest.approx(0.2)
        assert g.heading_tolerance == pytest.approx(0.2)

    def test_reached(self):
        g = GoalSpec(Pose2(1, 1, 0.0))
        assert g.reached_by(Pose2(1.1, 1.0, 0.1))
        assert not g.reached_by(Pose2(1.3, 1.0, 0.0))
        assert not g.reached_by(Pose2(1.0, 1.0, 0.5))


class TestRun(object):
    def test_reaches_goal_without_collision(self, finished_run):
        _sc, runner, log = finished_run
        assert log.status == "goal-reached"
        assert log.events("collision") == []
        goal = Pose2(1.4, 1.4, 0.0)
        assert math.hypot(runner.robot.pose.x - goal.x, runner.robot.pose.y - goal.y) < 0.25

    def test_timestamps_strictly_increasing(self, finished_run):
        _sc, _runner, log = finished_run
        ts = [rec["t"] for rec in log.records]
        assert all(b > a for a, b in zip(ts, ts[1:]))

    def test_log_schema(self, finished_run):
        _sc, _runner, log = finished_run
        rec = log.records[0]
        for key in ("v", "t", "true", "est", "goal", "cmd", "status"):
            assert key in rec
        for line in log.to_jsonl().splitlines()[:5]:
            json.loads(line)

    def test_estimate_tracks_truth(self, finished_run):
        _sc, _runner, log = finished_run
        worst = max(
            math.hypot(r["true"][0] - r["est"][0], r["true"][1] - r["est"][1])
            for r in log.records
        )
        assert worst < 0.3


class TestDeterminism:
    def test_byte_identical_logs(self):
        sc1 = parse_scenario(SMALL_WORLD)
        sc2 = parse_scenario(SMALL_WORLD)
        a = run_scenario(sc1).to_jsonl()
        b = run_scenario(sc2).to_jsonl()
        assert a == b

    def test_seed_changes_trace(self):
        sc1 = parse_scenario(SMALL_WORLD)
        sc2 = parse_scenario(SMALL_WORLD)
        sc2.seed = 99
        a = run_scenario(sc1).to_jsonl()
        b = run_scenario(sc2).to_jsonl()
        assert a != b


class TestGoalHandling:
    def test_goal_in_wall_rejected(self):
        sc = parse_scenario(SMALL_WORLD)
        runner = NavRunner(sc)
        for _ in range(300):
            runner.tick()
        runner.set_goal(Pose2(0.0, 0.0, 0.0))  # inside the cylinder
        for _ in range(80):
            runner.tick()
        rejections = runner.log.events("goal-rejected")
        assert rejections
        # previous goal retained
        assert runner.active_goal is not None
        assert runner.active_goal.pose.x == pytest.approx(1.4)

    def test_goal_at_current_pose_immediate(self):
        sc = parse_scenario(SMALL_WORLD)
        runner = NavRunner(sc)
        for _ in range(300):
            runner.tick()
        runner.set_goal(runner.est_pose)
        for _ in range(80):
            runner.tick()
        assert runner.log.events("goal-reached")

    def test_midrun_goal_switch_replans(self):
        sc = parse_scenario(SMALL_WORLD)
        runner = NavRunner(sc)
        for _ in range(400):
            runner.tick()
        path_before = list(runner.path_world or [])
        runner.submit_command({"type": "set_goal", "x": -1.4, "y": 1.4, "beta": 0.0})
        for _ in range(41):  # one full plan period
            runner.tick()
        assert runner.log.events("goal-set")
        assert runner.path_world is not None
        assert runner.path_world[-1] != pytest.approx(path_before[-1]) if path_before else True


class TestSnapshot:
    def test_snapshot_contents(self, finished_run):
        _sc, runner, _log = finished_run
        snap = runner.snapshot()
        assert snap["type"] == "snapshot"
        assert snap["global_map"].startswith("0.1,")
        assert isinstance(snap["local_map"], str)
        assert isinstance(snap["obstacles"], list)
        assert snap["obstacles"][0]["shape"] == "cylinder"
        assert isinstance(snap["trail"], list)

    def test_snapshot_json_serializable(self, finished_run):
        _sc, runner, _log = finished_run
        json.dumps(runner.snapshot())
