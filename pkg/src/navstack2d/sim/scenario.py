"""Scenario file parsing: world layout, robot start, goals, obstacles.

Plain-text key-value format with obstacle blocks:

    # navstack2d scenario v1
    bounds = -3.0 -3.0 3.0 3.0
    walls = true
    wall_height = 1.0
    seed = 42
    noise_sigma = 0.0
    duration = 50.0
    robot_start = -2.5 -2.5 0.0
    goal = 2.5 2.5 0.0 @ 0.0      # x y heading @ issue_time
    goal = -2.0 2.0 3.14 @ 20.0

    [obstacle c1]
    shape = cylinder
    radius = 0.15
    height = 1.0
    position = -1.5 0.0

    [obstacle d1]
    shape = cylinder
    radius = 0.15
    waypoints = 2.0 -2.0 ; 2.0 2.0
    speed = 0.4

Unknown keys are rejected so typos cannot silently change an experiment.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from ..errors import ScenarioError
from ..geometry import Pose2
from .world import ObstacleSpec, World


@dataclass(frozen=True)
class TimedGoal:
    pose: Pose2
    issue_time: float = 0.0


@dataclass
class Scenario:
    name: str = "unnamed"
    bounds: tuple[float, float, float, float] = (-3.0, -3.0, 3.0, 3.0)
    walls: bool = True
    wall_height: float = 1.0
    seed: int = 0
    noise_sigma: float = 0.0
    duration: float = 60.0
    robot_start: Pose2 = field(default_factory=Pose2)
    goals: list[TimedGoal] = field(default_factory=list)
    obstacles: list[ObstacleSpec] = field(default_factory=list)

    def make_world(self) -> World:
        return World(self.bounds, self.walls, self.wall_height, obstacles=list(self.obstacles))


_TOP_KEYS = {
    "name", "bounds", "walls", "wall_height", "seed", "noise_sigma",
    "duration", "robot_start", "goal",
}
_OBS_KEYS = {"shape", "radius", "size", "height", "position", "waypoints", "speed"}


def _floats(value: str, n: int, context: str) -> list[float]:
    parts = value.split()
    if len(parts) != n:
        raise ScenarioError(f"{context}: expected {n} numbers, got {value!r}")
    try:
        return [float(p) for p in parts]
    except ValueError as e:
        raise ScenarioError(f"{context}: {e}") from None


def parse_scenario(text: str) -> Scenario:
    sc = Scenario()
    sc.goals = []
    sc.obstacles = []
    current_block: dict | None = None
    block_id = ""

    def finish_block():
        nonlocal current_block
        if current_block is None:
            return
        b = current_block
        current_block = None
        shape = b.get("shape", "cylinder")
        waypoints: tuple = ()
        if "waypoints" in b:
            legs = [w for w in b["waypoints"].split(";") if w.strip()]
            waypoints = tuple(tuple(_floats(leg, 2, f"obstacle {block_id} waypoints")) for leg in legs)
        position = (0.0, 0.0)
        if "position" in b:
            position = tuple(_floats(b["position"], 2, f"obstacle {block_id} position"))
        size = (0.5, 0.5)
        if "size" in b:
            size = tuple(_floats(b["size"], 2, f"obstacle {block_id} size"))
        try:
            sc.obstacles.append(
                ObstacleSpec(
                    obstacle_id=block_id,
                    shape=shape,
                    radius=float(b.get("radius", 0.15)),
                    size=size,  # type: ignore[arg-type]
                    height=float(b.get("height", 1.0)),
                    position=position,  # type: ignore[arg-type]
                    waypoints=waypoints,
                    speed=float(b.get("speed", 0.0)),
                )
            )
        except ValueError as e:
            raise ScenarioError(f"obstacle {block_id}: {e}") from None

    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            finish_block()
            if not line.endswith("]") or not line[1:-1].startswith("obstacle"):
                raise ScenarioError(f"line {lineno}: bad block header {line!r}")
            block_id = line[1:-1].split(None, 1)[1].strip() if " " in line[1:-1] else f"obs{lineno}"
            current_block = {}
            continue
        if "=" not in line:
            raise ScenarioError(f"line {lineno}: expected key = value, got {line!r}")
        key, value = (p.strip() for p in line.split("=", 1))
        if current_block is not None:
            if key not in _OBS_KEYS:
                raise ScenarioError(f"line {lineno}: unknown obstacle key {key!r}")
            current_block[key] = value
            continue
        if key not in _TOP_KEYS:
            raise ScenarioError(f"line {lineno}: unknown key {key!r}")
        if key == "name":
            sc.name = value
        elif key == "bounds":
            sc.bounds = tuple(_floats(value, 4, "bounds"))  # type: ignore[assignment]
        elif key == "walls":
            sc.walls = value.lower() in ("true", "1", "yes")
        elif key == "wall_height":
            sc.wall_height = float(value)
        elif key == "seed":
            sc.seed = int(value)
        elif key == "noise_sigma":
            sc.noise_sigma = float(value)
        elif key == "duration":
            sc.duration = float(value)
        elif key == "robot_start":
            x, y, b = _floats(value, 3, "robot_start")
            sc.robot_start = Pose2(x, y, b)
        elif key == "goal":
            if "@" in value:
                pose_part, time_part = value.split("@", 1)
                issue = float(time_part)
            else:
                pose_part, issue = value, 0.0
            x, y, b = _floats(pose_part.strip(), 3, "goal")
            sc.goals.append(TimedGoal(Pose2(x, y, b), issue))
    finish_block()

    if not sc.goals:
        raise ScenarioError("scenario needs at least one goal")
    x0, y0, x1, y1 = sc.bounds
    if not (x0 < x1 and y0 < y1):
        raise ScenarioError("bounds must satisfy xmin < xmax and ymin < ymax")
    return sc


def load_scenario(path) -> Scenario:
    with open(path, "r", encoding="utf-8") as f:
        sc = parse_scenario(f.read())
    return sc


def dump_scenario(sc: Scenario) -> str:
    lines = [
        "# navstack2d scenario v1",
        f"name = {sc.name}",
        "bounds = " + " ".join(f"{v:g}" for v in sc.bounds),
        f"walls = {'true' if sc.walls else 'false'}",
        f"wall_height = {sc.wall_height:g}",
        f"seed = {sc.seed}",
        f"noise_sigma = {sc.noise_sigma:g}",
        f"duration = {sc.duration:g}",
        f"robot_start = {sc.robot_start.x:g} {sc.robot_start.y:g} {sc.robot_start.beta:g}",
    ]
    for g in sc.goals:
        lines.append(f"goal = {g.pose.x:g} {g.pose.y:g} {g.pose.beta:g} @ {g.issue_time:g}")
    for o in sc.obstacles:
        lines.append("")
        lines.append(f"[obstacle {o.obstacle_id}]")
        lines.append(f"shape = {o.shape}")
        if o.shape == "cylinder":
            lines.append(f"radius = {o.radius:g}")
        else:
            lines.append(f"size = {o.size[0]:g} {o.size[1]:g}")
        lines.append(f"height = {o.height:g}")
        if o.waypoints:
            lines.append("waypoints = " + " ; ".join(f"{x:g} {y:g}" for x, y in o.waypoints))
            lines.append(f"speed = {o.speed:g}")
        else:
            lines.append(f"position = {o.position[0]:g} {o.position[1]:g}")
    return "\n".join(lines) + "\n"
