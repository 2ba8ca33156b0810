"""Fixed-timestep simulation of the robot, the handle-holding user, and trials.

The robot integrates exact unicycle arcs.  The user is kinematically tethered:
their pose is the robot pose delayed by ``user_lag`` seconds, composed with a
fixed offset along the robot's -x axis, so the holding constraint never
breaks.  A trial drives the dialogue machine with a scripted user, plans with
A* + DWA, and counts collisions against the un-inflated grid.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

from .dialogue import (
    DialogueDeps,
    DialogueMode,
    SessionState,
    TranscriptEntry,
    handle_utterance,
    notify_arrival,
)
from .grounding import RecognitionOutcome
from .nlu import Entities, NluModel
from .perception import answer_question, describe, simulate_detections
from .planner import (
    STOP,
    DwaConfig,
    GoalManager,
    Path,
    Point,
    VelocityCommand,
    dwa_step,
    footprint_collides,
    integrate_unicycle,
    plan_global,
    polygon_collides,
    select_local_goal,
)
from .world import Pose2D, Route, Scene, inflate_grid, pose_compose, visible_objects

# Walking room for the user, in the robot frame; centered on the handle
# anchor at -handle_offset.
DEFAULT_USER_POLYGON: tuple[Point, ...] = (
    (-0.85, -0.275),
    (-0.35, -0.275),
    (-0.35, 0.275),
    (-0.85, 0.275),
)


class ScriptExhausted(RuntimeError):
    """The robot is waiting for input but the script has no more lines."""


@dataclass(frozen=True)
class SimConfig:
    dt: float = 0.1
    max_steps: int = 3000
    seed: int = 0
    handle_offset: float = 0.6
    user_lag: float = 0.3
    camera_fov: float = math.pi / 2
    camera_range: float = 4.0
    goal_tolerance: float = 0.3
    use_user_polygon: bool = True
    user_polygon: tuple[Point, ...] = DEFAULT_USER_POLYGON

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.user_lag < 0:
            raise ValueError("user_lag must be >= 0")
        if self.max_steps <= 0:
            raise ValueError("max_steps must be positive")
        if self.handle_offset < 0:
            raise ValueError("handle_offset must be >= 0")
        if self.goal_tolerance <= 0:
            raise ValueError("goal_tolerance must be positive")
        if len(self.user_polygon) < 3:
            raise ValueError("user polygon needs at least 3 corners")

    @property
    def lag_steps(self) -> int:
        return int(round(self.user_lag / self.dt))


@dataclass(frozen=True)
class SimState:
    robot: Pose2D
    robot_vel: VelocityCommand
    user: Pose2D
    time: float
    step: int
    # Recent robot poses, oldest first; feeds the user's delay line.
    trail: tuple[Pose2D, ...] = ()


def _user_pose(delayed_robot: Pose2D, cfg: SimConfig) -> Pose2D:
    return pose_compose(delayed_robot, Pose2D(-cfg.handle_offset, 0.0, 0.0))


def initial_state(robot: Pose2D, cfg: SimConfig) -> SimState:
    return SimState(
        robot=robot,
        robot_vel=STOP,
        user=_user_pose(robot, cfg),
        time=0.0,
        step=0,
        trail=(robot,),
    )


def step(state: SimState, cmd: VelocityCommand, cfg: SimConfig) -> SimState:
    """Advance one control period; the user follows on the delay line."""
    robot = integrate_unicycle(state.robot, cmd.v, cmd.omega, cfg.dt)
    trail = (state.trail + (robot,))[-(cfg.lag_steps + 1):]
    count = state.step + 1
    return SimState(
        robot=robot,
        robot_vel=cmd,
        user=_user_pose(trail[0], cfg),
        time=count * cfg.dt,
        step=count,
        trail=trail,
    )


@dataclass(frozen=True)
class TrialMetrics:
    lr_success: bool
    nav_success: bool
    traversal_time: float
    dialogue_rounds: int
    robot_collisions: int
    user_collisions: int

    def __post_init__(self):
        if self.nav_success and not self.lr_success:
            raise ValueError("navigation cannot succeed without landmark recognition")

    def to_dict(self) -> dict:
        return {
            "lr_success": self.lr_success,
            "nav_success": self.nav_success,
            "traversal_time": self.traversal_time,
            "dialogue_rounds": self.dialogue_rounds,
            "robot_collisions": self.robot_collisions,
            "user_collisions": self.user_collisions,
        }


@dataclass
class TrialDeps:
    """Language components a trial needs; everything else is built per run."""

    nlu_model: NluModel
    recognizer: Callable[[Entities], RecognitionOutcome]
    dwa: DwaConfig = field(default_factory=DwaConfig)


ScriptEntry = Union[str, dict]


def _normalize_script(script: Sequence[ScriptEntry]) -> list[tuple[str, Optional[float]]]:
    """Each entry is a plain line, spoken when the robot waits, or
    {"text", "at"} with a sim-time delivery point."""
    out: list[tuple[str, Optional[float]]] = []
    for entry in script:
        if isinstance(entry, str):
            out.append((entry, None))
        else:
            out.append((str(entry["text"]), float(entry["at"])))
    return out


def format_step_log(rows: Sequence[dict]) -> str:
    """Per-step trial log as JSON lines for replay."""
    return "\n".join(json.dumps(row) for row in rows)


class Session:
    """One live guidance session: dialogue state plus the simulated world.

    The scripted trial runner, the command-line REPL, and the network API
    all drive the loop the same way: feed utterances with utterance(), move
    time forward one tick at a time with advance().  A tick either emits an
    arrival notice (instantaneous, no motion) or integrates one control
    step; while no goal is active the robot idles in place.
    """

    def __init__(
        self,
        scene: Scene,
        cfg: SimConfig,
        deps: TrialDeps,
        start: Optional[Pose2D] = None,
        step_log: Optional[list[dict]] = None,
    ):
        if start is None:
            if not scene.routes:
                raise ValueError("scene has no routes to spawn on")
            start = scene.routes[0].start
        self.scene = scene
        self.cfg = cfg
        self.deps = deps
        self.grid = scene.grid
        self.inflated = inflate_grid(scene.grid, deps.dwa.robot_radius)
        self.manager = GoalManager(v_ceiling=deps.dwa.v_max)
        self.sim = initial_state(start, cfg)
        self.dstate = SessionState()
        self.path: Optional[Path] = None
        self.step_log = step_log
        self.dispatched: list[str] = []
        self.arrivals: list[tuple[Optional[str], float]] = []
        self.first_dispatch: Optional[float] = None
        self.robot_collisions = 0
        self.user_collisions = 0
        self._dialogue_deps = DialogueDeps(
            scene=scene,
            nlu_model=deps.nlu_model,
            recognizer=deps.recognizer,
            goal_manager=self.manager,
            describe_scene=self.describe_view,
            answer_question=self.answer_from_view,
        )

    def describe_view(self) -> str:
        visible = visible_objects(
            self.scene, self.sim.robot, self.cfg.camera_fov, self.cfg.camera_range
        )
        dets = simulate_detections(
            visible,
            self.sim.robot,
            seed=self.cfg.seed * 100003 + self.sim.step,
            fov=self.cfg.camera_fov,
        )
        return describe(dets)

    def answer_from_view(self, question: str) -> str:
        visible = visible_objects(
            self.scene, self.sim.robot, self.cfg.camera_fov, self.cfg.camera_range
        )
        return answer_question(question, visible, self.sim.robot)

    @property
    def navigating(self) -> bool:
        return (
            self.dstate.mode is DialogueMode.Navigating
            and self.manager.active_goal is not None
        )

    def utterance(self, text: str) -> tuple[str, tuple]:
        """Process one user line at the current sim time; no motion happens."""
        self.dstate, reply, effects = handle_utterance(
            self.dstate, text, self._dialogue_deps, t=self.sim.time
        )
        for effect in effects:
            if effect[0] == "dispatch_goal":
                self.dispatched.append(effect[1])
                if self.first_dispatch is None:
                    self.first_dispatch = self.sim.time
                self.path = None
            elif effect[0] == "cancel_goal":
                self.path = None
        return reply, effects

    def _move(self, cmd: VelocityCommand) -> None:
        self.sim = step(self.sim, cmd, self.cfg)
        if footprint_collides(self.grid, self.sim.robot, self.deps.dwa.robot_radius):
            self.robot_collisions += 1
        if polygon_collides(self.grid, self.sim.robot, self.cfg.user_polygon):
            self.user_collisions += 1
        if self.step_log is not None:
            self.step_log.append(
                {
                    "t": self.sim.time,
                    "robot": self.sim.robot.to_list(),
                    "user": self.sim.user.to_list(),
                    "cmd": [cmd.v, cmd.omega],
                }
            )

    def advance(self) -> Optional[str]:
        """One tick; returns the arrival notice when a goal is reached."""
        if self.navigating:
            sim = self.sim
            goal = self.manager.active_goal
            if (
                math.hypot(goal.x - sim.robot.x, goal.y - sim.robot.y)
                <= self.cfg.goal_tolerance
            ):
                arrived = self.dstate.active_landmark
                self.dstate, notice = notify_arrival(
                    self.dstate, self.manager, t=sim.time
                )
                self.path = None
                self.arrivals.append((arrived, sim.time))
                return notice
            if self.path is None:
                self.path = plan_global(self.inflated, sim.robot, goal)
            local_goal = select_local_goal(self.path, sim.robot)
            user_poly = self.cfg.user_polygon if self.cfg.use_user_polygon else None
            cmd = dwa_step(
                sim.robot,
                sim.robot_vel,
                local_goal,
                self.grid,
                user_poly,
                self.manager.effective_config(self.deps.dwa),
            )
            self._move(cmd)
            return None
        self._move(STOP)
        return None

    def remaining_path(self) -> list[list[float]]:
        """World waypoints still ahead of the robot, for state displays."""
        if self.path is None:
            return []
        robot = self.sim.robot
        dists = [
            math.hypot(x - robot.x, y - robot.y) for x, y in self.path.waypoints
        ]
        idx = min(range(len(dists)), key=dists.__getitem__)
        return [[x, y] for x, y in self.path.waypoints[idx:]]

    def user_corners(self) -> list[list[float]]:
        """World corners of the user rectangle, carried by the robot frame."""
        robot = self.sim.robot
        cos_t, sin_t = math.cos(robot.theta), math.sin(robot.theta)
        return [
            [
                robot.x + cos_t * px - sin_t * py,
                robot.y + sin_t * px + cos_t * py,
            ]
            for px, py in self.cfg.user_polygon
        ]

    def snapshot(self) -> dict:
        """Plain-data view of the session for state displays."""
        goal = self.manager.active_goal
        return {
            "mode": self.dstate.mode.value,
            "time": self.sim.time,
            "step": self.sim.step,
            "robot": self.sim.robot.to_list(),
            "user": self.sim.user.to_list(),
            "vel": [self.sim.robot_vel.v, self.sim.robot_vel.omega],
            "goal": None if goal is None else [goal.x, goal.y],
            "landmark": self.dstate.active_landmark,
            "path": self.remaining_path(),
            "user_corners": self.user_corners(),
            "speed_limit": self.manager.v_limit,
            "robot_collisions": self.robot_collisions,
            "user_collisions": self.user_collisions,
        }


def run_trial(
    scene: Scene,
    route: Route,
    script: Sequence[ScriptEntry],
    cfg: SimConfig,
    deps: TrialDeps,
    step_log: Optional[list[dict]] = None,
) -> tuple[TrialMetrics, list[TranscriptEntry]]:
    """One scripted guidance episode: dialogue, planning, and metrics.

    A trial that runs out of script while the robot waits for input is a
    failed trial, not an error.
    """
    if not script:
        raise ValueError("script is empty")
    entries = _normalize_script(script)
    session = Session(scene, cfg, deps, start=route.start, step_log=step_log)

    idx = 0
    arrival: Optional[float] = None
    nav_success = False

    try:
        while session.sim.step < cfg.max_steps:
            sim = session.sim
            navigating = session.dstate.mode is DialogueMode.Navigating

            if idx < len(entries):
                text, at = entries[idx]
                due = sim.time + 1e-9 >= at if at is not None else not navigating
                if due:
                    session.utterance(text)
                    idx += 1
                    continue

            if session.navigating:
                notice = session.advance()
                if notice is not None:
                    arrived, at_time = session.arrivals[-1]
                    if arrived == route.goal_landmark:
                        nav_success = True
                        arrival = at_time
                continue

            # Waiting for the user: either idle time before a timed line, or
            # the script is over.
            if idx >= len(entries):
                if nav_success:
                    break
                raise ScriptExhausted("robot is waiting for input")
            session.advance()
    except ScriptExhausted:
        pass

    end_time = session.sim.time
    if arrival is not None and session.first_dispatch is not None:
        traversal = arrival - session.first_dispatch
    elif session.first_dispatch is not None:
        traversal = end_time - session.first_dispatch
    else:
        traversal = 0.0

    metrics = TrialMetrics(
        lr_success=route.goal_landmark in session.dispatched,
        nav_success=nav_success,
        traversal_time=traversal,
        dialogue_rounds=session.dstate.total_rounds,
        robot_collisions=session.robot_collisions,
        user_collisions=session.user_collisions,
    )
    return metrics, session.dstate.transcript
