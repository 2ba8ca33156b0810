"""Global A* routing plus a sampling local planner that protects two bodies.

The local planner is a dynamic-window search over (v, omega) samples.  Each
sample is rolled out with exact unicycle arcs and rejected when the robot
disc or the user rectangle (a polygon rigidly attached in the robot frame)
would overlap an occupied cell.  Surviving samples are scored on terminal
heading, obstacle clearance, and speed.

Collision tests run against whichever grid the caller passes; the simulator
passes the raw map so the disc radius is not counted twice on top of
inflation.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .world import OccupancyGrid, Pose2D, normalize_angle

Point = tuple[float, float]
Polygon = Sequence[Point]

CLEARANCE_CAP = 1.0
SQRT2 = math.sqrt(2.0)


class GoalOccupied(RuntimeError):
    """Requested goal cell is occupied (possibly only after inflation)."""


class NoPath(RuntimeError):
    """Start and goal lie in different connected components."""


class NothingToPause(RuntimeError):
    pass


class NothingToResume(RuntimeError):
    pass


class _Reject:
    """Sentinel for trajectories touching an obstacle; falsy on purpose."""

    def __repr__(self):
        return "REJECT"

    def __bool__(self):
        return False


REJECT = _Reject()


@dataclass(frozen=True)
class VelocityCommand:
    v: float
    omega: float

    def __post_init__(self):
        if not (math.isfinite(self.v) and math.isfinite(self.omega)):
            raise ValueError("velocity command must be finite")
        if self.v < 0:
            raise ValueError("forward velocity must be >= 0")


STOP = VelocityCommand(0.0, 0.0)


@dataclass(frozen=True)
class DwaConfig:
    """Sampling local planner parameters; v_max is the current speed limit."""

    v_max: float = 0.6
    omega_max: float = 1.5
    accel_v: float = 0.5
    accel_omega: float = 2.0
    dt: float = 0.1
    horizon: float = 1.5
    samples_v: int = 5
    samples_omega: int = 11
    weights: tuple[float, float, float] = (0.8, 0.1, 0.1)
    robot_radius: float = 0.2

    def __post_init__(self):
        positives = (
            self.v_max, self.omega_max, self.accel_v, self.accel_omega,
            self.dt, self.horizon, self.robot_radius,
        )
        if any(p <= 0 for p in positives):
            raise ValueError("all DWA parameters must be positive")
        if self.samples_v < 2 or self.samples_omega < 2:
            raise ValueError("need at least 2 samples per axis")
        if any(w < 0 for w in self.weights):
            raise ValueError("weights must be non-negative")


@dataclass(frozen=True)
class Path:
    """A* result: cell chain plus world-frame waypoints; cost in meters."""

    cells: tuple[tuple[int, int], ...]
    waypoints: tuple[Point, ...]
    cost: float


# --- global planner --------------------------------------------------------

_CARDINAL = ((1, 0), (-1, 0), (0, 1), (0, -1))
_DIAGONAL = ((1, 1), (1, -1), (-1, 1), (-1, -1))


def _octile(a: tuple[int, int], b: tuple[int, int]) -> float:
    dx, dy = abs(a[0] - b[0]), abs(a[1] - b[1])
    return max(dx, dy) + (SQRT2 - 1.0) * min(dx, dy)


def plan_global(grid: OccupancyGrid, start: Pose2D, goal: Pose2D) -> Path:
    """Shortest 8-connected path on the grid, ties broken deterministically.

    Diagonal steps cost sqrt(2) and are allowed only when both flanking
    cardinal cells are free, so the path never cuts a corner.  Cost is the
    cell-chain length scaled to meters.
    """
    start_cell = grid.world_to_cell(start.x, start.y)
    goal_cell = grid.world_to_cell(goal.x, goal.y)
    if grid.is_occupied(*start_cell):
        raise ValueError(f"start cell {start_cell} is occupied")
    if grid.is_occupied(*goal_cell):
        raise GoalOccupied(f"goal cell {goal_cell} is occupied")

    def finish(chain: list[tuple[int, int]], cost_cells: float) -> Path:
        return Path(
            cells=tuple(chain),
            waypoints=tuple(grid.cell_to_world(c, r) for c, r in chain),
            cost=cost_cells * grid.resolution,
        )

    if start_cell == goal_cell:
        return finish([start_cell], 0.0)

    g_cost: dict[tuple[int, int], float] = {start_cell: 0.0}
    parent: dict[tuple[int, int], tuple[int, int]] = {}
    seq = 0
    frontier: list[tuple[float, float, int, tuple[int, int]]] = []
    h0 = _octile(start_cell, goal_cell)
    heapq.heappush(frontier, (h0, h0, seq, start_cell))
    closed: set[tuple[int, int]] = set()
    while frontier:
        _, _, _, cell = heapq.heappop(frontier)
        if cell in closed:
            continue
        if cell == goal_cell:
            chain = [cell]
            while cell in parent:
                cell = parent[cell]
                chain.append(cell)
            chain.reverse()
            return finish(chain, g_cost[goal_cell])
        closed.add(cell)
        col, row = cell
        for dc, dr in _CARDINAL + _DIAGONAL:
            nxt = (col + dc, row + dr)
            if grid.is_occupied(*nxt):
                continue
            diagonal = dc != 0 and dr != 0
            if diagonal and (
                grid.is_occupied(col + dc, row) or grid.is_occupied(col, row + dr)
            ):
                continue
            cand = g_cost[cell] + (SQRT2 if diagonal else 1.0)
            if cand < g_cost.get(nxt, math.inf):
                g_cost[nxt] = cand
                parent[nxt] = cell
                h = _octile(nxt, goal_cell)
                seq += 1
                heapq.heappush(frontier, (cand + h, h, seq, nxt))
    raise NoPath(f"no route from {start_cell} to {goal_cell}")


def select_local_goal(path: Path, robot: Pose2D, lookahead: float = 1.0) -> Pose2D:
    """Carrot point: the farthest waypoint still within the lookahead circle.

    Falls back to the nearest waypoint when the robot has drifted off the
    path entirely.
    """
    if not path.waypoints:
        raise ValueError("empty path")
    dists = [math.hypot(x - robot.x, y - robot.y) for x, y in path.waypoints]
    within = [i for i, d in enumerate(dists) if d <= lookahead]
    idx = within[-1] if within else min(range(len(dists)), key=dists.__getitem__)
    x, y = path.waypoints[idx]
    return Pose2D(x, y, 0.0)


# --- local planner ---------------------------------------------------------

def integrate_unicycle(pose: Pose2D, v: float, omega: float, dt: float) -> Pose2D:
    """Exact constant-(v, omega) arc over dt."""
    if abs(omega) < 1e-9:
        return Pose2D(
            pose.x + v * dt * math.cos(pose.theta),
            pose.y + v * dt * math.sin(pose.theta),
            pose.theta,
        )
    theta1 = pose.theta + omega * dt
    radius = v / omega
    return Pose2D(
        pose.x + radius * (math.sin(theta1) - math.sin(pose.theta)),
        pose.y - radius * (math.cos(theta1) - math.cos(pose.theta)),
        theta1,
    )


def rollout_poses(start: Pose2D, cmd: VelocityCommand, cfg: DwaConfig) -> list[Pose2D]:
    """Future poses at each control period over the horizon (start excluded)."""
    steps = max(1, round(cfg.horizon / cfg.dt))
    poses = []
    pose = start
    for _ in range(steps):
        pose = integrate_unicycle(pose, cmd.v, cmd.omega, cfg.dt)
        poses.append(pose)
    return poses


def dynamic_window(
    current: VelocityCommand, cfg: DwaConfig
) -> tuple[tuple[float, float], tuple[float, float]]:
    """Reachable (v, omega) intervals one control period ahead; v floor is 0."""
    v_lo = max(0.0, current.v - cfg.accel_v * cfg.dt)
    v_hi = min(cfg.v_max, current.v + cfg.accel_v * cfg.dt)
    w_lo = max(-cfg.omega_max, current.omega - cfg.accel_omega * cfg.dt)
    w_hi = min(cfg.omega_max, current.omega + cfg.accel_omega * cfg.dt)
    return (v_lo, v_hi), (w_lo, w_hi)


def _pose_arrays(poses: Sequence[Pose2D]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    xs = np.array([p.x for p in poses])
    ys = np.array([p.y for p in poses])
    thetas = np.array([p.theta for p in poses])
    return xs, ys, thetas


def _box_distances(grid: OccupancyGrid, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """(T, N) distances from points to each occupied cell box (0 inside)."""
    boxes = grid.occupied_boxes()
    if len(boxes) == 0:
        return np.full((len(xs), 0), np.inf)
    res = grid.resolution
    dx = np.maximum.reduce(
        [boxes[:, 0] - xs[:, None], xs[:, None] - (boxes[:, 0] + res), np.zeros((len(xs), len(boxes)))]
    )
    dy = np.maximum.reduce(
        [boxes[:, 1] - ys[:, None], ys[:, None] - (boxes[:, 1] + res), np.zeros((len(xs), len(boxes)))]
    )
    return np.hypot(dx, dy)


def disc_clearance(grid: OccupancyGrid, pose: Pose2D, radius: float) -> float:
    """Distance from the robot disc edge to the nearest occupied cell."""
    d = _box_distances(grid, np.array([pose.x]), np.array([pose.y]))
    if d.shape[1] == 0:
        return math.inf
    return float(d.min()) - radius


def polygon_world_corners(
    poses_xytheta: tuple[np.ndarray, np.ndarray, np.ndarray], poly: Polygon
) -> np.ndarray:
    """(T, K, 2) world corners of a robot-frame polygon carried by T poses."""
    xs, ys, thetas = poses_xytheta
    local = np.asarray(poly, dtype=float)
    c, s = np.cos(thetas), np.sin(thetas)
    wx = xs[:, None] + c[:, None] * local[:, 0] - s[:, None] * local[:, 1]
    wy = ys[:, None] + s[:, None] * local[:, 0] + c[:, None] * local[:, 1]
    return np.stack([wx, wy], axis=-1)


def _polygon_hits_boxes(
    corners: np.ndarray, grid: OccupancyGrid, boxes: Optional[np.ndarray] = None
) -> np.ndarray:
    """Separating-axis test of convex polygons against occupied boxes.

    corners: (T, K, 2) world polygons.  Returns (T,) bool, True when the
    polygon at that pose overlaps any occupied cell.  Touching edges do not
    count as overlap.  ``boxes`` restricts the test to a pre-filtered subset
    of ``grid.occupied_boxes()``.
    """
    if boxes is None:
        boxes = grid.occupied_boxes()
    T, K, _ = corners.shape
    if len(boxes) == 0:
        return np.zeros(T, dtype=bool)
    res = grid.resolution
    centers = boxes + res / 2.0

    edges = np.roll(corners, -1, axis=1) - corners
    normals = np.stack([-edges[..., 1], edges[..., 0]], axis=-1)
    # Two fixed box axes plus the polygon's own edge normals per pose.
    fixed = np.broadcast_to(np.array([[[1.0, 0.0], [0.0, 1.0]]]), (T, 2, 2))
    axes = np.concatenate([fixed, normals], axis=1)

    # Polygon projection intervals per axis: (T, A, K) -> (T, A)
    proj = np.einsum("tka,tna->tnk", corners, axes)
    p_min, p_max = proj.min(axis=2), proj.max(axis=2)
    # Box projection intervals: center dot axis +/- half-extent.
    b_center = np.einsum("na,tba->tbn", centers, axes)
    b_half = (np.abs(axes[..., 0]) + np.abs(axes[..., 1])) * (res / 2.0)
    sep = (b_center + b_half[..., None] <= p_min[..., None]) | (
        b_center - b_half[..., None] >= p_max[..., None]
    )
    return (~sep.any(axis=1)).any(axis=1)


def polygon_collides(grid: OccupancyGrid, pose: Pose2D, poly: Polygon) -> bool:
    """True when a robot-frame polygon carried by this pose overlaps a wall."""
    corners = polygon_world_corners(_pose_arrays([pose]), poly)
    return bool(_polygon_hits_boxes(corners, grid).any())


def footprint_collides(
    grid: OccupancyGrid,
    pose: Pose2D,
    radius: float,
    user_poly: Optional[Polygon] = None,
) -> bool:
    """True when the robot disc or the attached user polygon overlaps a wall."""
    arrays = _pose_arrays([pose])
    d = _box_distances(grid, arrays[0], arrays[1])
    if d.shape[1] and float(d.min()) < radius:
        return True
    if user_poly is not None:
        corners = polygon_world_corners(arrays, user_poly)
        if _polygon_hits_boxes(corners, grid).any():
            return True
    return False


def score_trajectory(
    rollout: Sequence[Pose2D],
    goal: Pose2D,
    grid: OccupancyGrid,
    user_poly: Optional[Polygon],
    cfg: DwaConfig,
):
    """Score one rollout, or REJECT when either body would touch a wall.

    Score = w_heading * (1 - |terminal bearing error| / pi)
          + w_clearance * min(clearance, CLEARANCE_CAP) / CLEARANCE_CAP
          + w_velocity * v / v_max
    with v recovered from the first rollout chord, so the function needs only
    the poses.  The clearance term measures the robot disc; the polygon
    affects rejection only.
    """
    if not rollout:
        raise ValueError("empty rollout")
    arrays = _pose_arrays(rollout)
    xs, ys, _ = arrays
    dists = _box_distances(grid, xs, ys)
    if dists.shape[1] == 0:
        clearance = math.inf
    else:
        nearest = float(dists.min())
        if nearest < cfg.robot_radius:
            return REJECT
        clearance = nearest - cfg.robot_radius
    if user_poly is not None and dists.shape[1]:
        reach = max(math.hypot(px, py) for px, py in user_poly)
        # The polygon cannot reach a box farther than its own radius.
        if float(dists.min()) <= reach:
            corners = polygon_world_corners(arrays, user_poly)
            if _polygon_hits_boxes(corners, grid).any():
                return REJECT

    terminal = rollout[-1]
    to_goal = math.hypot(goal.x - terminal.x, goal.y - terminal.y)
    if to_goal < 1e-9:
        bearing_err = 0.0
    else:
        bearing = math.atan2(goal.y - terminal.y, goal.x - terminal.x)
        bearing_err = abs(normalize_angle(bearing - terminal.theta))
    heading_term = 1.0 - bearing_err / math.pi

    clear_term = min(clearance, CLEARANCE_CAP) / CLEARANCE_CAP

    v = _chord_speed(rollout, cfg.dt)
    vel_term = min(v / cfg.v_max, 1.0)

    w_h, w_c, w_v = cfg.weights
    return w_h * heading_term + w_c * clear_term + w_v * vel_term


def _chord_speed(rollout: Sequence[Pose2D], dt: float) -> float:
    """Speed of the constant-twist motion that produced consecutive poses."""
    if len(rollout) < 2:
        return 0.0
    a, b = rollout[0], rollout[1]
    chord = math.hypot(b.x - a.x, b.y - a.y)
    dtheta = normalize_angle(b.theta - a.theta)
    if abs(dtheta) < 1e-9:
        return chord / dt
    half = dtheta / 2.0
    return chord * half / math.sin(half) / dt


def _batch_rollouts(
    robot: Pose2D, v: np.ndarray, omega: np.ndarray, cfg: DwaConfig
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(S, T) rollout pose arrays for S commands, integrated like
    ``rollout_poses`` one control period at a time."""
    steps = max(1, round(cfg.horizon / cfg.dt))
    count = len(v)
    xs = np.empty((count, steps))
    ys = np.empty((count, steps))
    thetas = np.empty((count, steps))
    x = np.full(count, robot.x)
    y = np.full(count, robot.y)
    theta = np.full(count, robot.theta)
    straight = np.abs(omega) < 1e-9
    radius = v / np.where(straight, 1.0, omega)
    for k in range(steps):
        theta1 = theta + omega * cfg.dt
        x = np.where(
            straight,
            x + v * cfg.dt * np.cos(theta),
            x + radius * (np.sin(theta1) - np.sin(theta)),
        )
        y = np.where(
            straight,
            y + v * cfg.dt * np.sin(theta),
            y - radius * (np.cos(theta1) - np.cos(theta)),
        )
        theta = np.where(straight, theta, theta1)
        xs[:, k] = x
        ys[:, k] = y
        thetas[:, k] = theta
    return xs, ys, thetas


def _batch_scores(
    xs: np.ndarray,
    ys: np.ndarray,
    thetas: np.ndarray,
    v: np.ndarray,
    goal: Pose2D,
    grid: OccupancyGrid,
    user_poly: Optional[Polygon],
    cfg: DwaConfig,
) -> np.ndarray:
    """Vector of ``score_trajectory`` values, -inf where rejected."""
    count, steps = xs.shape
    dists = _box_distances(grid, xs.ravel(), ys.ravel())
    if dists.shape[1] == 0:
        nearest = np.full(count, np.inf)
        per_sample = None
    else:
        per_sample = dists.reshape(count, steps, -1)
        nearest = per_sample.min(axis=(1, 2))
    rejected = nearest < cfg.robot_radius

    if user_poly is not None and per_sample is not None:
        reach = max(math.hypot(px, py) for px, py in user_poly)
        candidates = np.nonzero(~rejected & (nearest <= reach))[0]
        if len(candidates):
            near = per_sample[candidates].min(axis=(0, 1)) <= reach
            boxes = grid.occupied_boxes()[near]
            if len(boxes):
                corners = polygon_world_corners(
                    (
                        xs[candidates].ravel(),
                        ys[candidates].ravel(),
                        thetas[candidates].ravel(),
                    ),
                    user_poly,
                )
                hits = _polygon_hits_boxes(corners, grid, boxes)
                rejected[candidates] |= hits.reshape(len(candidates), steps).any(axis=1)

    dx = goal.x - xs[:, -1]
    dy = goal.y - ys[:, -1]
    raw = np.arctan2(dy, dx) - thetas[:, -1]
    bearing_err = np.abs(np.arctan2(np.sin(raw), np.cos(raw)))
    bearing_err[np.hypot(dx, dy) < 1e-9] = 0.0
    heading_term = 1.0 - bearing_err / math.pi
    clear_term = np.minimum(np.maximum(nearest - cfg.robot_radius, 0.0), CLEARANCE_CAP) / CLEARANCE_CAP
    vel_term = np.minimum(v / cfg.v_max, 1.0)

    w_h, w_c, w_v = cfg.weights
    scores = w_h * heading_term + w_c * clear_term + w_v * vel_term
    scores[rejected] = -np.inf
    return scores


def dwa_step(
    robot: Pose2D,
    current: VelocityCommand,
    local_goal: Pose2D,
    grid: OccupancyGrid,
    user_poly: Optional[Polygon],
    cfg: DwaConfig,
) -> VelocityCommand:
    """Best sampled command in the dynamic window; rotate toward the goal
    bearing (at zero forward speed) when every sample is rejected."""
    (v_lo, v_hi), (w_lo, w_hi) = dynamic_window(current, cfg)
    v_grid, w_grid = np.meshgrid(
        np.linspace(v_lo, v_hi, cfg.samples_v),
        np.linspace(w_lo, w_hi, cfg.samples_omega),
        indexing="ij",
    )
    v = v_grid.ravel()
    omega = w_grid.ravel()
    xs, ys, thetas = _batch_rollouts(robot, v, omega, cfg)
    scores = _batch_scores(xs, ys, thetas, v, local_goal, grid, user_poly, cfg)
    best = int(np.argmax(scores))
    if scores[best] > -np.inf:
        return VelocityCommand(float(v[best]), float(omega[best]))
    bearing = normalize_angle(
        math.atan2(local_goal.y - robot.y, local_goal.x - robot.x) - robot.theta
    )
    fallback = math.copysign(0.5 * cfg.omega_max, bearing if bearing != 0 else 1.0)
    return VelocityCommand(0.0, float(np.clip(fallback, w_lo, w_hi)))


# --- goal lifecycle --------------------------------------------------------

@dataclass
class GoalManager:
    """Holds the navigation goal and the stepped speed limit.

    Single writer per session; pause parks the active goal so resume can
    re-dispatch it unchanged.
    """

    v_floor: float = 0.2
    v_ceiling: float = 0.6
    delta: float = 0.1
    speed_level: int = 2
    active_goal: Optional[Pose2D] = None
    stored_goal: Optional[Pose2D] = None

    def __post_init__(self):
        if not 0 < self.v_floor <= self.v_ceiling:
            raise ValueError("need 0 < v_floor <= v_ceiling")
        if self.delta <= 0:
            raise ValueError("delta must be positive")
        self.speed_level = self._clamp_level(self.speed_level)

    def _max_level(self) -> int:
        return int(round((self.v_ceiling - self.v_floor) / self.delta))

    def _clamp_level(self, level: int) -> int:
        return max(0, min(self._max_level(), level))

    @property
    def v_limit(self) -> float:
        return min(self.v_ceiling, self.v_floor + self.speed_level * self.delta)

    def set_goal(self, goal: Pose2D) -> None:
        self.active_goal = goal
        self.stored_goal = None

    def clear_goal(self) -> None:
        self.active_goal = None
        self.stored_goal = None

    def pause(self) -> None:
        if self.active_goal is None:
            raise NothingToPause("no active goal")
        self.stored_goal = self.active_goal
        self.active_goal = None

    def resume(self) -> None:
        if self.stored_goal is None:
            raise NothingToResume("no stored goal")
        self.active_goal = self.stored_goal
        self.stored_goal = None

    def adjust_speed(self, steps: int) -> float:
        """Move the speed limit by whole steps, saturating at the bounds."""
        self.speed_level = self._clamp_level(self.speed_level + steps)
        return self.v_limit

    def effective_config(self, base: DwaConfig) -> DwaConfig:
        """Base planner config with the current limit and scaled turn rate."""
        scale = self.v_limit / base.v_max
        return replace(base, v_max=self.v_limit, omega_max=base.omega_max * scale)
