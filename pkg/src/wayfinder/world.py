"""Map, scene objects, landmarks, coordinate frames, and the on-disk scene format.

Scenes are immutable after load; every mutation path constructs new values, so
instances can be shared freely across threads.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.ndimage import binary_dilation

TWO_PI = 2.0 * math.pi


class ParseError(ValueError):
    """Scene file is not valid JSON or misses required keys."""


class ValidationError(ValueError):
    """Scene content violates a structural invariant."""


def normalize_angle(theta: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    r = theta % TWO_PI
    if r > math.pi:
        r -= TWO_PI
    return r


@dataclass(frozen=True)
class Pose2D:
    """Planar pose: position in meters, heading in radians, normalized to (-pi, pi]."""

    x: float
    y: float
    theta: float = 0.0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x, self.y, self.theta)):
            raise ValidationError(f"non-finite pose: {self}")
        object.__setattr__(self, "theta", normalize_angle(self.theta))

    def position(self) -> np.ndarray:
        return np.array([self.x, self.y])

    def to_list(self) -> list[float]:
        return [self.x, self.y, self.theta]

    @classmethod
    def from_list(cls, v: Sequence[float]) -> "Pose2D":
        if len(v) != 3:
            raise ParseError(f"pose must be [x, y, theta], got {v!r}")
        return cls(float(v[0]), float(v[1]), float(v[2]))


def pose_compose(a: Pose2D, b: Pose2D) -> Pose2D:
    """Frame b expressed inside frame a (homogeneous product a @ b)."""
    c, s = math.cos(a.theta), math.sin(a.theta)
    return Pose2D(
        a.x + c * b.x - s * b.y,
        a.y + s * b.x + c * b.y,
        a.theta + b.theta,
    )


def pose_invert(a: Pose2D) -> Pose2D:
    c, s = math.cos(a.theta), math.sin(a.theta)
    return Pose2D(-(c * a.x + s * a.y), -(-s * a.x + c * a.y), -a.theta)


def transform_to_frame(p: Pose2D, frame: Pose2D) -> Pose2D:
    """Re-express pose ``p`` (parent coordinates) in the coordinates of ``frame``.

    Rigid SE(2) change of coordinates; ``transform_to_frame(p, invert) == p``
    when ``invert = pose_invert(frame)`` is applied afterwards.
    """
    return pose_compose(pose_invert(frame), p)


def transform_from_frame(p: Pose2D, frame: Pose2D) -> Pose2D:
    """Inverse of :func:`transform_to_frame`: frame coordinates back to parent."""
    return pose_compose(frame, p)


def transform_point_to_frame(pt: Sequence[float], frame: Pose2D) -> tuple[float, float]:
    """Point-only version of :func:`transform_to_frame` (no heading)."""
    dx, dy = pt[0] - frame.x, pt[1] - frame.y
    c, s = math.cos(frame.theta), math.sin(frame.theta)
    return (c * dx + s * dy, -s * dx + c * dy)


@dataclass(frozen=True, eq=False)
class OccupancyGrid:
    """Binary 2D cell map.

    ``cells`` has shape (height, width); ``cells[row, col]`` is True when the
    cell is occupied.  ``origin`` is the world pose of the corner of cell
    (row=0, col=0); cell centers sit at half-cell offsets from it.
    """

    width: int
    height: int
    resolution: float
    origin: Pose2D
    cells: np.ndarray

    def __eq__(self, other):
        if not isinstance(other, OccupancyGrid):
            return NotImplemented
        return (
            (self.width, self.height, self.resolution, self.origin)
            == (other.width, other.height, other.resolution, other.origin)
            and np.array_equal(self.cells, other.cells)
        )

    def __post_init__(self):
        if self.resolution <= 0:
            raise ValidationError("resolution must be > 0")
        cells = np.asarray(self.cells, dtype=bool)
        if cells.shape != (self.height, self.width):
            raise ValidationError(
                f"cells shape {cells.shape} != (height={self.height}, width={self.width})"
            )
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)

    def world_to_cell(self, x: float, y: float) -> tuple[int, int]:
        """World point to (col, row) of the containing cell."""
        lx, ly = transform_point_to_frame((x, y), self.origin)
        return (int(math.floor(lx / self.resolution)), int(math.floor(ly / self.resolution)))

    def cell_to_world(self, col: int, row: int) -> tuple[float, float]:
        """Center of cell (col, row) in world coordinates."""
        lx = (col + 0.5) * self.resolution
        ly = (row + 0.5) * self.resolution
        c, s = math.cos(self.origin.theta), math.sin(self.origin.theta)
        return (self.origin.x + c * lx - s * ly, self.origin.y + s * lx + c * ly)

    def in_bounds(self, col: int, row: int) -> bool:
        return 0 <= col < self.width and 0 <= row < self.height

    def is_occupied(self, col: int, row: int) -> bool:
        """Out-of-bounds cells count as occupied."""
        if not self.in_bounds(col, row):
            return True
        return bool(self.cells[row, col])

    def is_free_world(self, x: float, y: float) -> bool:
        col, row = self.world_to_cell(x, y)
        return not self.is_occupied(col, row)

    def occupied_boxes(self) -> np.ndarray:
        """(N, 2) array of world-frame lower corners of occupied cells.

        Requires origin.theta == 0 (all shipped maps are axis-aligned); boxes
        span ``resolution`` in each direction.  Cached on the instance, which
        is safe because cells are frozen after construction.
        """
        cached = getattr(self, "_occupied_boxes", None)
        if cached is not None:
            return cached
        if abs(self.origin.theta) > 1e-12:
            raise ValidationError("occupied_boxes requires an axis-aligned grid origin")
        rows, cols = np.nonzero(self.cells)
        corners = np.stack(
            [
                self.origin.x + cols * self.resolution,
                self.origin.y + rows * self.resolution,
            ],
            axis=1,
        )
        corners.setflags(write=False)
        object.__setattr__(self, "_occupied_boxes", corners)
        return corners

    def rows_as_text(self) -> list[str]:
        return ["".join("#" if c else "." for c in row) for row in self.cells]


def grid_from_rows(rows: Sequence[str], resolution: float, origin: Pose2D) -> OccupancyGrid:
    height = len(rows)
    if height == 0:
        raise ParseError("grid has no rows")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise ParseError("grid rows have inconsistent lengths")
    cells = np.zeros((height, width), dtype=bool)
    for j, row in enumerate(rows):
        for i, ch in enumerate(row):
            if ch == "#":
                cells[j, i] = True
            elif ch != ".":
                raise ParseError(f"unexpected grid character {ch!r} at row {j}")
    return OccupancyGrid(width=width, height=height, resolution=resolution, origin=origin, cells=cells)


def inflate_grid(g: OccupancyGrid, radius: float) -> OccupancyGrid:
    """Grow occupied regions by ``radius`` meters.

    A free cell becomes occupied when the gap between its box and some
    occupied cell's box is strictly less than ``radius`` (touching cells have
    gap 0, so any radius > 0 claims the 8-neighborhood; radius 0 is the
    identity).
    """
    if radius < 0:
        raise ValueError("radius must be >= 0")
    if radius == 0 or not g.cells.any():
        return g
    reach = int(math.ceil(radius / g.resolution)) + 1
    offs = np.arange(-reach, reach + 1)
    di, dj = np.meshgrid(offs, offs, indexing="ij")
    gap_x = np.maximum(np.abs(di) - 1, 0) * g.resolution
    gap_y = np.maximum(np.abs(dj) - 1, 0) * g.resolution
    kernel = np.hypot(gap_x, gap_y) < radius
    grown = binary_dilation(g.cells, structure=kernel)
    return replace(g, cells=grown)


@dataclass(frozen=True)
class SceneObject:
    """A physical item the simulated camera can detect."""

    id: str
    class_name: str
    attributes: tuple[str, ...]
    position: Pose2D
    footprint_halfwidths: tuple[float, float]
    base_confidence: float
    detectability: float

    def __post_init__(self):
        if not 0.0 <= self.base_confidence <= 1.0:
            raise ValidationError(f"object {self.id}: base_confidence outside [0, 1]")
        if not 0.0 <= self.detectability <= 1.0:
            raise ValidationError(f"object {self.id}: detectability outside [0, 1]")


@dataclass(frozen=True, eq=False)
class Landmark:
    """A navigable point of interest with the text surrogate of its photo."""

    id: str
    pose: Pose2D
    description_tokens: tuple[str, ...]
    canonical_phrases: tuple[str, ...]
    detector_classes: frozenset[str]
    embedding: Optional[np.ndarray] = None

    def __eq__(self, other):
        if not isinstance(other, Landmark):
            return NotImplemented
        same_emb = (
            self.embedding is None
            and other.embedding is None
            or self.embedding is not None
            and other.embedding is not None
            and np.array_equal(self.embedding, other.embedding)
        )
        return same_emb and (
            (self.id, self.pose, self.description_tokens, self.canonical_phrases, self.detector_classes)
            == (other.id, other.pose, other.description_tokens, other.canonical_phrases, other.detector_classes)
        )

    def __post_init__(self):
        if self.embedding is not None:
            emb = np.asarray(self.embedding, dtype=float)
            if abs(float(np.linalg.norm(emb)) - 1.0) > 1e-6:
                raise ValidationError(f"landmark {self.id}: embedding is not unit length")
            emb.setflags(write=False)
            object.__setattr__(self, "embedding", emb)

    @property
    def canonical_phrase(self) -> str:
        return self.canonical_phrases[0] if self.canonical_phrases else self.id


@dataclass(frozen=True)
class Route:
    start: Pose2D
    goal_landmark: str


@dataclass(frozen=True)
class Scene:
    grid: OccupancyGrid
    objects: tuple[SceneObject, ...]
    landmarks: tuple[Landmark, ...]
    routes: tuple[Route, ...]

    def __post_init__(self):
        ids = [lm.id for lm in self.landmarks]
        if len(set(ids)) != len(ids):
            raise ValidationError("landmark ids are not unique")
        known = set(ids)
        for route in self.routes:
            if route.goal_landmark not in known:
                raise ValidationError(f"route references unknown landmark {route.goal_landmark!r}")
        for lm in self.landmarks:
            if not self.grid.is_free_world(lm.pose.x, lm.pose.y):
                raise ValidationError(f"landmark {lm.id} pose is not in free space")

    def landmark(self, landmark_id: str) -> Landmark:
        for lm in self.landmarks:
            if lm.id == landmark_id:
                return lm
        raise KeyError(landmark_id)


def visible_objects(scene: Scene, camera: Pose2D, fov: float, max_range: float) -> list[SceneObject]:
    """Objects whose center lies in the camera's angular sector and range.

    Sorted by distance ascending.  No occlusion model: anything inside the
    sector is seen.
    """
    if not 0.0 < fov <= TWO_PI + 1e-12:
        raise ValueError("fov must be in (0, 2*pi]")
    if max_range <= 0:
        raise ValueError("max_range must be > 0")
    hits = []
    for obj in scene.objects:
        dx = obj.position.x - camera.x
        dy = obj.position.y - camera.y
        dist = math.hypot(dx, dy)
        if dist > max_range:
            continue
        bearing = normalize_angle(math.atan2(dy, dx) - camera.theta) if dist > 0 else 0.0
        if abs(bearing) <= fov / 2 + 1e-12:
            hits.append((dist, obj))
    hits.sort(key=lambda pair: pair[0])
    return [obj for _, obj in hits]


# ---------------------------------------------------------------------------
# Scene file I/O.  Format:
#   { "grid": {"width", "height", "resolution", "origin": [x,y,theta],
#              "rows": ["#.#..", ...]},                  # row 0 = lowest y
#     "objects": [...], "landmarks": [...], "routes": [...] }

def _require(d: dict, key: str, ctx: str):
    if key not in d:
        raise ParseError(f"{ctx}: missing key {key!r}")
    return d[key]


def _parse_object(d: dict) -> SceneObject:
    return SceneObject(
        id=str(_require(d, "id", "object")),
        class_name=str(_require(d, "class_name", "object")),
        attributes=tuple(d.get("attributes", [])),
        position=Pose2D.from_list(_require(d, "position", "object")),
        footprint_halfwidths=tuple(d.get("footprint_halfwidths", [0.2, 0.2])),
        base_confidence=float(d.get("base_confidence", 0.9)),
        detectability=float(d.get("detectability", 1.0)),
    )


def _parse_landmark(d: dict) -> Landmark:
    emb = d.get("embedding")
    return Landmark(
        id=str(_require(d, "id", "landmark")),
        pose=Pose2D.from_list(_require(d, "pose", "landmark")),
        description_tokens=tuple(d.get("description_tokens", [])),
        canonical_phrases=tuple(d.get("canonical_phrases", [])),
        detector_classes=frozenset(d.get("detector_classes", [])),
        embedding=np.asarray(emb, dtype=float) if emb is not None else None,
    )


def scene_from_dict(data: dict) -> Scene:
    if not isinstance(data, dict):
        raise ParseError("scene file must contain a JSON object")
    gd = _require(data, "grid", "scene")
    grid = grid_from_rows(
        _require(gd, "rows", "grid"),
        resolution=float(_require(gd, "resolution", "grid")),
        origin=Pose2D.from_list(gd.get("origin", [0.0, 0.0, 0.0])),
    )
    if "width" in gd and int(gd["width"]) != grid.width:
        raise ParseError("grid width does not match row length")
    if "height" in gd and int(gd["height"]) != grid.height:
        raise ParseError("grid height does not match row count")
    objects = tuple(_parse_object(o) for o in data.get("objects", []))
    landmarks = tuple(_parse_landmark(l) for l in data.get("landmarks", []))
    routes = tuple(
        Route(start=Pose2D.from_list(_require(r, "start", "route")),
              goal_landmark=str(_require(r, "goal", "route")))
        for r in data.get("routes", [])
    )
    return Scene(grid=grid, objects=objects, landmarks=landmarks, routes=routes)


def load_scene(path: str | Path) -> Scene:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as e:
        raise ParseError(f"cannot read scene file {path}: {e}") from e
    try:
        data = json.loads(text)
    except json.JSONDecodeError as e:
        raise ParseError(f"malformed scene file {path}: {e}") from e
    return scene_from_dict(data)


def shipped_scene(name: str) -> Scene:
    """Load one of the scene files bundled with the package, e.g. "dragon_lab"."""
    from importlib import resources

    ref = resources.files("wayfinder.data").joinpath(f"{name}.json")
    with ref.open("r", encoding="utf-8") as fh:
        return scene_from_dict(json.load(fh))


def scene_to_dict(scene: Scene) -> dict:
    return {
        "grid": {
            "width": scene.grid.width,
            "height": scene.grid.height,
            "resolution": scene.grid.resolution,
            "origin": scene.grid.origin.to_list(),
            "rows": scene.grid.rows_as_text(),
        },
        "objects": [
            {
                "id": o.id,
                "class_name": o.class_name,
                "attributes": list(o.attributes),
                "position": o.position.to_list(),
                "footprint_halfwidths": list(o.footprint_halfwidths),
                "base_confidence": o.base_confidence,
                "detectability": o.detectability,
            }
            for o in scene.objects
        ],
        "landmarks": [
            {
                "id": lm.id,
                "pose": lm.pose.to_list(),
                "description_tokens": list(lm.description_tokens),
                "canonical_phrases": list(lm.canonical_phrases),
                "detector_classes": sorted(lm.detector_classes),
                **({"embedding": list(map(float, lm.embedding))} if lm.embedding is not None else {}),
            }
            for lm in scene.landmarks
        ],
        "routes": [{"start": r.start.to_list(), "goal": r.goal_landmark} for r in scene.routes],
    }


def save_scene(scene: Scene, path: str | Path) -> None:
    Path(path).write_text(json.dumps(scene_to_dict(scene), indent=2) + "\n", encoding="utf-8")
