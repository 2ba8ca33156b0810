"""Recovering the guided user's pose from a torso depth strip.

The person walks behind the robot holding a handle; a rear camera sees a
horizontal strip of torso depth samples.  Averaging the depths gives range,
averaging the lateral offsets gives side position, and the slope of a linear
fit of depth against lateral offset gives the facing angle.  The body outline
is a rectangle around that pose which the local planner keeps out of walls.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .world import Pose2D, ValidationError, transform_point_to_frame

DEFAULT_HALF_WIDTH = 0.3
DEFAULT_HALF_DEPTH = 0.25
MAX_FACING_ANGLE = math.pi / 3


class DegenerateFit(ValueError):
    """The strip collapsed to a single pixel column; no slope is recoverable."""


@dataclass(frozen=True)
class TorsoObservation:
    """One simulated frame: per-column (pixel, depth) pairs plus camera scale.

    ``pixel_ratio`` converts pixel offsets from ``center_pixel`` to lateral
    meters at the torso's range.
    """

    columns: tuple[tuple[float, float], ...]
    center_pixel: float
    pixel_ratio: float

    def __post_init__(self):
        if len(self.columns) < 2:
            raise ValidationError("torso strip needs at least 2 columns")
        if self.pixel_ratio <= 0:
            raise ValidationError("pixel_ratio must be > 0")
        if any(depth <= 0 for _, depth in self.columns):
            raise ValidationError("torso depths must be > 0")


@dataclass(frozen=True)
class UserPoseEstimate:
    """Estimated user pose (camera frame) plus the surrounding body rectangle.

    ``clamped`` is set when the raw facing angle exceeded MAX_FACING_ANGLE and
    was pulled back; grazing views make the slope fit ill-conditioned.
    """

    pose: Pose2D
    rectangle: tuple[tuple[float, float], ...]
    half_width: float
    half_depth: float
    clamped: bool = False


def rectangle_corners(
    pose: Pose2D, half_width: float, half_depth: float
) -> tuple[tuple[float, float], ...]:
    """Corners of the user's body box, counter-clockwise from front-left.

    The box extends half_depth along the pose heading and half_width across
    it, so a person walking along +x with theta 0 occupies
    x in [x-hd, x+hd], y in [y-hw, y+hw].
    """
    c, s = math.cos(pose.theta), math.sin(pose.theta)
    corners = []
    for dx, dy in ((half_depth, half_width), (-half_depth, half_width),
                   (-half_depth, -half_width), (half_depth, -half_width)):
        corners.append((pose.x + c * dx - s * dy, pose.y + s * dx + c * dy))
    return tuple(corners)


def synthesize_torso(
    true_user: Pose2D,
    half_width: float = DEFAULT_HALF_WIDTH,
    r: float = 0.01,
    n_cols: int = 48,
    noise_sd: float = 0.0,
    seed: int = 0,
    center_pixel: float = 320.0,
) -> TorsoObservation:
    """Sample the front face of the torso rectangle into a depth strip.

    The face is the shoulder segment through the pose center: points
    (x + s cos(theta), y + s sin(theta)) for s in [-half_width, half_width],
    where camera x is lateral and camera y is depth.  Depth noise is Gaussian
    and fully determined by ``seed``.
    """
    if n_cols < 2:
        raise ValueError("n_cols must be >= 2")
    rng = np.random.default_rng(seed)
    s = np.linspace(-half_width, half_width, n_cols)
    lateral = true_user.x + s * math.cos(true_user.theta)
    depth = true_user.y + s * math.sin(true_user.theta)
    depth = depth + rng.normal(0.0, noise_sd, n_cols) if noise_sd > 0 else depth
    pixels = center_pixel + lateral / r
    return TorsoObservation(
        columns=tuple(zip(pixels.tolist(), depth.tolist())),
        center_pixel=center_pixel,
        pixel_ratio=r,
    )


def estimate_user_pose(
    obs: TorsoObservation,
    half_width: float = DEFAULT_HALF_WIDTH,
    half_depth: float = DEFAULT_HALF_DEPTH,
) -> UserPoseEstimate:
    """Invert :func:`synthesize_torso` by regression.

    Facing angle = atan(d depth / d lateral) from a least-squares line, range
    = mean depth, side offset = mean lateral.  Raises DegenerateFit when every
    column shares one pixel coordinate.
    """
    pixels = np.array([u for u, _ in obs.columns])
    depths = np.array([d for _, d in obs.columns])
    lateral = (pixels - obs.center_pixel) * obs.pixel_ratio
    if np.ptp(lateral) == 0:
        raise DegenerateFit("all strip columns share one pixel coordinate")
    slope, _ = np.polyfit(lateral, depths, 1)
    theta = math.atan(float(slope))
    clamped = abs(theta) >= MAX_FACING_ANGLE
    if clamped:
        theta = math.copysign(MAX_FACING_ANGLE, theta)
    pose = Pose2D(float(lateral.mean()), float(depths.mean()), theta)
    return UserPoseEstimate(
        pose=pose,
        rectangle=rectangle_corners(pose, half_width, half_depth),
        half_width=half_width,
        half_depth=half_depth,
        clamped=clamped,
    )


def user_footprint_polygon(
    est: UserPoseEstimate, robot_in_camera: Pose2D
) -> tuple[tuple[float, float], ...]:
    """Re-express the body rectangle in the robot frame for the planner."""
    return tuple(
        transform_point_to_frame(corner, robot_in_camera) for corner in est.rectangle
    )
