"""Simulated sensor suite: forward range sensor, overhead position fixes,
encoder + gyro.

Sensor physics operate on ground-truth poses only; estimates never feed
back into what a sensor can see. All randomness comes from generators the
caller passes in, so traces replay bit-identically under a fixed seed.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass

from .core import Pose2D, SimTime, normalize_angle
from .ekf import GpsFix, ImuInput

MIN_HEADING_DISPLACEMENT = 1e-3  # m; below this the fix carries no heading


@dataclass(frozen=True)
class RangeReading:
    """Range sensor output; ``distance`` is None whenever ``valid`` is False
    (a lost target never leaves a stale number behind)."""

    valid: bool
    distance: float | None = None

    def __post_init__(self):
        if self.valid != (self.distance is not None):
            raise ValueError("distance must be present exactly when valid")


def range_sensor(
    ego_pose_true: Pose2D,
    target_pose_true: Pose2D,
    fov_half_angle: float,
    max_range: float,
    noise_std: float,
    rng: random.Random,
) -> RangeReading:
    """Line-of-sight range to the target, lost outside the view cone.

    Valid iff the target lies within ``max_range`` and its bearing is within
    +-fov_half_angle of the ego heading; the reading is the true Euclidean
    distance plus Gaussian noise.
    """
    dx = target_pose_true.x - ego_pose_true.x
    dy = target_pose_true.y - ego_pose_true.y
    dist = math.hypot(dx, dy)
    if dist > max_range:
        return RangeReading(valid=False)
    bearing = normalize_angle(math.atan2(dy, dx) - ego_pose_true.theta)
    if abs(bearing) > fov_half_angle:
        return RangeReading(valid=False)
    noisy = dist + (rng.gauss(0.0, noise_std) if noise_std > 0 else 0.0)
    return RangeReading(valid=True, distance=noisy)


def emulated_gps(
    true_pose: Pose2D,
    prev_true_pose: Pose2D | None,
    noise_std_pos: float,
    rng: random.Random,
    timestamp: SimTime | None = None,
) -> GpsFix:
    """Overhead-localizer fix: position plus displacement-derived heading.

    Heading is the angle of the chord between this fix's position and the
    previous one; with no previous fix, or displacement under 1 mm (vehicle
    at rest), the fix carries no heading.
    """
    nx = rng.gauss(0.0, noise_std_pos) if noise_std_pos > 0 else 0.0
    ny = rng.gauss(0.0, noise_std_pos) if noise_std_pos > 0 else 0.0
    theta = None
    if prev_true_pose is not None:
        dx = true_pose.x - prev_true_pose.x
        dy = true_pose.y - prev_true_pose.y
        if math.hypot(dx, dy) >= MIN_HEADING_DISPLACEMENT:
            theta = math.atan2(dy, dx)
    return GpsFix(x=true_pose.x + nx, y=true_pose.y + ny, theta=theta, timestamp=timestamp)


def measure_imu(
    v_true: float,
    yaw_rate_true: float,
    noise_std_v: float,
    noise_std_yaw: float,
    rng: random.Random,
) -> ImuInput:
    """Encoder speed and gyro yaw rate: truth plus Gaussian noise."""
    v = v_true + (rng.gauss(0.0, noise_std_v) if noise_std_v > 0 else 0.0)
    w = yaw_rate_true + (rng.gauss(0.0, noise_std_yaw) if noise_std_yaw > 0 else 0.0)
    return ImuInput(v=v, yaw_rate=w)
