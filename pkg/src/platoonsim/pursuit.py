"""Pure-pursuit lane following and the unicycle pose update.

Steering chases a goal point a fixed arc distance ahead on the lane-center
polyline; the commanded curvature is the circle through that goal point.
There is deliberately no lane-deviation feedback on top of it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .core import Pose2D, normalize_angle
from .lanemap import LaneMap


class PathLostError(RuntimeError):
    """No usable path point near the vehicle."""


@dataclass(frozen=True)
class PursuitConfig:
    lookahead: float = 0.4  # m, arc distance to the goal point
    understeer_bias: float = 0.0  # 0..1, extra curvature that cuts curves short

    def __post_init__(self):
        if self.lookahead <= 0:
            raise ValueError("lookahead must be positive")
        if not 0.0 <= self.understeer_bias <= 1.0:
            raise ValueError("understeer_bias must lie in [0, 1]")


def pursuit_curvature(pose: Pose2D, path: LaneMap, cfg: PursuitConfig) -> float:
    """Commanded curvature (1/m, positive = left turn) toward the path.

    The goal point sits ``lookahead`` along the path ahead of the pose's
    projection; kappa = 2*y_goal / lookahead^2 in the vehicle frame. With
    understeer_bias > 0 the command is scaled by (1 + bias), which makes the
    vehicle ride inside curves on a shorter path (the curve-cutting behavior
    seen on the physical robots); bias 0 tracks the lane center.

    Raises:
        PathLostError: the nearest path point is outside the search window.
    """
    s, dist = path.arc_position(pose.x, pose.y)
    window = max(2.0 * cfg.lookahead, 0.5)
    if dist > window:
        raise PathLostError(
            f"nearest lane point {dist:.2f} m away exceeds search window {window:.2f} m"
        )
    gx, gy = path.point_at_arc(s + cfg.lookahead)
    dx = gx - pose.x
    dy = gy - pose.y
    cos_t = math.cos(pose.theta)
    sin_t = math.sin(pose.theta)
    y_local = -sin_t * dx + cos_t * dy
    kappa = 2.0 * y_local / (cfg.lookahead * cfg.lookahead)
    return kappa * (1.0 + cfg.understeer_bias)


def kinematic_step(pose: Pose2D, v: float, curvature: float, dt: float) -> Pose2D:
    """Advance the pose along an exact circular arc (straight when kappa=0)."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    if v == 0.0:
        return pose
    dtheta = v * curvature * dt
    if abs(curvature) < 1e-12:
        return Pose2D(
            pose.x + v * dt * math.cos(pose.theta),
            pose.y + v * dt * math.sin(pose.theta),
            pose.theta,
        )
    r = 1.0 / curvature
    theta_next = pose.theta + dtheta
    return Pose2D(
        pose.x + r * (math.sin(theta_next) - math.sin(pose.theta)),
        pose.y + r * (math.cos(pose.theta) - math.cos(theta_next)),
        normalize_angle(theta_next),
    )
