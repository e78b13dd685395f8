"""Extended Kalman filter fusing low-rate pose fixes with dead reckoning.

State [x, y, theta]; inputs are encoder longitudinal speed and gyro yaw
rate at the base rate, corrections come from 2 Hz absolute pose fixes. The
motion update is

    x+     = x + dt * v * cos(theta + dt * thetadot)
    y+     = y + dt * v * sin(theta + dt * thetadot)
    theta+ = theta + dt * thetadot

Between fixes the estimate runs on the motion update alone. The default
measurement covariance treats the fix positions as exact (the overhead
localizer is accurate to the pixel) and only the derived heading as noisy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import Pose2D, SimTime, normalize_angle

DEFAULT_W = (0.01, 0.01, 0.001)  # process noise diagonal
DEFAULT_V = (0.0, 0.0, 0.01)  # measurement noise diagonal
DEFAULT_P0 = (0.01, 0.01, 0.01)  # initial covariance diagonal


@dataclass(frozen=True)
class ImuInput:
    """Dead-reckoning inputs for one base step."""

    v: float  # m/s, encoder longitudinal speed
    yaw_rate: float  # rad/s, gyro


@dataclass(frozen=True)
class GpsFix:
    """Absolute pose measurement; theta is None when heading is unavailable
    (the source derives heading from displacement and emits none at rest)."""

    x: float
    y: float
    theta: float | None
    timestamp: SimTime | None = None


class Ekf:
    """One filter instance per vehicle.

    Attributes:
        x_hat: current state estimate [x, y, theta].
        P: 3x3 error covariance, kept symmetric PSD by re-symmetrization.
    """

    def __init__(
        self,
        x0: float = 0.0,
        y0: float = 0.0,
        theta0: float = 0.0,
        W=DEFAULT_W,
        V=DEFAULT_V,
        P0=DEFAULT_P0,
    ):
        self.x_hat = np.array([x0, y0, normalize_angle(theta0)], dtype=float)
        self.W = self._as_cov(W)
        self.V = self._as_cov(V)
        self.P = self._as_cov(P0)
        self.H = np.eye(3)

    @staticmethod
    def _as_cov(m) -> np.ndarray:
        m = np.asarray(m, dtype=float)
        if m.ndim == 1:
            m = np.diag(m)
        if m.shape != (3, 3):
            raise ValueError("covariance must be 3x3 or a length-3 diagonal")
        return m.copy()

    @property
    def pose(self) -> Pose2D:
        return Pose2D(float(self.x_hat[0]), float(self.x_hat[1]), float(self.x_hat[2]))

    def motion_update(self, u: ImuInput, dt: float) -> np.ndarray:
        x, y, theta = self.x_hat
        heading = theta + dt * u.yaw_rate
        return np.array(
            [
                x + dt * u.v * math.cos(heading),
                y + dt * u.v * math.sin(heading),
                theta + dt * u.yaw_rate,
            ]
        )

    def jacobian(self, u: ImuInput, dt: float) -> np.ndarray:
        """State-transition Jacobian of the motion update at the current state."""
        heading = float(self.x_hat[2]) + dt * u.yaw_rate
        A = np.eye(3)
        A[0, 2] = -u.v * dt * math.sin(heading)
        A[1, 2] = u.v * dt * math.cos(heading)
        return A

    def predict(self, u: ImuInput, dt: float) -> None:
        """Motion update plus covariance propagation P <- A P A^T + W."""
        A = self.jacobian(u, dt)
        self.x_hat = self.motion_update(u, dt)
        self.x_hat[2] = normalize_angle(float(self.x_hat[2]))
        P = A @ self.P @ A.T + self.W
        self.P = (P + P.T) / 2.0

    def correct(self, z: GpsFix) -> None:
        """Measurement update; call after the predict for the same step.

        A fix without heading corrects x, y only. The heading innovation is
        wrapped so corrections never take the long way around the circle.

        Raises:
            np.linalg.LinAlgError: innovation covariance singular (cannot
                happen with a positive heading variance, guarded anyway).
        """
        if z.theta is None:
            H = self.H[:2]
            V = self.V[:2, :2]
            innov = np.array([z.x - self.x_hat[0], z.y - self.x_hat[1]])
        else:
            H = self.H
            V = self.V
            innov = np.array(
                [
                    z.x - self.x_hat[0],
                    z.y - self.x_hat[1],
                    normalize_angle(z.theta - float(self.x_hat[2])),
                ]
            )
        m = H.shape[0]
        S = self.P[:m, :m] + V
        # K = P H^T S^-1, written as [I - V S^-1 ; P_cross S^-1] so that
        # zero-variance measurement rows snap the state exactly
        top = np.eye(m) - np.linalg.solve(S.T, V.T).T
        if m < 3:
            bottom = np.linalg.solve(S.T, self.P[:m, m:]).T
            K = np.vstack([top, bottom])
        else:
            K = top
        self.x_hat = self.x_hat + K @ innov
        # a zero-variance measurement row pins the posterior to the
        # measurement exactly; the increment form can be one ulp off
        z_vec = (z.x, z.y, z.theta)
        for i in range(m):
            if V[i, i] == 0.0:
                self.x_hat[i] = z_vec[i]
        self.x_hat[2] = normalize_angle(float(self.x_hat[2]))
        P = (np.eye(3) - K @ H) @ self.P
        self.P = (P + P.T) / 2.0
