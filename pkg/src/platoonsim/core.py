"""Shared domain types and the simulation clock contract."""

from __future__ import annotations

import math
from dataclasses import dataclass

TWO_PI = 2.0 * math.pi


def normalize_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi].

    Raises:
        ValueError: if ``a`` is not finite.
    """
    if not math.isfinite(a):
        raise ValueError(f"angle must be finite, got {a!r}")
    r = math.remainder(a, TWO_PI)
    if r <= -math.pi:
        r += TWO_PI
    return r


@dataclass(frozen=True)
class Pose2D:
    """Planar pose: position in meters, heading in radians (CCW from +x).

    Heading is stored normalized to (-pi, pi].
    """

    x: float
    y: float
    theta: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError("pose position must be finite")
        object.__setattr__(self, "theta", normalize_angle(self.theta))

    @property
    def xy(self) -> tuple[float, float]:
        return (self.x, self.y)

    def distance_to(self, other: "Pose2D") -> float:
        return math.hypot(other.x - self.x, other.y - self.y)


@dataclass(frozen=True)
class SimTime:
    """Discrete simulation instant: integer tick count on a fixed base step.

    All module rates (100 Hz state update, 20 Hz comms, 2 Hz position fixes)
    are realized as integer tick multiples of ``dt_base`` so that clocks never
    drift apart.
    """

    tick: int
    dt_base: float = 0.01  # seconds per base step

    def __post_init__(self):
        if self.dt_base <= 0:
            raise ValueError("dt_base must be positive")

    @property
    def seconds(self) -> float:
        return self.tick * self.dt_base

    def advanced(self, n_ticks: int = 1) -> "SimTime":
        return SimTime(self.tick + n_ticks, self.dt_base)


def ticks_per_period(rate_hz: float, dt_base: float) -> int:
    """Ticks between events of a periodic process running at ``rate_hz``.

    The period must be an integer multiple of the base step; anything else
    would accumulate drift between module clocks.
    """
    if rate_hz <= 0 or dt_base <= 0:
        raise ValueError("rate and base step must be positive")
    exact = 1.0 / (rate_hz * dt_base)
    n = round(exact)
    if n < 1 or abs(exact - n) > 1e-9 * max(1.0, n):
        raise ValueError(
            f"rate {rate_hz} Hz is not an integer divisor of the "
            f"{1.0 / dt_base:g} Hz base clock"
        )
    return n


@dataclass(frozen=True)
class VehicleParams:
    """Longitudinal plant and spacing-policy parameters for one vehicle.

    tau / tau_d are the identified first-order time constant and actuation
    delay of the velocity loop; the delay is realized as a sample buffer, so
    it must be an integer multiple of the base step.
    """

    tau: float = 0.0661  # s, first-order time constant
    tau_d: float = 0.04  # s, actuation delay
    body_length: float = 0.3  # m
    h: float = 0.8  # s, desired time gap
    l0: float = 0.2  # m, standstill distance
    dt_base: float = 0.01  # s

    def __post_init__(self):
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.tau_d < 0:
            raise ValueError("tau_d must be non-negative")
        if self.body_length <= 0:
            raise ValueError("body_length must be positive")
        if self.h <= 0:
            raise ValueError("time gap h must be positive")
        if self.l0 < 0:
            raise ValueError("standstill distance l0 must be non-negative")
        steps = self.tau_d / self.dt_base
        if abs(steps - round(steps)) > 1e-9:
            raise ValueError(
                f"tau_d={self.tau_d} is not an integer multiple of "
                f"dt_base={self.dt_base}"
            )

    @property
    def delay_steps(self) -> int:
        return round(self.tau_d / self.dt_base)
