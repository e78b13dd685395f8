"""Longitudinal vehicle-following control and the gap-source supervisor.

The controller is PD feedback on the gap-keeping error plus a feedforward
branch that filters the predecessor's target acceleration through
(tau*s + 1)/(h*s + 1). The supervisor prefers the range sensor whenever it
returns a plausible value and falls back to the map-based approximation
otherwise; if both sources die it holds the last gap briefly, then gives up
following and coasts at constant speed.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

from .gap import GapEstimate
from .sensors import RangeReading


class GapSource(enum.Enum):
    RANGE_SENSOR = "range_sensor"
    APPROXIMATION = "approximation"
    NONE = "none"


@dataclass(frozen=True)
class ControllerConfig:
    kp: float = 2.0  # 1/s^2
    kd: float = 2.8  # 1/s
    h: float = 0.8  # s, time gap
    l0: float = 0.2  # m, standstill distance
    u_min: float = -1.5  # m/s^2
    u_max: float = 1.5  # m/s^2
    ff_enabled: bool = True
    tau: float = 0.0661  # s, plant lag the feedforward inverts
    deriv_tau: float = 0.05  # s, derivative-filter time constant

    def __post_init__(self):
        if self.kp <= 0 or self.kd <= 0:
            raise ValueError("kp and kd must be positive")
        if not self.u_min < 0 < self.u_max:
            raise ValueError("need u_min < 0 < u_max")
        if self.h <= 0:
            raise ValueError("time gap h must be positive")


def gap_error(gap: float, v_follower: float, cfg: ControllerConfig) -> float:
    """Gap-keeping error: measured gap minus desired (h*v + l0)."""
    if gap < 0:
        raise ValueError("gap must be non-negative")
    return gap - (cfg.h * v_follower + cfg.l0)


def feedback_accel(e: float, e_dot: float, cfg: ControllerConfig) -> float:
    """PD feedback, saturated to the actuation limits."""
    return min(max(cfg.kp * e + cfg.kd * e_dot, cfg.u_min), cfg.u_max)


class DerivativeFilter:
    """First-order-filtered differentiator, s/(tau*s + 1) discretized as

        y[k] = p*y[k-1] + (1-p)/dt * (u[k] - u[k-1]),  p = exp(-dt/tau)

    which reproduces ramp slopes exactly. reseed() restarts the filter from
    the current input so a source switch does not produce a derivative kick.
    """

    def __init__(self, tau: float, dt: float):
        self.p = math.exp(-dt / tau)
        self.gain = (1.0 - self.p) / dt
        self._u_prev: float | None = None
        self._y = 0.0

    def reseed(self, value: float) -> None:
        self._u_prev = value
        self._y = 0.0

    def step(self, value: float) -> float:
        if self._u_prev is None:
            self._u_prev = value
        self._y = self.p * self._y + self.gain * (value - self._u_prev)
        self._u_prev = value
        return self._y


class FeedforwardFilter:
    """Bilinear-transform realization of (tau*s + 1)/(h*s + 1).

    This is the invertible part of the ideal feedforward filter for the
    first-order velocity plant under a constant-time-gap policy; the pure
    delay an exact inversion would need to advance is dropped. DC gain is
    exactly one.
    """

    def __init__(self, tau: float, h: float, dt: float):
        self.b0 = 2.0 * tau / dt + 1.0
        self.b1 = 1.0 - 2.0 * tau / dt
        self.a0 = 2.0 * h / dt + 1.0
        self.a1 = 1.0 - 2.0 * h / dt
        self._u_prev = 0.0
        self._y_prev = 0.0

    def step(self, u: float) -> float:
        y = (self.b0 * u + self.b1 * self._u_prev - self.a1 * self._y_prev) / self.a0
        self._u_prev = u
        self._y_prev = y
        return y

    def reset(self) -> None:
        self._u_prev = 0.0
        self._y_prev = 0.0


def feedforward_accel(ff: FeedforwardFilter, u_leader: float, dt: float) -> float:
    """One feedforward-filter step on the received leader target acceleration."""
    return ff.step(u_leader)


@dataclass(frozen=True)
class SwitchingConfig:
    """Supervisor policy knobs.

    source_offset converts both raw source distances (reference-point to
    reference-point) into the bumper-to-bumper gap the spacing policy wants;
    applying one shared offset keeps source switches continuous.
    """

    source_offset: float = 0.0  # m, added to every raw source distance
    hold_timeout: float = 0.5  # s, hold-last-gap budget before coasting


@dataclass
class GapSourceState:
    """Mutable supervisor state carried across ticks."""

    active_source: GapSource = GapSource.NONE
    validity_band: tuple[float, float] | None = None  # m, on the bumper gap
    last_valid_gap: float | None = None
    last_valid_time: float | None = None


def select_gap(
    range_reading: RangeReading,
    estimate: GapEstimate | None,
    state: GapSourceState,
    cfg: SwitchingConfig,
    now: float,
) -> tuple[float | None, GapSource]:
    """Pick the gap fed to the controller and update the supervisor state.

    Preference order: range sensor if valid and inside the validity band,
    else the approximation, else hold the last good value for up to
    cfg.hold_timeout seconds, else None (caller coasts).
    """
    gap: float | None = None
    source = GapSource.NONE
    if range_reading.valid:
        d = range_reading.distance + cfg.source_offset
        band = state.validity_band
        if band is None or band[0] <= d <= band[1]:
            gap, source = d, GapSource.RANGE_SENSOR
    if gap is None and estimate is not None:
        gap, source = estimate.distance + cfg.source_offset, GapSource.APPROXIMATION
    if gap is not None:
        state.active_source = source
        state.last_valid_gap = gap
        state.last_valid_time = now
        return gap, source
    # both sources gone: hold, then give up
    if (
        state.last_valid_gap is not None
        and state.last_valid_time is not None
        and now - state.last_valid_time <= cfg.hold_timeout
    ):
        return state.last_valid_gap, state.active_source
    state.active_source = GapSource.NONE
    return None, GapSource.NONE


class CaccController:
    """Per-vehicle longitudinal controller with explicit filter state.

    step() consumes the selected gap, the freshest predecessor target
    acceleration (already subject to the caller's dropout policy), and the
    own measured speed; it returns the commanded acceleration. With a None
    gap the vehicle coasts (u = 0), which is plain cruise control.
    """

    def __init__(self, cfg: ControllerConfig, dt: float):
        self.cfg = cfg
        self.dt = dt
        self._d_gap = DerivativeFilter(cfg.deriv_tau, dt)
        self._d_v = DerivativeFilter(cfg.deriv_tau, dt)
        self._ff = FeedforwardFilter(cfg.tau, cfg.h, dt)
        self._last_source: GapSource | None = None
        self.last_error: float | None = None

    def step(
        self,
        gap: float | None,
        source: GapSource,
        u_leader: float,
        v_self: float,
        dt: float,
    ) -> float:
        if abs(dt - self.dt) > 1e-12:
            raise ValueError("controller stepped at a different rate than built for")
        u_ff = self._ff.step(u_leader if self.cfg.ff_enabled else 0.0)
        if gap is None:
            self.last_error = None
            self._last_source = GapSource.NONE
            return 0.0
        if source != self._last_source:
            self._d_gap.reseed(gap)
            self._last_source = source
        e = gap_error(gap, v_self, self.cfg)
        e_dot = self._d_gap.step(gap) - self.cfg.h * self._d_v.step(v_self)
        u_fb = feedback_accel(e, e_dot, self.cfg)
        self.last_error = e
        u = u_fb + (u_ff if self.cfg.ff_enabled else 0.0)
        return min(max(u, self.cfg.u_min), self.cfg.u_max)
