"""Discrete-time longitudinal plant: first-order velocity lag with delay.

The drive behaves as a first-order system from commanded to actual velocity
with a pure input delay; acceleration commands are integrated into a
velocity command first, because the motor controller only accepts velocity.
The velocity lag uses the exact zero-order-hold discretization so step
responses carry no integration error.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .core import VehicleParams


@dataclass(frozen=True)
class LongitudinalState:
    """Velocity, traversed arc distance, and the pending-command delay line.

    v_cmd_buffer holds the commands issued during the last ``delay_steps``
    ticks, oldest first; v_des_accum is the integral of acceleration commands
    (the synthesized velocity command in acceleration mode).
    """

    v: float = 0.0  # m/s
    s: float = 0.0  # m
    v_cmd_buffer: tuple[float, ...] = ()
    v_des_accum: float = 0.0

    @staticmethod
    def initial(params: VehicleParams, v0: float = 0.0, s0: float = 0.0) -> "LongitudinalState":
        """State at rest or rolling at v0, delay line pre-filled with v0."""
        return LongitudinalState(
            v=v0,
            s=s0,
            v_cmd_buffer=(v0,) * params.delay_steps,
            v_des_accum=v0,
        )


def step_velocity_mode(
    state: LongitudinalState, v_des: float, dt: float, params: VehicleParams
) -> LongitudinalState:
    """Advance one base step under a velocity command.

    The command passes through the delay line, then the exact ZOH
    discretization of the first-order lag:

        v+ = v + (1 - exp(-dt/tau)) * (v_delayed - v)

    Distance advances by the trapezoid of v over the step. Commands are
    floored at zero: the drive does not reverse.
    """
    if not math.isfinite(v_des):
        raise ValueError("velocity command must be finite")
    if abs(dt - params.dt_base) > 1e-12:
        raise ValueError(f"dt={dt} must equal the base step {params.dt_base}")
    v_des = max(v_des, 0.0)
    buf = state.v_cmd_buffer
    if params.delay_steps > 0:
        if len(buf) != params.delay_steps:
            raise ValueError("delay line length does not match tau_d")
        delayed = buf[0]
        buf = buf[1:] + (v_des,)
    else:
        delayed = v_des
    alpha = 1.0 - math.exp(-dt / params.tau)
    v_next = state.v + alpha * (delayed - state.v)
    s_next = state.s + dt * (state.v + v_next) / 2.0
    return LongitudinalState(
        v=v_next, s=s_next, v_cmd_buffer=buf, v_des_accum=state.v_des_accum
    )


def step_accel_mode(
    state: LongitudinalState, u: float, dt: float, params: VehicleParams
) -> LongitudinalState:
    """Advance one base step under an acceleration command.

    The command is accumulated into a desired-velocity signal which then
    drives the velocity loop, so the full chain from acceleration to
    traversed distance is delay * 1/(s^2 (tau s + 1)).
    """
    if not math.isfinite(u):
        raise ValueError("acceleration command must be finite")
    v_des = max(state.v_des_accum + u * dt, 0.0)
    nxt = step_velocity_mode(
        LongitudinalState(state.v, state.s, state.v_cmd_buffer, v_des),
        v_des,
        dt,
        params,
    )
    return nxt
