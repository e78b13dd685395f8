"""Datagram-style V2V link: rate-limited, lossy, optionally delayed.

One Channel models one directed robot-to-robot link. Sends are dropped
independently with the configured probability (silently, as on a real
datagram socket); survivors arrive after the configured latency, in send
order. All loss decisions come from a dedicated seeded generator.
"""

from __future__ import annotations

import json
import random
from collections import deque
from dataclasses import dataclass, field

from .core import Pose2D, SimTime, ticks_per_period


@dataclass(frozen=True)
class V2VMessage:
    """State broadcast by a vehicle: its localized pose (not ground truth),
    its current target acceleration, and its measured speed."""

    sender_id: str
    pose: Pose2D
    target_accel: float  # m/s^2
    velocity: float  # m/s
    sent_at: SimTime


@dataclass(frozen=True)
class ChannelConfig:
    rate_hz: float = 20.0
    loss_prob: float = 0.05
    latency: float = 0.0  # s
    rng_seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.loss_prob <= 1.0:
            raise ValueError("loss_prob must lie in [0, 1]")
        if self.latency < 0:
            raise ValueError("latency must be non-negative")


@dataclass
class Channel:
    """Directed link with FIFO delivery of surviving messages."""

    config: ChannelConfig = field(default_factory=ChannelConfig)

    def __post_init__(self):
        self._rng = random.Random(self.config.rng_seed)
        self._pending: deque[tuple[int, V2VMessage]] = deque()
        self._last_send_tick: int | None = None
        self.sent = 0
        self.delivered = 0
        self.dropped = 0

    def send(self, msg: V2VMessage) -> None:
        """Submit a message; it may be silently lost.

        Raises:
            ValueError: called faster than the configured rate allows.
        """
        dt = msg.sent_at.dt_base
        period = ticks_per_period(self.config.rate_hz, dt)
        tick = msg.sent_at.tick
        if self._last_send_tick is not None and tick - self._last_send_tick < period:
            raise ValueError(
                f"send at tick {tick} violates the {self.config.rate_hz} Hz rate "
                f"limit (previous send at tick {self._last_send_tick})"
            )
        self._last_send_tick = tick
        self.sent += 1
        if self.config.loss_prob > 0 and self._rng.random() < self.config.loss_prob:
            self.dropped += 1
            return
        deliver_tick = tick + round(self.config.latency / dt)
        self._pending.append((deliver_tick, msg))

    def poll(self, now: SimTime) -> list[V2VMessage]:
        """All messages due by ``now``, in send order, each exactly once."""
        out = []
        while self._pending and self._pending[0][0] <= now.tick:
            out.append(self._pending.popleft()[1])
        self.delivered += len(out)
        return out


def message_to_json(msg: V2VMessage) -> str:
    """One JSON-lines record per message, tick-stamped."""
    return json.dumps(
        {
            "tick": msg.sent_at.tick,
            "sender_id": msg.sender_id,
            "x": msg.pose.x,
            "y": msg.pose.y,
            "theta": msg.pose.theta,
            "target_accel": msg.target_accel,
            "velocity": msg.velocity,
        },
        separators=(",", ":"),
    )


def message_from_json(line: str, dt_base: float = 0.01) -> V2VMessage:
    d = json.loads(line)
    return V2VMessage(
        sender_id=d["sender_id"],
        pose=Pose2D(d["x"], d["y"], d["theta"]),
        target_accel=d["target_accel"],
        velocity=d["velocity"],
        sent_at=SimTime(d["tick"], dt_base),
    )
