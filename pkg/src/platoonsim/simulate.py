"""Deterministic scenario runner: phased tick loop, trace, and summary.

Tick phases: sense -> communicate -> control -> integrate. Each record in
the trace captures the world at the start of the tick together with the
commands decided on it, so cause (a leader command) can never appear later
than effect (follower reaction) in the same file.
"""

from __future__ import annotations

import dataclasses
import io
import json
import math
import random
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .comms import Channel, ChannelConfig, V2VMessage, message_to_json
from .controller import (
    CaccController,
    GapSource,
    GapSourceState,
    SwitchingConfig,
    select_gap,
)
from .core import Pose2D, SimTime, ticks_per_period
from .dynamics import LongitudinalState, step_accel_mode, step_velocity_mode
from .ekf import Ekf
from .gap import GapError, approximate_gap
from .lanemap import AmbiguousSegmentError
from .pursuit import kinematic_step, pursuit_curvature
from .scenario import Scenario
from .sensors import RangeReading, emulated_gps, measure_imu, range_sensor

STEADY_SKIP_S = 10.0  # startup transient excluded from statistics
FF_HOLD_S = 0.25  # how long a stale leader acceleration keeps feeding forward
MIN_TIME_GAP_SPEED = 0.01  # m/s, below this the time gap is undefined


@dataclass
class VehicleTick:
    true_x: float
    true_y: float
    true_theta: float
    est_x: float
    est_y: float
    est_theta: float
    v: float
    u_cmd: float


@dataclass
class GapTick:
    gap_range: float | None
    gap_approx: float | None
    gap_used: float | None
    source: str
    error: float | None
    time_gap: float | None
    approx_fault: str | None = None


@dataclass
class TraceRecord:
    tick: int
    t: float
    vehicles: dict[str, VehicleTick]
    gaps: dict[str, GapTick]


@dataclass
class FollowerSummary:
    time_gap_mean: float | None
    time_gap_std: float | None
    max_abs_error: float | None
    switches: list[dict]
    source_ticks: dict[str, int]
    cc_intervals: list[tuple[float, float]]
    approx_faults: dict[str, int]


@dataclass
class Summary:
    scenario: str
    seed: int
    duration: float
    n_ticks: int
    steady_window: tuple[float, float] | None
    followers: dict[str, FollowerSummary]
    ekf_rms: dict[str, float | None]
    wall_time_s: float

    def to_json(self) -> str:
        return json.dumps(dataclasses.asdict(self), indent=2, sort_keys=True)


class _SimVehicle:
    """Mutable per-vehicle simulation state (internal)."""

    def __init__(self, spec, scenario: Scenario, base_rng: random.Random):
        self.spec = spec
        self.name = spec.name
        lm = scenario.lane_map
        x, y = lm.point_at_arc(spec.start_arc)
        self.pose = Pose2D(x, y, lm.tangent_at_arc(spec.start_arc))
        v0 = scenario.profile_speed(0.0)  # platoon starts matched to the profile
        self.lon = LongitudinalState.initial(spec.params, v0=v0)
        self.v_true = v0  # speed over the last integrated interval
        self.yaw_rate_true = 0.0
        self.ekf = Ekf(self.pose.x, self.pose.y, self.pose.theta)
        self.rng_imu = random.Random(base_rng.getrandbits(63))
        self.rng_gps = random.Random(base_rng.getrandbits(63))
        self.rng_range = random.Random(base_rng.getrandbits(63))
        self.gps_prev_true: Pose2D | None = None
        self.in_channel: Channel | None = None
        self.out_channel: Channel | None = None
        self.pred: "_SimVehicle | None" = None
        self.controller: CaccController | None = None
        self.switch_cfg: SwitchingConfig | None = None
        self.gap_state = GapSourceState(validity_band=scenario.switching.band)
        self.last_msg: V2VMessage | None = None
        self.last_imu = None
        self.range_reading = RangeReading(valid=False)
        self.u_cmd = 0.0  # commanded accel decided this tick
        self.u_broadcast = 0.0  # target accel shared over V2V
        self.sq_pos_err = 0.0  # EKF error accumulator
        self.n_err = 0

        if spec.follows is not None:
            self.controller = CaccController(spec.controller, scenario.dt)


def run_scenario(
    scenario: Scenario, v2v_log: list[str] | None = None
) -> tuple[list[TraceRecord], Summary]:
    """Execute the phased tick loop for the scenario's full duration.

    Pass a list as ``v2v_log`` to collect one JSON line per sent message.
    """
    t_start = time.perf_counter()
    dt = scenario.dt
    n_ticks = round(scenario.duration / dt)
    gps_every = ticks_per_period(scenario.sensors.gps_rate_hz, dt)
    comms_every = ticks_per_period(scenario.channel.rate_hz, dt)
    sens = scenario.sensors
    sw = scenario.switching
    lm = scenario.lane_map

    base_rng = random.Random(scenario.seed)
    vehicles = [_SimVehicle(spec, scenario, base_rng) for spec in scenario.vehicles]
    by_name = {v.name: v for v in vehicles}
    for veh in vehicles:
        if veh.spec.follows is not None:
            pred = by_name[veh.spec.follows]
            chan = Channel(
                ChannelConfig(
                    rate_hz=scenario.channel.rate_hz,
                    loss_prob=scenario.channel.loss_prob,
                    latency=scenario.channel.latency,
                    rng_seed=base_rng.getrandbits(63),
                )
            )
            pred.out_channel = chan
            veh.in_channel = chan
            veh.pred = pred
            # both gap sources measure between vehicle reference points;
            # subtracting the predecessor body length yields the bumper gap
            veh.switch_cfg = SwitchingConfig(
                source_offset=-pred.spec.params.body_length + sw.offset_trim,
                hold_timeout=sw.hold_timeout,
            )

    trace: list[TraceRecord] = []

    for tick in range(n_ticks):
        t = tick * dt
        now = SimTime(tick, dt)

        # --- sense ---------------------------------------------------
        for veh in vehicles:
            imu = measure_imu(
                veh.v_true,
                veh.yaw_rate_true,
                sens.encoder_noise_std,
                sens.imu_noise_std,
                veh.rng_imu,
            )
            veh.last_imu = imu
            veh.ekf.predict(imu, dt)
            if tick % gps_every == 0:
                fix = emulated_gps(
                    veh.pose, veh.gps_prev_true, sens.gps_noise_std, veh.rng_gps, now
                )
                veh.ekf.correct(fix)
                veh.gps_prev_true = veh.pose
            est = veh.ekf.pose
            veh.sq_pos_err += (est.x - veh.pose.x) ** 2 + (est.y - veh.pose.y) ** 2
            veh.n_err += 1
        for veh in vehicles:
            if veh.in_channel is not None:
                veh.range_reading = range_sensor(
                    veh.pose,
                    veh.pred.pose,
                    sens.range_fov_half_angle,
                    sens.range_max,
                    sens.range_noise_std,
                    veh.rng_range,
                )

        # --- communicate ----------------------------------------------
        if tick % comms_every == 0:
            for veh in vehicles:
                if veh.out_channel is not None:
                    msg = V2VMessage(
                        sender_id=veh.name,
                        pose=veh.ekf.pose,
                        target_accel=veh.u_broadcast,
                        velocity=veh.last_imu.v,
                        sent_at=now,
                    )
                    veh.out_channel.send(msg)
                    if v2v_log is not None:
                        v2v_log.append(message_to_json(msg))
        for veh in vehicles:
            if veh.in_channel is not None:
                for msg in veh.in_channel.poll(now):
                    veh.last_msg = msg

        # --- control ---------------------------------------------------
        gap_ticks: dict[str, GapTick] = {}
        for veh in vehicles:
            if veh.spec.follows is None:
                veh.u_broadcast = scenario.profile_slope(t)
                veh.u_cmd = veh.u_broadcast
                continue
            estimate = None
            fault = None
            if veh.last_msg is not None:
                staleness = (tick - veh.last_msg.sent_at.tick) * dt
                try:
                    estimate = approximate_gap(
                        veh.ekf.pose,
                        veh.last_msg.pose,
                        lm,
                        scenario.gap_cfg,
                        leader_staleness=staleness,
                    )
                except (GapError, AmbiguousSegmentError) as exc:
                    fault = type(exc).__name__
            range_for_select = (
                veh.range_reading
                if sw.mode == "range_with_fallback"
                else RangeReading(valid=False)
            )
            gap, source = select_gap(
                range_for_select, estimate, veh.gap_state, veh.switch_cfg, t
            )
            u_leader = 0.0
            if (
                veh.last_msg is not None
                and (tick - veh.last_msg.sent_at.tick) * dt <= FF_HOLD_S
            ):
                u_leader = veh.last_msg.target_accel
            u = veh.controller.step(gap, source, u_leader, veh.last_imu.v, dt)
            veh.u_cmd = u
            veh.u_broadcast = u
            off = veh.switch_cfg.source_offset
            v_meas = veh.last_imu.v
            gap_ticks[veh.name] = GapTick(
                gap_range=(
                    veh.range_reading.distance + off if veh.range_reading.valid else None
                ),
                gap_approx=(estimate.distance + off if estimate is not None else None),
                gap_used=gap,
                source=source.value,
                error=veh.controller.last_error,
                time_gap=(
                    (gap - veh.spec.params.l0) / v_meas
                    if gap is not None and v_meas > MIN_TIME_GAP_SPEED
                    else None
                ),
                approx_fault=fault,
            )

        # --- record ----------------------------------------------------
        trace.append(
            TraceRecord(
                tick=tick,
                t=t,
                vehicles={
                    veh.name: VehicleTick(
                        true_x=veh.pose.x,
                        true_y=veh.pose.y,
                        true_theta=veh.pose.theta,
                        est_x=float(veh.ekf.x_hat[0]),
                        est_y=float(veh.ekf.x_hat[1]),
                        est_theta=float(veh.ekf.x_hat[2]),
                        v=veh.lon.v,
                        u_cmd=veh.u_cmd,
                    )
                    for veh in vehicles
                },
                gaps=gap_ticks,
            )
        )

        # --- integrate ---------------------------------------------------
        for veh in vehicles:
            if veh.spec.follows is None:
                veh.lon = step_velocity_mode(
                    veh.lon, scenario.profile_speed(t), dt, veh.spec.params
                )
            else:
                veh.lon = step_accel_mode(veh.lon, veh.u_cmd, dt, veh.spec.params)
            kappa = pursuit_curvature(veh.pose, lm, scenario.pursuit)
            veh.pose = kinematic_step(veh.pose, veh.lon.v, kappa, dt)
            veh.v_true = veh.lon.v
            veh.yaw_rate_true = veh.lon.v * kappa

    summary = _summarize(scenario, trace, vehicles, time.perf_counter() - t_start)
    return trace, summary


def _summarize(scenario, trace, vehicles, wall_time) -> Summary:
    steady = None
    if scenario.duration > STEADY_SKIP_S:
        steady = (STEADY_SKIP_S, scenario.duration)
    followers = {}
    for veh in vehicles:
        if veh.spec.follows is None:
            continue
        name = veh.name
        tgs = []
        errs = []
        switches = []
        source_ticks: dict[str, int] = {}
        faults: dict[str, int] = {}
        cc_intervals: list[tuple[float, float]] = []
        cc_open: float | None = None
        prev_source = None
        for rec in trace:
            g = rec.gaps[name]
            source_ticks[g.source] = source_ticks.get(g.source, 0) + 1
            if g.approx_fault:
                faults[g.approx_fault] = faults.get(g.approx_fault, 0) + 1
            if prev_source is not None and g.source != prev_source:
                switches.append({"t": rec.t, "from": prev_source, "to": g.source})
            prev_source = g.source
            if g.source == GapSource.NONE.value:
                if cc_open is None:
                    cc_open = rec.t
            elif cc_open is not None:
                cc_intervals.append((cc_open, rec.t))
                cc_open = None
            if steady is not None and rec.t >= steady[0]:
                if g.time_gap is not None:
                    tgs.append(g.time_gap)
                if g.error is not None:
                    errs.append(abs(g.error))
        if cc_open is not None and trace:
            cc_intervals.append((cc_open, trace[-1].t))
        followers[name] = FollowerSummary(
            time_gap_mean=float(np.mean(tgs)) if tgs else None,
            time_gap_std=float(np.std(tgs)) if tgs else None,
            max_abs_error=float(np.max(errs)) if errs else None,
            switches=switches,
            source_ticks=source_ticks,
            cc_intervals=cc_intervals,
            approx_faults=faults,
        )
    ekf_rms = {
        veh.name: (math.sqrt(veh.sq_pos_err / veh.n_err) if veh.n_err else None)
        for veh in vehicles
    }
    return Summary(
        scenario=scenario.name,
        seed=scenario.seed,
        duration=scenario.duration,
        n_ticks=len(trace),
        steady_window=steady,
        followers=followers,
        ekf_rms=ekf_rms,
        wall_time_s=wall_time,
    )


# ---------------------------------------------------------------------------
# trace I/O


def _columns(trace: list[TraceRecord]) -> list[str]:
    if not trace:
        return ["tick", "t"]
    rec = trace[0]
    cols = ["tick", "t"]
    for name in rec.vehicles:
        cols += [f"{name}_{f.name}" for f in dataclasses.fields(VehicleTick)]
    for name in rec.gaps:
        cols += [
            f"{name}_{f.name}"
            for f in dataclasses.fields(GapTick)
            if f.name != "approx_fault"
        ]
    return cols


def emit_csv(trace: list[TraceRecord], path: str | Path | None = None) -> str:
    """Render the trace as CSV (full float precision); optionally write it."""
    out = io.StringIO()
    out.write(",".join(_columns(trace)) + "\n")
    for rec in trace:
        cells: list[str] = [str(rec.tick), repr(rec.t)]
        for vt in rec.vehicles.values():
            cells += [repr(getattr(vt, f.name)) for f in dataclasses.fields(VehicleTick)]
        for gt in rec.gaps.values():
            for f in dataclasses.fields(GapTick):
                if f.name == "approx_fault":
                    continue
                val = getattr(gt, f.name)
                if val is None:
                    cells.append("")
                elif isinstance(val, str):
                    cells.append(val)
                else:
                    cells.append(repr(val))
        out.write(",".join(cells) + "\n")
    text = out.getvalue()
    if path is not None:
        Path(path).write_text(text, encoding="ascii")
    return text


def read_csv(path_or_text: str | Path) -> list[dict]:
    """Parse an emitted CSV back into row dicts (floats, strings, None)."""
    p = Path(path_or_text) if isinstance(path_or_text, Path) else None
    text = p.read_text(encoding="ascii") if p else str(path_or_text)
    lines = text.splitlines()
    if not lines:
        return []
    header = lines[0].split(",")
    rows = []
    for ln in lines[1:]:
        cells = ln.split(",")
        row: dict = {}
        for key, cell in zip(header, cells):
            if cell == "":
                row[key] = None
            else:
                try:
                    row[key] = int(cell) if key == "tick" else float(cell)
                except ValueError:
                    row[key] = cell
        rows.append(row)
    return rows


def emit_summary(summary: Summary) -> str:
    """Human-readable key: value rendering of the summary."""
    lines = [
        f"scenario: {summary.scenario}",
        f"seed: {summary.seed}",
        f"duration_s: {summary.duration}",
        f"ticks: {summary.n_ticks}",
        f"steady_window: {summary.steady_window}",
        f"wall_time_s: {summary.wall_time_s:.3f}",
    ]
    for name, rms in summary.ekf_rms.items():
        lines.append(f"{name}.ekf_rms_m: {'n/a' if rms is None else f'{rms:.4f}'}")
    for name, f in summary.followers.items():
        mean = "n/a" if f.time_gap_mean is None else f"{f.time_gap_mean:.4f}"
        std = "n/a" if f.time_gap_std is None else f"{f.time_gap_std:.4f}"
        maxe = "n/a" if f.max_abs_error is None else f"{f.max_abs_error:.4f}"
        lines.append(f"{name}.time_gap_mean_s: {mean}")
        lines.append(f"{name}.time_gap_std_s: {std}")
        lines.append(f"{name}.max_abs_gap_error_m: {maxe}")
        lines.append(f"{name}.switch_count: {len(f.switches)}")
        for s in f.switches:
            lines.append(
                f"{name}.switch: t={s['t']:.2f} {s['from']} -> {s['to']}"
            )
        lines.append(f"{name}.source_ticks: {f.source_ticks}")
        if f.cc_intervals:
            lines.append(f"{name}.cc_intervals: {f.cc_intervals}")
        if f.approx_faults:
            lines.append(f"{name}.approx_faults: {f.approx_faults}")
    return "\n".join(lines) + "\n"


def write_outputs(
    out_dir: str | Path,
    trace: list[TraceRecord],
    summary: Summary,
    v2v_log: list[str] | None = None,
) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    emit_csv(trace, out / "trace.csv")
    (out / "summary.json").write_text(summary.to_json(), encoding="utf-8")
    (out / "summary.txt").write_text(emit_summary(summary), encoding="utf-8")
    if v2v_log is not None:
        (out / "v2v.jsonl").write_text(
            "\n".join(v2v_log) + ("\n" if v2v_log else ""), encoding="utf-8"
        )
