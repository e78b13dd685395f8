"""Scenario files: versioned key/value text describing one simulation run.

Format sketch (``scenario v1``)::

    scenario v1
    name = exp1_approx_only
    map = oval.lanemap
    duration = 45.0
    seed = 20260810

    [vehicle leader]
    start_arc = 1.0

    [vehicle follower]
    follows = leader
    start_arc = 0.5
    kp = 2.0

    [leader_profile]
    0.0 0.0
    2.0 0.3

Sections carry module configs; ``[leader_profile]`` holds piecewise-linear
(time, speed) knots or a single ``constant = v`` line. Everything is
deterministic given the seed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

from .comms import ChannelConfig
from .controller import ControllerConfig
from .core import VehicleParams
from .gap import GapConfig
from .lanemap import LaneMap, load_map
from .pursuit import PursuitConfig


class ScenarioError(ValueError):
    """Malformed or inconsistent scenario definition."""


@dataclass(frozen=True)
class SensorConfig:
    gps_rate_hz: float = 2.0
    gps_noise_std: float = 0.0  # m; the overhead localizer is pixel-accurate
    encoder_noise_std: float = 0.005  # m/s
    imu_noise_std: float = 0.01  # rad/s
    range_fov_half_angle: float = math.radians(15.0)
    range_max: float = 5.0  # m
    range_noise_std: float = 0.002  # m


@dataclass(frozen=True)
class SwitchingSpec:
    mode: str = "approximation_only"  # or "range_with_fallback"
    band: tuple[float, float] | None = None  # m, validity band on the bumper gap
    hold_timeout: float = 0.5  # s
    max_staleness: float = 0.5  # s, oldest usable communicated pose
    offset_trim: float = 0.0  # m, extra reference-point correction

    def __post_init__(self):
        if self.mode not in ("approximation_only", "range_with_fallback"):
            raise ScenarioError(f"unknown switching mode {self.mode!r}")
        if self.band is not None and self.band[0] > self.band[1]:
            raise ScenarioError("validity band must be (low, high)")


@dataclass(frozen=True)
class VehicleSpec:
    name: str
    start_arc: float
    params: VehicleParams = field(default_factory=VehicleParams)
    follows: str | None = None
    controller: ControllerConfig | None = None


@dataclass(frozen=True)
class Scenario:
    name: str
    lane_map: LaneMap
    vehicles: tuple[VehicleSpec, ...]
    profile: tuple[tuple[float, float], ...]  # (t, v) knots, leader speed
    duration: float
    seed: int
    dt: float = 0.01
    channel: ChannelConfig = field(default_factory=ChannelConfig)
    sensors: SensorConfig = field(default_factory=SensorConfig)
    switching: SwitchingSpec = field(default_factory=SwitchingSpec)
    gap_cfg: GapConfig = field(default_factory=GapConfig)
    pursuit: PursuitConfig = field(default_factory=PursuitConfig)

    def __post_init__(self):
        if self.duration < 0:
            raise ScenarioError("duration must be non-negative")
        if self.dt <= 0:
            raise ScenarioError("dt must be positive")
        if not self.vehicles:
            raise ScenarioError("scenario needs at least one vehicle")
        self._validate_chain()
        self._validate_profile()

    def _validate_chain(self):
        names = [v.name for v in self.vehicles]
        if len(set(names)) != len(names):
            raise ScenarioError("duplicate vehicle names")
        leaders = [v for v in self.vehicles if v.follows is None]
        if len(leaders) != 1:
            raise ScenarioError("exactly one vehicle must lead (no 'follows')")
        by_name = {v.name: v for v in self.vehicles}
        total = self.lane_map.total_length
        for v in self.vehicles:
            if v.follows is None:
                continue
            if v.follows not in by_name:
                raise ScenarioError(f"{v.name} follows unknown vehicle {v.follows!r}")
            if v.controller is None:
                raise ScenarioError(f"follower {v.name} needs a controller config")
            pred = by_name[v.follows]
            ahead = pred.start_arc - v.start_arc
            if self.lane_map.closed:
                ahead %= total
            if not 0.0 < ahead <= total / 2.0:
                raise ScenarioError(
                    f"{v.follows} must start ahead of {v.name} "
                    f"(forward separation {ahead:.2f} m)"
                )

    def _validate_profile(self):
        if not self.profile:
            raise ScenarioError("leader profile must have at least one knot")
        times = [t for t, _ in self.profile]
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ScenarioError("profile times must be strictly increasing")
        if any(v < 0 for _, v in self.profile):
            raise ScenarioError("profile speeds must be non-negative")

    def profile_speed(self, t: float) -> float:
        """Piecewise-linear leader speed, clamped outside the knot range."""
        knots = self.profile
        if t <= knots[0][0]:
            return knots[0][1]
        if t >= knots[-1][0]:
            return knots[-1][1]
        for (t0, v0), (t1, v1) in zip(knots, knots[1:]):
            if t0 <= t <= t1:
                return v0 + (v1 - v0) * (t - t0) / (t1 - t0)
        return knots[-1][1]

    def profile_slope(self, t: float) -> float:
        """Acceleration implied by the profile at time t (0 outside knots)."""
        knots = self.profile
        if t < knots[0][0] or t >= knots[-1][0]:
            return 0.0
        for (t0, v0), (t1, v1) in zip(knots, knots[1:]):
            if t0 <= t < t1:
                return (v1 - v0) / (t1 - t0)
        return 0.0

    @property
    def leader(self) -> VehicleSpec:
        return next(v for v in self.vehicles if v.follows is None)


# ---------------------------------------------------------------------------
# text format


def parse_scenario_text(text: str) -> dict[str, dict]:
    """Parse ``scenario v1`` text into {section: {key: value}} raw form.

    The top-level (pre-section) keys live under the '' section; profile
    knot lines are collected under the '_points' key of their section.
    """
    lines = []
    for raw in text.splitlines():
        ln = raw.split("#", 1)[0].strip()
        if ln:
            lines.append(ln)
    if not lines:
        raise ScenarioError("empty scenario file")
    if lines[0] != "scenario v1":
        raise ScenarioError(f"bad header {lines[0]!r}, expected 'scenario v1'")
    sections: dict[str, dict] = {"": {}}
    current = sections[""]
    for ln in lines[1:]:
        if ln.startswith("[") and ln.endswith("]"):
            name = ln[1:-1].strip()
            if not name:
                raise ScenarioError("empty section name")
            current = sections.setdefault(name, {})
        elif "=" in ln:
            key, val = ln.split("=", 1)
            current[key.strip()] = val.strip()
        else:
            fields = ln.split()
            if len(fields) != 2:
                raise ScenarioError(f"cannot parse line {ln!r}")
            try:
                knot = (float(fields[0]), float(fields[1]))
            except ValueError:
                raise ScenarioError(f"cannot parse line {ln!r}") from None
            current.setdefault("_points", []).append(knot)
    return sections


KNOWN_SECTIONS = ("", "channel", "sensors", "switching", "gap", "pursuit", "leader_profile")


def _section_known(name: str) -> bool:
    return name in KNOWN_SECTIONS or name.startswith("vehicle ")


def apply_overrides(raw: dict[str, dict], overrides: dict[str, str]) -> dict[str, dict]:
    """Apply ``section.key=value`` overrides to a parsed scenario dict.

    A path without a dot targets the top-level section; the section part may
    contain spaces (e.g. ``vehicle follower.kp``). Overrides may introduce a
    section the file omitted, as long as it is one the format knows.
    """
    out = {sec: dict(kv) for sec, kv in raw.items()}
    for path, value in overrides.items():
        if "." in path:
            section, key = path.rsplit(".", 1)
        else:
            section, key = "", path
        if section not in out and not _section_known(section):
            raise ScenarioError(f"override targets unknown section {section!r}")
        out.setdefault(section, {})[key] = value
    return out


def _get(sec: dict, key: str, default, cast):
    if key not in sec:
        return default
    try:
        return cast(sec[key])
    except (TypeError, ValueError) as e:
        raise ScenarioError(f"bad value for {key!r}: {e}") from None


def _bool(v) -> bool:
    if isinstance(v, bool):
        return v
    s = str(v).lower()
    if s in ("on", "true", "yes", "1"):
        return True
    if s in ("off", "false", "no", "0"):
        return False
    raise ValueError(f"expected on/off, got {v!r}")


def _band(v) -> tuple[float, float] | None:
    if v is None or (isinstance(v, str) and v.lower() == "none"):
        return None
    if isinstance(v, (tuple, list)):
        lo, hi = v
        return (float(lo), float(hi))
    parts = str(v).split()
    if len(parts) != 2:
        raise ValueError("band needs two numbers or 'none'")
    return (float(parts[0]), float(parts[1]))


def fixture_path(name: str) -> Path:
    """Path of a shipped fixture file (map or scenario)."""
    return Path(str(resources.files("platoonsim").joinpath("fixtures", name)))


def _resolve_map(value: str, base_dir: Path | None) -> LaneMap:
    candidates = []
    p = Path(value)
    if p.is_absolute():
        candidates.append(p)
    else:
        if base_dir is not None:
            candidates.append(base_dir / value)
        candidates.append(Path(value))
        candidates.append(fixture_path(value))
    for c in candidates:
        if c.is_file():
            return load_map(c.read_bytes())
    raise ScenarioError(f"map file {value!r} not found")


def build_scenario(
    raw: dict[str, dict],
    base_dir: Path | None = None,
    lane_map: LaneMap | None = None,
) -> Scenario:
    """Construct and validate a Scenario from parsed raw sections."""
    for sec_name in raw:
        if not _section_known(sec_name):
            raise ScenarioError(f"unknown section {sec_name!r}")
    top = raw.get("", {})
    if lane_map is None:
        map_ref = top.get("map")
        if map_ref is None:
            raise ScenarioError("scenario needs a 'map' entry")
        lane_map = _resolve_map(str(map_ref), base_dir)
    dt = _get(top, "dt", 0.01, float)

    chan_sec = raw.get("channel", {})
    channel = ChannelConfig(
        rate_hz=_get(chan_sec, "rate_hz", 20.0, float),
        loss_prob=_get(chan_sec, "loss_prob", 0.05, float),
        latency=_get(chan_sec, "latency", 0.0, float),
    )

    sens_sec = raw.get("sensors", {})
    sensors = SensorConfig(
        gps_rate_hz=_get(sens_sec, "gps_rate_hz", 2.0, float),
        gps_noise_std=_get(sens_sec, "gps_noise_std", 0.0, float),
        encoder_noise_std=_get(sens_sec, "encoder_noise_std", 0.005, float),
        imu_noise_std=_get(sens_sec, "imu_noise_std", 0.01, float),
        range_fov_half_angle=math.radians(_get(sens_sec, "range_fov_deg", 15.0, float)),
        range_max=_get(sens_sec, "range_max", 5.0, float),
        range_noise_std=_get(sens_sec, "range_noise_std", 0.002, float),
    )

    sw_sec = raw.get("switching", {})
    switching = SwitchingSpec(
        mode=_get(sw_sec, "mode", "approximation_only", str),
        band=_band(sw_sec.get("band")),
        hold_timeout=_get(sw_sec, "hold_timeout", 0.5, float),
        max_staleness=_get(sw_sec, "max_staleness", 0.5, float),
        offset_trim=_get(sw_sec, "offset_trim", 0.0, float),
    )

    gap_sec = raw.get("gap", {})
    gap_cfg = GapConfig(
        margin=_get(gap_sec, "margin", 0.5, float),
        min_fit_points=_get(gap_sec, "min_fit_points", 5, int),
        margin_growth=_get(gap_sec, "margin_growth", 1.5, float),
        max_attempts=_get(gap_sec, "max_attempts", 3, int),
        max_staleness=switching.max_staleness,
    )

    pur_sec = raw.get("pursuit", {})
    pursuit = PursuitConfig(
        lookahead=_get(pur_sec, "lookahead", 0.4, float),
        understeer_bias=_get(pur_sec, "understeer_bias", 0.0, float),
    )

    vehicles = []
    for sec_name, sec in raw.items():
        if not sec_name.startswith("vehicle "):
            continue
        vname = sec_name[len("vehicle ") :].strip()
        if not vname:
            raise ScenarioError("vehicle section needs a name")
        params = VehicleParams(
            tau=_get(sec, "tau", 0.0661, float),
            tau_d=_get(sec, "tau_d", 0.04, float),
            body_length=_get(sec, "body_length", 0.3, float),
            h=_get(sec, "h", 0.8, float),
            l0=_get(sec, "l0", 0.2, float),
            dt_base=dt,
        )
        follows = sec.get("follows")
        controller = None
        if follows is not None:
            controller = ControllerConfig(
                kp=_get(sec, "kp", 2.0, float),
                kd=_get(sec, "kd", 2.8, float),
                h=params.h,
                l0=params.l0,
                u_min=_get(sec, "u_min", -1.5, float),
                u_max=_get(sec, "u_max", 1.5, float),
                ff_enabled=_get(sec, "feedforward", True, _bool),
                tau=params.tau,
            )
        if "start_arc" not in sec:
            raise ScenarioError(f"vehicle {vname!r} needs start_arc")
        vehicles.append(
            VehicleSpec(
                name=vname,
                start_arc=float(sec["start_arc"]),
                params=params,
                follows=follows,
                controller=controller,
            )
        )
    # leader first, then followers in chain order
    vehicles.sort(key=lambda v: (v.follows is not None, v.name))
    vehicles = _chain_order(vehicles)

    prof_sec = raw.get("leader_profile", {})
    if "constant" in prof_sec:
        profile = ((0.0, float(prof_sec["constant"])),)
    elif "_points" in prof_sec:
        profile = tuple((float(t), float(v)) for t, v in prof_sec["_points"])
    else:
        raise ScenarioError("leader_profile needs knots or 'constant ='")

    return Scenario(
        name=_get(top, "name", "unnamed", str),
        lane_map=lane_map,
        vehicles=tuple(vehicles),
        profile=profile,
        duration=_get(top, "duration", 0.0, float),
        seed=_get(top, "seed", 0, int),
        dt=dt,
        channel=channel,
        sensors=sensors,
        switching=switching,
        gap_cfg=gap_cfg,
        pursuit=pursuit,
    )


def _chain_order(vehicles: list[VehicleSpec]) -> list[VehicleSpec]:
    """Order vehicles leader-first along the follows chain."""
    by_follows = {v.follows: v for v in vehicles}
    if None not in by_follows:
        return vehicles  # validation rejects this later
    ordered = [by_follows[None]]
    while len(ordered) < len(vehicles):
        nxt = by_follows.get(ordered[-1].name)
        if nxt is None:
            # broken chain; keep declaration order and let validation complain
            seen = {v.name for v in ordered}
            ordered.extend(v for v in vehicles if v.name not in seen)
            break
        ordered.append(nxt)
    return ordered


def load_scenario(
    path: str | Path, overrides: dict[str, str] | None = None, seed: int | None = None
) -> Scenario:
    """Load a scenario file (or shipped fixture name) with optional overrides."""
    p = Path(path)
    if not p.is_file():
        cand = fixture_path(p.name if p.suffix else f"{path}.scenario")
        if cand.is_file():
            p = cand
        else:
            raise ScenarioError(f"scenario file {path!r} not found")
    raw = parse_scenario_text(p.read_text(encoding="utf-8"))
    if overrides:
        raw = apply_overrides(raw, overrides)
    sc = build_scenario(raw, base_dir=p.parent)
    if seed is not None:
        sc = replace(sc, seed=seed)
    return sc
