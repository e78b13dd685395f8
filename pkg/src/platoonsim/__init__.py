"""Deterministic platooning simulator.

A follower vehicle keeps a constant time gap behind its predecessor. The
gap normally comes from a forward range sensor; when that sensor loses the
target (narrow view cone on curves) the follower keeps going on an
approximated gap computed from communicated localized positions and a
lane-center map: fit a quadratic to the nearby lane points, project both
positions onto it, and take the arc length between the projections.
"""

from .comms import Channel, ChannelConfig, V2VMessage
from .controller import (
    CaccController,
    ControllerConfig,
    GapSource,
    GapSourceState,
    SwitchingConfig,
    feedback_accel,
    gap_error,
    select_gap,
)
from .core import Pose2D, SimTime, VehicleParams, normalize_angle
from .dynamics import LongitudinalState, step_accel_mode, step_velocity_mode
from .ekf import Ekf, GpsFix, ImuInput
from .gap import (
    GapConfig,
    GapEstimate,
    QuadraticFit,
    approximate_gap,
    arc_length,
    bounding_box,
    fit_quadratic,
    project_onto_curve,
)
from .lanemap import (
    AmbiguousSegmentError,
    Box,
    LaneMap,
    load_map,
    oval_track,
    points_in_box,
    save_map,
    straight_track,
    two_closest_points,
)
from .pursuit import PursuitConfig, kinematic_step, pursuit_curvature
from .scenario import Scenario, load_scenario
from .sensors import RangeReading, emulated_gps, measure_imu, range_sensor
from .simulate import Summary, TraceRecord, emit_csv, emit_summary, run_scenario

__version__ = "0.1.0"
