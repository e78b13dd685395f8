"""Inter-vehicular distance from two localized positions and the lane map.

Pipeline: bounding box around both positions -> contiguous lane-center slice
-> least-squares quadratic y = a x^2 + b x + c in a chord-aligned local frame
-> perpendicular projection of each position onto the curve -> arc length
between the projections:

    L = integral sqrt(4 a^2 x^2 + 4 a b x + b^2 + 1) dx

evaluated in closed form. The chord-aligned frame keeps the fit well-posed
where the road runs vertically in world coordinates; a straight road simply
fits with a ~= 0 and everything reduces to Euclidean projection.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import Pose2D
from .lanemap import Box, LaneMap, points_in_box, two_closest_points

DEGENERATE_RESIDUAL = 0.05  # m, fits worse than this are flagged


class GapError(RuntimeError):
    """Base class for distinct gap-approximation failures."""


class FitFailureError(GapError):
    """Quadratic fit impossible (too few points or singular system)."""


class StalePoseError(GapError):
    """The communicated peer pose is older than the configured limit."""


@dataclass(frozen=True)
class Frame2D:
    """Rigid world->local transform: translate by -origin, rotate by -angle."""

    ox: float = 0.0
    oy: float = 0.0
    angle: float = 0.0

    def to_local(self, x: float, y: float) -> tuple[float, float]:
        c, s = math.cos(self.angle), math.sin(self.angle)
        dx, dy = x - self.ox, y - self.oy
        return (c * dx + s * dy, -s * dx + c * dy)

    def to_world(self, x: float, y: float) -> tuple[float, float]:
        c, s = math.cos(self.angle), math.sin(self.angle)
        return (self.ox + c * x - s * y, self.oy + s * x + c * y)


@dataclass(frozen=True)
class GapConfig:
    margin: float = 0.5  # m, bounding-box clearance around each position
    min_fit_points: int = 5
    margin_growth: float = 1.5  # growth factor when too few points
    max_attempts: int = 3
    max_staleness: float = 0.5  # s, oldest usable peer pose

    def __post_init__(self):
        if self.margin <= 0:
            raise ValueError("margin must be positive")
        if self.min_fit_points < 3:
            raise ValueError("a quadratic fit needs at least 3 points")


@dataclass(frozen=True)
class QuadraticFit:
    """y = a x^2 + b x + c in ``frame`` coordinates."""

    a: float
    b: float
    c: float
    frame: Frame2D
    n_points: int
    residual_rms: float

    @property
    def degenerate(self) -> bool:
        return self.residual_rms > DEGENERATE_RESIDUAL

    def eval(self, x: float) -> float:
        return (self.a * x + self.b) * x + self.c


@dataclass(frozen=True)
class GapEstimate:
    distance: float  # m, arc length between the projections
    proj_leader: tuple[float, float]  # world frame
    proj_follower: tuple[float, float]  # world frame
    fit: QuadraticFit
    staleness: float  # s, age of the leader pose that was used
    flags: tuple[str, ...] = ()


def bounding_box(p_follower: Pose2D, p_leader: Pose2D, margin: float) -> Box:
    """Axis-aligned box containing both positions with equal clearance.

    The smallest distance from each position to the nearest box side equals
    ``margin`` exactly.
    """
    if margin <= 0:
        raise ValueError("margin must be positive")
    return Box(
        xmin=min(p_follower.x, p_leader.x) - margin,
        xmax=max(p_follower.x, p_leader.x) + margin,
        ymin=min(p_follower.y, p_leader.y) - margin,
        ymax=max(p_follower.y, p_leader.y) + margin,
    )


def chord_frame(points: np.ndarray) -> Frame2D:
    """Local frame with the first->last chord of ``points`` along +x."""
    p0, p1 = points[0], points[-1]
    return Frame2D(
        ox=float((p0[0] + p1[0]) / 2.0),
        oy=float((p0[1] + p1[1]) / 2.0),
        angle=math.atan2(float(p1[1] - p0[1]), float(p1[0] - p0[0])),
    )


def fit_quadratic(points: np.ndarray, frame: Frame2D | None = None) -> QuadraticFit:
    """Least-squares quadratic through a contiguous lane slice.

    With ``frame=None`` the chord-aligned frame is used (the pipeline
    default); pass an explicit frame (e.g. identity) to fit in raw
    coordinates. Solves the 3x3 normal equations; points sampled exactly
    from a parabola in the fit frame are reproduced to round-off.

    Raises:
        FitFailureError: fewer than 3 points, or a singular system even
            after the frame rotation (e.g. coincident slice endpoints).
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 3:
        raise FitFailureError(f"need >= 3 points to fit, got {pts.shape}")
    if frame is None:
        chord = math.hypot(*(pts[-1] - pts[0]))
        if chord < 1e-9:
            raise FitFailureError("slice endpoints coincide; chord frame undefined")
        frame = chord_frame(pts)
    c, s = math.cos(frame.angle), math.sin(frame.angle)
    dx = pts[:, 0] - frame.ox
    dy = pts[:, 1] - frame.oy
    x = c * dx + s * dy
    y = -s * dx + c * dy
    vand = np.column_stack([x * x, x, np.ones_like(x)])
    ata = vand.T @ vand
    aty = vand.T @ y
    try:
        coef = np.linalg.solve(ata, aty)
    except np.linalg.LinAlgError:
        raise FitFailureError("normal equations singular (degenerate slice)") from None
    resid = y - vand @ coef
    return QuadraticFit(
        a=float(coef[0]),
        b=float(coef[1]),
        c=float(coef[2]),
        frame=frame,
        n_points=len(pts),
        residual_rms=float(math.sqrt(float(np.mean(resid * resid)))),
    )


def _project_local(
    fit: QuadraticFit,
    px: float,
    py: float,
    seg_a: tuple[float, float],
    seg_b: tuple[float, float],
) -> tuple[float, float, tuple[str, ...]]:
    """Project (px, py) onto the curve, all in fit-frame coordinates.

    The projection line runs through the point, perpendicular to the lane
    segment seg_a->seg_b. Substituting the parametric line into the
    quadratic gives a quadratic in the line parameter t; the root whose
    intersection lies nearest the point wins. With no real root we fall
    back to the true nearest point on the curve, flagged.
    """
    a, b, c = fit.a, fit.b, fit.c
    ux, uy = seg_b[0] - seg_a[0], seg_b[1] - seg_a[1]
    norm = math.hypot(ux, uy)
    ux, uy = ux / norm, uy / norm
    nx, ny = -uy, ux  # perpendicular to the local lane direction
    # a*(px+t*nx)^2 + b*(px+t*nx) + c - (py+t*ny) = 0
    qa = a * nx * nx
    qb = 2.0 * a * px * nx + b * nx - ny
    qc = (a * px + b) * px + c - py
    roots: list[float] = []
    if abs(qa) < 1e-14:
        if abs(qb) > 1e-14:
            roots = [-qc / qb]
    else:
        disc = qb * qb - 4.0 * qa * qc
        if disc >= 0.0:
            sq = math.sqrt(disc)
            roots = [(-qb - sq) / (2.0 * qa), (-qb + sq) / (2.0 * qa)]
    flags: tuple[str, ...] = ()
    if not roots:
        return _nearest_on_curve(fit, px, py) + (("projection_fallback",),)
    if len(roots) == 2:
        d0, d1 = abs(roots[0]), abs(roots[1])
        if math.isclose(d0, d1, rel_tol=0.0, abs_tol=1e-12) and roots[0] != roots[1]:
            t = min(roots)
            flags = ("root_tie",)
        else:
            t = roots[0] if d0 <= d1 else roots[1]
    else:
        t = roots[0]
    return px + t * nx, py + t * ny, flags


def _nearest_on_curve(fit: QuadraticFit, px: float, py: float) -> tuple[float, float]:
    """Nearest point on y = a x^2 + b x + c to (px, py), fit frame."""
    a, b, c = fit.a, fit.b, fit.c
    if abs(a) < 1e-14:
        # plain line: foot of the perpendicular
        denom = 1.0 + b * b
        x = (px + b * (py - c)) / denom
        return x, b * x + c
    # stationarity of squared distance: cubic in x
    coeffs = [
        2.0 * a * a,
        3.0 * a * b,
        b * b + 2.0 * a * (c - py) + 1.0,
        b * (c - py) - px,
    ]
    best = None
    for r in np.roots(coeffs):
        if abs(r.imag) > 1e-9:
            continue
        x = float(r.real)
        y = fit.eval(x)
        d2 = (x - px) ** 2 + (y - py) ** 2
        if best is None or d2 < best[0]:
            best = (d2, x, y)
    assert best is not None  # a cubic always has a real root
    return best[1], best[2]


def project_onto_curve(
    fit: QuadraticFit, p: Pose2D, map_slice: np.ndarray
) -> tuple[float, float]:
    """World-frame projection of ``p`` onto the fitted curve.

    The perpendicular direction comes from the two slice points closest to
    the position, mirroring how the fit's source points were selected.
    """
    x_loc, y_loc, _ = _project_with_flags(fit, p, map_slice)
    return fit.frame.to_world(x_loc, y_loc)


def _project_with_flags(
    fit: QuadraticFit, p: Pose2D, map_slice: np.ndarray
) -> tuple[float, float, tuple[str, ...]]:
    pts = np.asarray(map_slice, dtype=float)
    if len(pts) < 2:
        raise FitFailureError("projection needs at least 2 slice points")
    d2 = (pts[:, 0] - p.x) ** 2 + (pts[:, 1] - p.y) ** 2
    order = np.argsort(d2, kind="stable")
    ia, ib = int(order[0]), int(order[1])
    pa = fit.frame.to_local(float(pts[ia, 0]), float(pts[ia, 1]))
    pb = fit.frame.to_local(float(pts[ib, 0]), float(pts[ib, 1]))
    px, py = fit.frame.to_local(p.x, p.y)
    return _project_local(fit, px, py, pa, pb)


def arc_length(fit: QuadraticFit, x_from: float, x_to: float) -> float:
    """Arc length of the fitted quadratic between two fit-frame abscissae.

    Closed form via u = 2 a x + b:

        integral sqrt(u^2 + 1) du / (2a)  with antiderivative
        (u sqrt(u^2 + 1) + asinh u) / 2

    computed as a difference in a cancellation-safe form so nearby endpoints
    keep full precision. |a| below 1e-12 degrades to the straight-line
    length, which is the correct limit.
    """
    a, b = fit.a, fit.b
    dx = x_to - x_from
    if abs(a) < 1e-12:
        return abs(dx) * math.sqrt(b * b + 1.0)
    u1 = 2.0 * a * x_from + b
    u2 = 2.0 * a * x_to + b
    du = 2.0 * a * dx
    return abs(_h_diff(u1, u2, du) + _asinh_diff(u1, u2, du)) / (4.0 * abs(a))


def _h_diff(u1: float, u2: float, du: float) -> float:
    """h(u2) - h(u1) for h(u) = u*sqrt(u^2+1), cancellation-safe."""
    h1 = u1 * math.sqrt(u1 * u1 + 1.0)
    h2 = u2 * math.sqrt(u2 * u2 + 1.0)
    if u1 * u2 <= 0.0:
        return h2 - h1  # opposite signs: subtraction is really an addition
    # conjugate form: (h2-h1) = du*(u2+u1)*(u2^2+u1^2+1)/(h2+h1)
    return du * (u2 + u1) * (u2 * u2 + u1 * u1 + 1.0) / (h2 + h1)


def _asinh_diff(u1: float, u2: float, du: float) -> float:
    """asinh(u2) - asinh(u1), cancellation-safe."""
    r1 = math.sqrt(1.0 + u1 * u1)
    r2 = math.sqrt(1.0 + u2 * u2)
    if u1 * u2 <= 0.0:
        arg = u2 * r1 - u1 * r2
    else:
        arg = du * (u2 + u1) / (u2 * r1 + u1 * r2)
    return math.asinh(arg)


def approximate_gap(
    p_follower: Pose2D,
    p_leader: Pose2D,
    lane_map: LaneMap,
    cfg: GapConfig | None = None,
    leader_staleness: float = 0.0,
) -> GapEstimate:
    """Arc-length distance between two localized positions along the lane.

    Composes the full pipeline. The bounding-box margin grows geometrically
    (up to cfg.max_attempts) if the initial box captures too few lane points
    for a stable fit. Distance is measured between the projections of the
    given reference positions; converting to bumper-to-bumper spacing is the
    caller's business.

    Raises:
        StalePoseError: leader pose older than cfg.max_staleness.
        AmbiguousSegmentError: box spans disjoint road segments.
        FitFailureError: no usable quadratic fit.
    """
    cfg = cfg or GapConfig()
    if leader_staleness > cfg.max_staleness:
        raise StalePoseError(
            f"leader pose is {leader_staleness:.3f} s old "
            f"(limit {cfg.max_staleness:.3f} s)"
        )
    margin = cfg.margin
    idx = np.empty(0, dtype=int)
    for _ in range(cfg.max_attempts):
        idx = points_in_box(lane_map, bounding_box(p_follower, p_leader, margin))
        if len(idx) >= cfg.min_fit_points:
            break
        margin *= cfg.margin_growth
    if len(idx) < 3:
        raise FitFailureError(
            f"only {len(idx)} lane points near the vehicles after "
            f"{cfg.max_attempts} margin attempts"
        )
    slice_pts = lane_map.points[idx]
    fit = fit_quadratic(slice_pts)
    fx, fy, f_flags = _project_with_flags(fit, p_follower, slice_pts)
    lx, ly, l_flags = _project_with_flags(fit, p_leader, slice_pts)
    dist = arc_length(fit, fx, lx)
    flags = tuple(dict.fromkeys(f_flags + l_flags))
    if fit.degenerate:
        flags = flags + ("degenerate_fit",)
    return GapEstimate(
        distance=dist,
        proj_leader=fit.frame.to_world(lx, ly),
        proj_follower=fit.frame.to_world(fx, fy),
        fit=fit,
        staleness=leader_staleness,
        flags=flags,
    )
