"""Lane-center digital map: an ordered polyline with arc-position queries.

The map is the geometric substrate of the gap approximation: a closed (or
open) sequence of lane-center points a handful of centimeters apart, loaded
from a plain-text ``lanemap v1`` file.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field

import numpy as np

MIN_SPACING = 0.01  # m
MAX_SPACING = 1.0  # m


class MapFormatError(ValueError):
    """Raised for malformed map files or geometrically invalid point lists."""


class AmbiguousSegmentError(ValueError):
    """A bounding box captured two disjoint stretches of the path.

    Fitting one curve across unrelated road segments would silently produce
    garbage, so the caller must shrink its selection instead.
    """


@dataclass(frozen=True)
class Box:
    """Axis-aligned rectangle, min/max per axis."""

    xmin: float
    xmax: float
    ymin: float
    ymax: float

    def __post_init__(self):
        if self.xmin > self.xmax or self.ymin > self.ymax:
            raise ValueError("box must have min <= max per axis")

    def contains(self, x: float, y: float) -> bool:
        return self.xmin <= x <= self.xmax and self.ymin <= y <= self.ymax


@dataclass(frozen=True)
class LaneMap:
    """Ordered lane-center polyline with precomputed cumulative arc length.

    points: (N, 2) array of lane-center coordinates in meters, path order.
    closed: whether the last point connects back to the first (loop track).
    """

    points: np.ndarray
    closed: bool = True
    cumulative_arc: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise MapFormatError("points must be an (N, 2) array")
        if len(pts) < 3:
            raise MapFormatError("a lane map needs at least 3 points")
        if not np.all(np.isfinite(pts)):
            raise MapFormatError("lane points must be finite")
        seg = np.linalg.norm(np.diff(pts, axis=0), axis=1)
        if self.closed:
            seg = np.append(seg, np.linalg.norm(pts[0] - pts[-1]))
        if np.any(seg < MIN_SPACING) or np.any(seg > MAX_SPACING):
            raise MapFormatError(
                f"consecutive point spacing must lie in "
                f"[{MIN_SPACING}, {MAX_SPACING}] m"
            )
        cum = np.concatenate([[0.0], np.cumsum(seg[: len(pts) - 1])])
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "cumulative_arc", cum)
        # closing-segment bookkeeping for arc queries on loop tracks
        object.__setattr__(self, "_total", cum[-1] + (seg[-1] if self.closed else 0.0))

    def __len__(self) -> int:
        return len(self.points)

    @property
    def total_length(self) -> float:
        """Full path length, including the closing segment on loop tracks."""
        return self._total

    def segment(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        """Endpoints of segment i (closed maps wrap the final segment)."""
        j = (i + 1) % len(self.points)
        return self.points[i], self.points[j]

    def wrap_arc(self, s: float) -> float:
        if self.closed:
            return s % self._total
        return min(max(s, 0.0), self._total)

    def point_at_arc(self, s: float) -> tuple[float, float]:
        """Interpolate the polyline position at arc coordinate ``s``.

        Closed maps wrap; open maps clamp to the endpoints.
        """
        s = self.wrap_arc(s)
        cum = self.cumulative_arc
        i = int(np.searchsorted(cum, s, side="right")) - 1
        i = min(max(i, 0), len(self.points) - 1)
        p0, p1 = self.segment(i)
        seg_start = cum[i]
        seg_len = (
            self._total - seg_start
            if i == len(self.points) - 1
            else cum[i + 1] - seg_start
        )
        f = 0.0 if seg_len == 0 else (s - seg_start) / seg_len
        p = p0 + f * (p1 - p0)
        return (float(p[0]), float(p[1]))

    def tangent_at_arc(self, s: float) -> float:
        """Path heading (radians) of the segment containing ``s``."""
        s = self.wrap_arc(s)
        i = int(np.searchsorted(self.cumulative_arc, s, side="right")) - 1
        i = min(max(i, 0), len(self.points) - 1)
        if not self.closed and i == len(self.points) - 1:
            i -= 1
        p0, p1 = self.segment(i)
        return math.atan2(p1[1] - p0[1], p1[0] - p0[0])

    def arc_position(self, x: float, y: float) -> tuple[float, float]:
        """Project a point onto the polyline.

        Returns (arc coordinate of the projection, distance to it).
        """
        pts = self.points
        n = len(pts)
        d2 = (pts[:, 0] - x) ** 2 + (pts[:, 1] - y) ** 2
        k = int(np.argmin(d2))
        best_s = self.cumulative_arc[k]
        best_d2 = d2[k]
        # check the two segments adjacent to the nearest vertex
        candidates = [k - 1, k] if self.closed else [i for i in (k - 1, k) if 0 <= i < n - 1]
        p = np.array([x, y])
        for i in candidates:
            i %= n
            if not self.closed and i >= n - 1:
                continue
            a, b = self.segment(i)
            ab = b - a
            t = float(np.dot(p - a, ab) / np.dot(ab, ab))
            t = min(max(t, 0.0), 1.0)
            q = a + t * ab
            dq2 = float(np.dot(p - q, p - q))
            if dq2 < best_d2:
                best_d2 = dq2
                best_s = self.cumulative_arc[i] + t * float(np.linalg.norm(ab))
        return float(self.wrap_arc(best_s)), math.sqrt(best_d2)


def two_closest_points(lane_map: LaneMap, x: float, y: float) -> tuple[int, int]:
    """Indices of the two lane-center points nearest (x, y), nearest first.

    Ties are broken toward the lower index.
    """
    pts = lane_map.points
    d2 = (pts[:, 0] - x) ** 2 + (pts[:, 1] - y) ** 2
    order = np.argsort(d2, kind="stable")
    return int(order[0]), int(order[1])


def points_in_box(lane_map: LaneMap, box: Box) -> np.ndarray:
    """Indices of all map points inside ``box``, contiguous in path order.

    On closed maps the run may wrap the index seam; the returned order then
    follows the path (... N-1, 0, 1 ...).

    Raises:
        AmbiguousSegmentError: the box captured >= 2 disjoint path segments.
    """
    pts = lane_map.points
    inside = (
        (pts[:, 0] >= box.xmin)
        & (pts[:, 0] <= box.xmax)
        & (pts[:, 1] >= box.ymin)
        & (pts[:, 1] <= box.ymax)
    )
    idx = np.flatnonzero(inside)
    if idx.size == 0 or idx.size == len(pts):
        return idx
    breaks = np.flatnonzero(np.diff(idx) > 1)
    if breaks.size == 0:
        return idx
    wraps = lane_map.closed and inside[0] and inside[-1]
    if breaks.size == 1 and wraps:
        cut = breaks[0] + 1
        return np.concatenate([idx[cut:], idx[:cut]])
    raise AmbiguousSegmentError(
        f"box {box} selects {breaks.size + 1} disjoint path segments"
    )


def save_map(lane_map: LaneMap) -> bytes:
    """Serialize to the ``lanemap v1`` text format (one ``x y`` per line)."""
    out = io.StringIO()
    out.write(f"lanemap v1 {'closed' if lane_map.closed else 'open'}\n")
    for px, py in lane_map.points:
        out.write(f"{float(px)!r} {float(py)!r}\n")
    return out.getvalue().encode("ascii")


def load_map(data: bytes) -> LaneMap:
    """Parse a ``lanemap v1`` file.

    Raises:
        MapFormatError: bad header, malformed record, too few points, or
            invalid spacing.
    """
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as e:
        raise MapFormatError(f"map file is not text: {e}") from None
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines:
        raise MapFormatError("empty map file")
    header = lines[0].split()
    if len(header) != 3 or header[0] != "lanemap" or header[1] != "v1":
        raise MapFormatError(f"bad header {lines[0]!r}, expected 'lanemap v1 closed|open'")
    if header[2] not in ("closed", "open"):
        raise MapFormatError(f"topology must be 'closed' or 'open', got {header[2]!r}")
    pts = []
    for ln in lines[1:]:
        fields = ln.split()
        if len(fields) != 2:
            raise MapFormatError(f"malformed point record {ln!r}")
        try:
            pts.append((float(fields[0]), float(fields[1])))
        except ValueError:
            raise MapFormatError(f"malformed point record {ln!r}") from None
    if len(pts) >= 2:
        for a, b in zip(pts, pts[1:]):
            if a == b:
                raise MapFormatError("duplicate consecutive points")
    return LaneMap(np.array(pts, dtype=float), closed=header[2] == "closed")


@dataclass(frozen=True)
class OvalTrack:
    """Reference loop: two straights joined by two semicircles.

    Keeps the arc spans of the straight sections so tests and scenario
    post-processing can tell straight geometry from curve geometry.
    """

    lane_map: LaneMap
    straight_len: float
    radius: float
    straight_arcs: tuple[tuple[float, float], ...]
    curve_arcs: tuple[tuple[float, float], ...]

    def on_straight(self, s: float, margin: float = 0.0) -> bool:
        """True if arc position ``s`` is on a straight, ``margin`` inside it."""
        s = self.lane_map.wrap_arc(s)
        for s0, s1 in self.straight_arcs:
            if s0 + margin <= s <= s1 - margin:
                return True
        return False


def oval_track(
    straight_len: float = 3.0, radius: float = 2.0, spacing: float = 0.15
) -> OvalTrack:
    """Build the reference oval, sampled at (approximately) ``spacing``.

    The point count is rounded so the spacing divides the perimeter exactly;
    curve points lie on the semicircles, straight points on the straights.
    """
    if straight_len <= 0 or radius <= 0:
        raise ValueError("straight_len and radius must be positive")
    perimeter = 2.0 * straight_len + 2.0 * math.pi * radius
    n = max(3, round(perimeter / spacing))
    ds = perimeter / n
    if not MIN_SPACING <= ds <= MAX_SPACING:
        raise ValueError(f"effective spacing {ds:.3f} m out of range")

    half = straight_len / 2.0
    semi = math.pi * radius
    # arc-length layout, counterclockwise from (-half, 0):
    #   [0, L) bottom straight, [L, L+piR) right curve,
    #   [L+piR, 2L+piR) top straight, [2L+piR, end) left curve
    s_bot = (0.0, straight_len)
    s_top = (straight_len + semi, 2.0 * straight_len + semi)
    pts = []
    for k in range(n):
        s = k * ds
        if s < s_bot[1]:
            pts.append((-half + s, 0.0))
        elif s < s_top[0]:
            a = (s - s_bot[1]) / radius  # angle walked around the right curve
            pts.append((half + radius * math.sin(a), radius * (1.0 - math.cos(a))))
        elif s < s_top[1]:
            pts.append((half - (s - s_top[0]), 2.0 * radius))
        else:
            a = (s - s_top[1]) / radius
            pts.append((-half - radius * math.sin(a), radius * (1.0 + math.cos(a))))
    lane_map = LaneMap(np.array(pts), closed=True)
    return OvalTrack(
        lane_map=lane_map,
        straight_len=straight_len,
        radius=radius,
        straight_arcs=(s_bot, s_top),
        curve_arcs=((s_bot[1], s_top[0]), (s_top[1], perimeter)),
    )


def straight_track(length: float = 10.0, spacing: float = 0.15) -> LaneMap:
    """Open straight lane along +x, for sanity scenarios and tests."""
    n = max(3, round(length / spacing) + 1)
    xs = np.linspace(0.0, length, n)
    return LaneMap(np.column_stack([xs, np.zeros_like(xs)]), closed=False)
