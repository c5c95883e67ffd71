"""Route polylines, segment-wise speed plans, and target-speed lookups."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from . import kernels
from .errors import DegenerateRoute, OverlappingSegments, ValidationError


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class Route:
    """Polyline with cumulative arc-length.

    ``keypoints`` is an (N, 2) array in meters and ``cum_dist[k]`` the distance
    along the polyline from the first keypoint to keypoint ``k``. Positive lane
    offsets are to the left of the direction of travel.
    """

    keypoints: np.ndarray
    cum_dist: np.ndarray
    seg_len: np.ndarray
    tangents: np.ndarray
    vertex_normals: np.ndarray

    @property
    def total_length(self) -> float:
        return float(self.cum_dist[-1])

    def __len__(self) -> int:
        return self.keypoints.shape[0]

    def segment_index(self, s: float) -> int:
        k = int(np.searchsorted(self.cum_dist, s, side="right")) - 1
        return min(max(k, 0), len(self) - 2)

    def pose_at(self, s: float, offset: float = 0.0) -> tuple[float, float, float]:
        """World ``(x, y, heading)`` at arc-length ``s`` and lateral ``offset``.

        ``s`` outside ``[0, L]`` extrapolates along the first/last segment.
        Normals are blended between vertices so the offset curve is continuous.
        """
        k = self.segment_index(s)
        frac = (s - self.cum_dist[k]) / self.seg_len[k]
        p0 = self.keypoints[k]
        p1 = self.keypoints[k + 1]
        x = p0[0] + frac * (p1[0] - p0[0])
        y = p0[1] + frac * (p1[1] - p0[1])
        tx, ty = self.tangents[k]
        if offset != 0.0:
            w = min(max(frac, 0.0), 1.0)
            n = (1.0 - w) * self.vertex_normals[k] + w * self.vertex_normals[k + 1]
            norm = math.hypot(n[0], n[1])
            if norm < 1e-12:
                nx, ny = -ty, tx
            else:
                nx, ny = n[0] / norm, n[1] / norm
            x += offset * nx
            y += offset * ny
        return float(x), float(y), math.atan2(ty, tx)

    def __eq__(self, other):
        if not isinstance(other, Route):
            return NotImplemented
        return np.array_equal(self.keypoints, other.keypoints)

    def __hash__(self):
        return hash(self.keypoints.tobytes())


@dataclass(frozen=True)
class SpeedSegment:
    """Target speed ``v`` (m/s) over normalized progress ``[s_start, s_end)``."""

    s_start: float
    s_end: float
    v: float

    def __post_init__(self):
        if not (0.0 <= self.s_start < self.s_end <= 1.0):
            raise ValidationError(f"segment bounds must satisfy 0 <= start < end <= 1, got ({self.s_start}, {self.s_end})")
        if not self.v >= 0.0:
            raise ValidationError(f"segment speed must be non-negative, got {self.v}")


@dataclass(frozen=True, eq=False)
class SpeedPlan:
    """One target speed per route keypoint."""

    route: Route
    speeds: np.ndarray

    @property
    def entries(self) -> list[tuple[tuple[float, float], float]]:
        return [((float(p[0]), float(p[1])), float(v)) for p, v in zip(self.route.keypoints, self.speeds)]

    def speed_at_arclength(self, s):
        """Speed of the keypoint nearest in arc-length; ties go to the earlier keypoint."""
        cum = self.route.cum_dist
        s = np.asarray(s, dtype=np.float64)
        hi = np.clip(np.searchsorted(cum, s, side="left"), 1, len(cum) - 1)
        lo = hi - 1
        idx = np.where(s - cum[lo] <= cum[hi] - s, lo, hi)
        out = self.speeds[idx]
        return float(out) if out.ndim == 0 else out


def build_route(keypoints: Iterable[Sequence[float]]) -> Route:
    pts = np.asarray(list(keypoints) if not isinstance(keypoints, np.ndarray) else keypoints, dtype=np.float64)
    if pts.ndim != 2 or pts.shape[1] != 2 or pts.shape[0] < 2:
        raise DegenerateRoute("a route needs at least two 2D keypoints")
    if not np.all(np.isfinite(pts)):
        raise DegenerateRoute("keypoints must be finite")
    delta = np.diff(pts, axis=0)
    seg_len = np.hypot(delta[:, 0], delta[:, 1])
    if np.any(seg_len <= 0.0):
        k = int(np.argmin(seg_len))
        raise DegenerateRoute(f"zero-length segment between keypoints {k} and {k + 1}")
    # sequential accumulation keeps cum[k + 1] == cum[k] + seg_len[k] bit-exactly
    cum = np.concatenate([[0.0], np.cumsum(seg_len)])
    tangents = delta / seg_len[:, None]
    seg_normals = np.stack([-tangents[:, 1], tangents[:, 0]], axis=1)
    vn = np.empty_like(pts)
    vn[0] = seg_normals[0]
    vn[-1] = seg_normals[-1]
    if len(pts) > 2:
        mid = seg_normals[:-1] + seg_normals[1:]
        norm = np.hypot(mid[:, 0], mid[:, 1])
        reversal = norm < 1e-9
        norm[reversal] = 1.0
        mid = mid / norm[:, None]
        mid[reversal] = seg_normals[1:][reversal]
        vn[1:-1] = mid
    return Route(_frozen(pts), _frozen(cum), _frozen(seg_len), _frozen(tangents), _frozen(vn))


def build_speed_plan(route: Route, segments: Iterable[SpeedSegment], default_v: float) -> SpeedPlan:
    """Assign each keypoint the speed of the segment containing its arc-length.

    Keypoints outside every segment inherit the speed of the previous keypoint;
    any prefix before the first covered keypoint gets ``default_v``.
    """
    if default_v < 0:
        raise ValidationError("default_v must be non-negative")
    segs = sorted(segments, key=lambda sg: sg.s_start)
    for a, b in zip(segs, segs[1:]):
        if b.s_start < a.s_end:
            raise OverlappingSegments(f"segments [{a.s_start}, {a.s_end}) and [{b.s_start}, {b.s_end}) overlap")
    length = route.total_length
    d = route.cum_dist
    speeds = np.full(len(d), np.nan)
    for sg in segs:
        inside = (d >= sg.s_start * length) & (d < sg.s_end * length)
        if sg.s_end == 1.0:
            inside[-1] = True
        speeds[inside] = sg.v
    # forward fill: each gap takes the speed of the last assigned keypoint before it
    assigned = ~np.isnan(speeds)
    src = np.maximum.accumulate(np.where(assigned, np.arange(len(speeds)), -1))
    speeds = np.where(src >= 0, speeds[np.maximum(src, 0)], float(default_v))
    return SpeedPlan(route, _frozen(speeds))


def query_target_speed(plan: SpeedPlan, ego_pos: Sequence[float]) -> float:
    k = kernels.nearest_keypoint(np.asarray(ego_pos, dtype=np.float64).reshape(1, 2), plan.route.keypoints)[0]
    return float(plan.speeds[k])


def project_to_route(route: Route, pos: Sequence[float]) -> float:
    """Arc-length of the closest point on the polyline to ``pos``."""
    return float(project_points(route, np.asarray(pos, dtype=np.float64).reshape(1, 2))[0])


def project_points(route: Route, positions) -> np.ndarray:
    return kernels.project_points(positions, route.keypoints, route.seg_len, route.cum_dist)
