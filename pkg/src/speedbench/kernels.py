"""Hot numeric loops, each with a numba and a pure-numpy implementation.

The numba path is used when numba imports and ``SPEEDBENCH_DISABLE_NUMBA`` is
unset (or ``0``). Both paths evaluate the same floating-point expressions in
the same order, so results agree to the last few ulps; the test suite checks
them against each other.
"""

import os

import numpy as np

try:
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAS_NUMBA = False

_DISABLED = os.environ.get("SPEEDBENCH_DISABLE_NUMBA", "0").strip().lower() in ("1", "true", "yes", "on")
USE_NUMBA = HAS_NUMBA and not _DISABLED

# rows per block in the vectorized projection; bounds the (rows, segments) temporaries
_CHUNK = 512


# ---------------------------------------------------------------------------
# numpy implementations
# ---------------------------------------------------------------------------


def project_points_np(points, keypoints, seglen, cum):
    """Arc-length of the closest polyline point for every row of ``points``."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    ax = keypoints[:-1, 0]
    ay = keypoints[:-1, 1]
    ex = keypoints[1:, 0] - ax
    ey = keypoints[1:, 1] - ay
    l2 = ex * ex + ey * ey
    out = np.empty(points.shape[0])
    for lo in range(0, points.shape[0], _CHUNK):
        px = points[lo:lo + _CHUNK, 0][:, None]
        py = points[lo:lo + _CHUNK, 1][:, None]
        t = ((px - ax) * ex + (py - ay) * ey) / l2
        np.clip(t, 0.0, 1.0, out=t)
        qx = ax + t * ex - px
        qy = ay + t * ey - py
        d2 = qx * qx + qy * qy
        k = np.argmin(d2, axis=1)
        rows = np.arange(k.shape[0])
        out[lo:lo + _CHUNK] = cum[k] + t[rows, k] * seglen[k]
    return out


def nearest_keypoint_np(points, keypoints):
    """Index of the nearest keypoint per query point; ties go to the lower index."""
    points = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    out = np.empty(points.shape[0], dtype=np.int64)
    for lo in range(0, points.shape[0], _CHUNK):
        dx = keypoints[:, 0] - points[lo:lo + _CHUNK, 0][:, None]
        dy = keypoints[:, 1] - points[lo:lo + _CHUNK, 1][:, None]
        out[lo:lo + _CHUNK] = np.argmin(dx * dx + dy * dy, axis=1)
    return out


def tendency_np(v, horizon):
    v = np.asarray(v, dtype=np.float64)
    n = v.shape[0]
    out = v.copy()
    if n < 2:
        return out
    fut = v[1:]
    pad = horizon - 1
    w_max = np.lib.stride_tricks.sliding_window_view(np.concatenate([fut, np.full(pad, -np.inf)]), horizon)
    w_min = np.lib.stride_tricks.sliding_window_view(np.concatenate([fut, np.full(pad, np.inf)]), horizon)
    up = fut > v[:-1]
    down = fut < v[:-1]
    head = out[:-1]
    head[up] = w_max[up].max(axis=1)
    head[down] = w_min[down].min(axis=1)
    return out


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------


def _project_points_loop(points, keypoints, seglen, cum):
    m = points.shape[0]
    n = keypoints.shape[0]
    out = np.empty(m)
    for i in range(m):
        px = points[i, 0]
        py = points[i, 1]
        best = np.inf
        best_s = 0.0
        for k in range(n - 1):
            ax = keypoints[k, 0]
            ay = keypoints[k, 1]
            ex = keypoints[k + 1, 0] - ax
            ey = keypoints[k + 1, 1] - ay
            l2 = ex * ex + ey * ey
            t = ((px - ax) * ex + (py - ay) * ey) / l2
            if t < 0.0:
                t = 0.0
            elif t > 1.0:
                t = 1.0
            qx = ax + t * ex - px
            qy = ay + t * ey - py
            d2 = qx * qx + qy * qy
            if d2 < best:
                best = d2
                best_s = cum[k] + t * seglen[k]
        out[i] = best_s
    return out


def _nearest_keypoint_loop(points, keypoints):
    m = points.shape[0]
    n = keypoints.shape[0]
    out = np.empty(m, dtype=np.int64)
    for i in range(m):
        best = np.inf
        best_k = 0
        for k in range(n):
            dx = keypoints[k, 0] - points[i, 0]
            dy = keypoints[k, 1] - points[i, 1]
            d2 = dx * dx + dy * dy
            if d2 < best:
                best = d2
                best_k = k
        out[i] = best_k
    return out


def _tendency_loop(v, horizon):
    n = v.shape[0]
    out = v.copy()
    for t in range(n - 1):
        stop = min(n, t + horizon + 1)
        if v[t + 1] > v[t]:
            m = v[t + 1]
            for j in range(t + 2, stop):
                if v[j] > m:
                    m = v[j]
            out[t] = m
        elif v[t + 1] < v[t]:
            m = v[t + 1]
            for j in range(t + 2, stop):
                if v[j] < m:
                    m = v[j]
            out[t] = m
    return out


if HAS_NUMBA:
    project_points_nb = njit(cache=True, nogil=True)(_project_points_loop)
    nearest_keypoint_nb = njit(cache=True, nogil=True)(_nearest_keypoint_loop)
    _tendency_nb = njit(cache=True, nogil=True)(_tendency_loop)

    def tendency_nb(v, horizon):
        return _tendency_nb(np.ascontiguousarray(v, dtype=np.float64), int(horizon))

else:  # pragma: no cover
    project_points_nb = _project_points_loop
    nearest_keypoint_nb = _nearest_keypoint_loop

    def tendency_nb(v, horizon):
        return _tendency_loop(np.asarray(v, dtype=np.float64), int(horizon))


# ---------------------------------------------------------------------------
# dispatch
# ---------------------------------------------------------------------------


def project_points(points, keypoints, seglen, cum):
    if USE_NUMBA:
        pts = np.ascontiguousarray(np.asarray(points, dtype=np.float64).reshape(-1, 2))
        return project_points_nb(pts, keypoints, seglen, cum)
    return project_points_np(points, keypoints, seglen, cum)


def nearest_keypoint(points, keypoints):
    if USE_NUMBA:
        pts = np.ascontiguousarray(np.asarray(points, dtype=np.float64).reshape(-1, 2))
        return nearest_keypoint_nb(pts, keypoints)
    return nearest_keypoint_np(points, keypoints)


def tendency(v, horizon):
    if USE_NUMBA:
        return tendency_nb(v, horizon)
    return tendency_np(v, horizon)


def backend():
    return "numba" if USE_NUMBA else "numpy"
