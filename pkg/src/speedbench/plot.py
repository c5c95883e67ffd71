"""Speed-profile figures as plain SVG: actual and commanded speed against arc-length."""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

import numpy as np

from .route import SpeedPlan, project_points
from .sim import TrajectoryLog

WIDTH, HEIGHT = 800, 400
MARGIN = dict(left=60, right=20, top=30, bottom=50)
COLORS = {"actual": "#1f77b4", "target": "#d62728"}


def _nice_step(span: float, ticks: int = 6) -> float:
    raw = span / ticks
    mag = 10 ** math.floor(math.log10(raw))
    for m in (1, 2, 5, 10):
        if raw <= m * mag:
            return m * mag
    return 10 * mag


def speed_profile(log: TrajectoryLog, plan: SpeedPlan) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(s, v_actual, v_target)`` per frame, target read from the plan at the projected arc-length."""
    s = project_points(plan.route, log.positions)
    return s, log.speeds, np.asarray(plan.speed_at_arclength(s), dtype=np.float64)


def render_svg(log: TrajectoryLog, plan: SpeedPlan, title: str = "") -> str:
    s, v_act, v_tgt = speed_profile(log, plan)
    x_max = max(plan.route.total_length, float(s.max()) if len(s) else 0.0, 1.0)
    y_max = max(float(np.max(v_act, initial=0.0)), float(np.max(v_tgt, initial=0.0)), 1.0) * 1.1
    pw = WIDTH - MARGIN["left"] - MARGIN["right"]
    ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]

    def px(x):
        return MARGIN["left"] + x / x_max * pw

    def py(y):
        return MARGIN["top"] + ph - y / y_max * ph

    def points(xs, ys):
        return " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(xs, ys))

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
    ]
    x0, y0 = MARGIN["left"], MARGIN["top"] + ph
    out.append(f'<line x1="{x0}" y1="{y0}" x2="{x0 + pw}" y2="{y0}" stroke="black"/>')
    out.append(f'<line x1="{x0}" y1="{MARGIN["top"]}" x2="{x0}" y2="{y0}" stroke="black"/>')
    step = _nice_step(x_max)
    for k in range(int(x_max // step) + 1):
        xv = k * step
        out.append(f'<text x="{px(xv):.2f}" y="{y0 + 18}" font-size="11" text-anchor="middle">{xv:g}</text>')
    step = _nice_step(y_max, 5)
    for k in range(int(y_max // step) + 1):
        yv = k * step
        out.append(f'<text x="{x0 - 8}" y="{py(yv) + 4:.2f}" font-size="11" text-anchor="end">{yv:g}</text>')
    out.append(f'<text x="{x0 + pw / 2}" y="{HEIGHT - 10}" font-size="13" text-anchor="middle">arc length [m]</text>')
    out.append(
        f'<text x="15" y="{MARGIN["top"] + ph / 2}" font-size="13" text-anchor="middle" '
        f'transform="rotate(-90 15 {MARGIN["top"] + ph / 2})">speed [m/s]</text>'
    )
    if title:
        out.append(f'<text x="{WIDTH / 2}" y="18" font-size="14" text-anchor="middle">{escape(title)}</text>')
    out.append(f'<polyline id="target" fill="none" stroke="{COLORS["target"]}" stroke-width="1.5" stroke-dasharray="6 3" points="{points(s, v_tgt)}"/>')
    out.append(f'<polyline id="actual" fill="none" stroke="{COLORS["actual"]}" stroke-width="1.5" points="{points(s, v_act)}"/>')
    lx = x0 + pw - 150
    for i, (name, label) in enumerate((("actual", "actual speed"), ("target", "target speed"))):
        yy = MARGIN["top"] + 12 + 16 * i
        out.append(f'<line x1="{lx}" y1="{yy}" x2="{lx + 20}" y2="{yy}" stroke="{COLORS[name]}" stroke-width="2"/>')
        out.append(f'<text x="{lx + 26}" y="{yy + 4}" font-size="11">{label}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
