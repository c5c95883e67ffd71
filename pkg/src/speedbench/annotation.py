"""Virtual target-speed labels for driving logs that carry no speed command.

Each frame gets a *tendency* speed (the extreme future speed along the current
monotonic trend within ``horizon`` frames) and a *virtual* target speed that
extends the frame-to-frame change of the tendency over a random look-ahead
time ``r ~ U(t_min, t_max)``, clipped to ``max_extend`` and floored at zero.

``t_min`` defaults to 0.5 s for both presets; it is a free choice, not a
published constant.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import FPS, kernels
from .errors import TraceTooShort


@dataclass(frozen=True)
class AnnotationParams:
    horizon: int = 40
    fps: float = FPS
    t_min: float = 0.5
    t_max: float = 3.0
    max_extend: float = 10.0
    seed: int = 0

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be at least one frame")
        if not 0.0 <= self.t_min <= self.t_max:
            raise ValueError("need 0 <= t_min <= t_max")
        if not self.max_extend > 0:
            raise ValueError("max_extend must be positive")
        if not self.fps > 0:
            raise ValueError("fps must be positive")


PRESETS = {
    "long": dict(horizon=40, fps=10, t_max=3.0, max_extend=10.0),
    "short": dict(horizon=40, fps=10, t_max=1.5, max_extend=3.0),
}


def preset(name: str, seed: int = 0) -> AnnotationParams:
    try:
        values = PRESETS[name.lower()]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    return AnnotationParams(seed=seed, **values)


def tendency_speed(trace, t: int, horizon: int) -> float:
    """Tendency speed at a single frame."""
    v = trace
    if not 0 <= t < len(v):
        raise IndexError(t)
    if t + 1 >= len(v):
        return float(v[t])
    window = v[t + 1:t + 1 + horizon]
    if v[t + 1] > v[t]:
        return float(max(window))
    if v[t + 1] < v[t]:
        return float(min(window))
    return float(v[t])


def tendency_speeds(trace, horizon: int) -> np.ndarray:
    return kernels.tendency(np.asarray(trace, dtype=np.float64), horizon)


def extrapolate(prev_tend, tend, fps, r, max_extend):
    """Virtual target speed from two consecutive tendency speeds and a look-ahead time ``r``."""
    tend = np.asarray(tend, dtype=np.float64)
    dv = np.clip((tend - prev_tend) * fps * r, -max_extend, max_extend)
    virt = tend + dv
    # tend + dv can land one ulp outside the band; step back inside so the bound holds exactly
    for _ in range(4):
        over = virt - tend > max_extend
        under = tend - virt > max_extend
        if not (over.any() or under.any()):
            break
        virt = np.where(over, np.nextafter(virt, -np.inf), virt)
        virt = np.where(under, np.nextafter(virt, np.inf), virt)
    out = np.maximum(virt, 0.0)
    return float(out) if out.ndim == 0 else out


def lookahead_draws(n: int, params: AnnotationParams, trace_index: int = 0) -> np.ndarray:
    """One look-ahead time per frame transition, from a counter-based stream keyed on (seed, trace_index)."""
    bitgen = np.random.Philox(np.random.SeedSequence([params.seed, trace_index]))
    u = np.random.Generator(bitgen).random(max(n - 1, 0))
    return params.t_min + (params.t_max - params.t_min) * u


@dataclass
class AnnotatedTrace:
    v: np.ndarray
    v_tend: np.ndarray
    v_virt: np.ndarray

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("frame,v,v_tend,v_virt\n")
        for i, (a, b, c) in enumerate(zip(self.v, self.v_tend, self.v_virt)):
            buf.write(f"{i},{a:.9g},{b:.9g},{c:.9g}\n")
        return buf.getvalue()


def virtual_target_speed(trace, params: AnnotationParams, trace_index: int = 0) -> AnnotatedTrace:
    v = np.asarray(trace, dtype=np.float64)
    if v.ndim != 1 or len(v) < 2:
        raise TraceTooShort(f"need at least two frames, got {v.size}")
    if np.any(v < 0) or not np.all(np.isfinite(v)):
        raise ValueError("speeds must be finite and non-negative")
    tend = tendency_speeds(v, params.horizon)
    r = lookahead_draws(len(v), params, trace_index)
    virt = np.empty_like(tend)
    virt[0] = tend[0]
    virt[1:] = extrapolate(tend[:-1], tend[1:], params.fps, r, params.max_extend)
    return AnnotatedTrace(v, tend, virt)


def read_speed_trace(path) -> np.ndarray:
    """Speeds from a trajectory log (``.jsonl``) or a CSV with a ``v`` column."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix == ".jsonl":
        rows = [json.loads(line) for line in text.splitlines() if line.strip()]
        return np.array([r["speed"] for r in rows if r.get("type") != "meta"], dtype=np.float64)
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames is None or "v" not in reader.fieldnames:
        raise ValueError(f"{path}: CSV input needs a 'v' column")
    return np.array([float(row["v"]) for row in reader], dtype=np.float64)
