"""Command-adherence scores and simplified driving-quality scores over trajectory logs."""

from __future__ import annotations

import io
import json
import math
from dataclasses import asdict, dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from . import FPS
from .config import Difficulty
from .errors import EmptyLog
from .route import Route, SpeedPlan, project_points
from .sim import ScenarioOutcome, TrajectoryLog

SOFTENING_MODES = ("full", "half", "off")


@dataclass(frozen=True)
class MetricConfig:
    alpha: float = 3.0
    epsilon: float = 0.1
    comfort_accel: float = 4.05
    comfort_jerk: float = 4.13
    collision_penalty: float = 0.6
    # how a lead-constrained Follow frame is scored: "full" -> 1, "half" -> halfway to 1, "off" -> unsoftened
    softening: str = "full"

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.softening not in SOFTENING_MODES:
            raise ValueError(f"softening must be one of {SOFTENING_MODES}")


@dataclass
class SpeedAdherenceBreakdown:
    s: np.ndarray
    w: np.ndarray
    v_actual: np.ndarray
    v_target: np.ndarray
    e: np.ndarray
    score: np.ndarray
    softened: np.ndarray
    total: float

    @property
    def frames(self) -> list[dict]:
        return [
            {"s": float(s), "w": float(w), "v_actual": float(va), "v_target": float(vt), "e": float(e), "score": float(sc), "softened": bool(so)}
            for s, w, va, vt, e, sc, so in zip(self.s, self.w, self.v_actual, self.v_target, self.e, self.score, self.softened)
        ]


def step_weights(positions: np.ndarray) -> np.ndarray:
    """Euclidean distance from the previous frame; the first frame weighs nothing."""
    w = np.zeros(len(positions))
    if len(positions) > 1:
        d = np.diff(positions, axis=0)
        w[1:] = np.hypot(d[:, 0], d[:, 1])
    return w


def follow_constrained(log: TrajectoryLog, v_actual: np.ndarray, v_target: np.ndarray) -> np.ndarray:
    follow = np.array([b == "follow" for b in log.behaviors], dtype=bool)
    v_lead = log.column("lead_speed")
    has_lead = ~np.isnan(v_lead)
    with np.errstate(invalid="ignore"):
        return follow & has_lead & (v_lead <= v_actual) & (v_actual < v_target)


def speed_adherence(log: TrajectoryLog, route: Route, plan: SpeedPlan, cfg: MetricConfig = MetricConfig()) -> SpeedAdherenceBreakdown:
    if len(log.frames) < 2:
        raise EmptyLog(f"speed adherence needs at least two frames, got {len(log.frames)}")
    pos = log.positions
    s = project_points(route, pos)
    v_target = np.asarray(plan.speed_at_arclength(s), dtype=np.float64)
    v_actual = log.speeds
    w = step_weights(pos)
    e = np.abs(v_actual - v_target) / np.maximum(v_target, cfg.epsilon)
    score = np.exp(-cfg.alpha * e)
    softened = follow_constrained(log, v_actual, v_target)
    if cfg.softening == "full":
        score = np.where(softened, 1.0, score)
    elif cfg.softening == "half":
        score = np.where(softened, 0.5 * (1.0 + score), score)
    else:
        softened = np.zeros_like(softened)
    # exactly rounded sums: zero-weight frames cannot perturb the result
    wsum = math.fsum(w[1:])
    total = 100.0 * math.fsum(w[1:] * score[1:]) / wsum if wsum > 0 else 0.0
    return SpeedAdherenceBreakdown(s, w, v_actual, v_target, e, score, softened, total)


def overtake_score(outcomes: Sequence[ScenarioOutcome]) -> Optional[float]:
    """Mean of 100/0 per scenario; None when the route commands no scenario."""
    if not outcomes:
        return None
    return 100.0 * sum(o.success for o in outcomes) / len(outcomes)


def auxiliary_scores(log: TrajectoryLog, route: Route, collisions: int, cfg: MetricConfig = MetricConfig(), plan: Optional[SpeedPlan] = None) -> dict:
    pos = log.positions
    s = project_points(route, pos)
    completion = 100.0 * min(float(np.max(s)) / route.total_length, 1.0) if len(s) else 0.0
    penalty = cfg.collision_penalty ** int(collisions)
    w = step_weights(pos)
    v_act = log.speeds
    v_tgt = np.asarray(plan.speed_at_arclength(s), dtype=np.float64) if plan is not None else log.column("target_speed")
    den = float(np.dot(w, v_tgt))
    efficiency = 100.0 * float(np.dot(w, v_act)) / den if den > 0 else 0.0
    acc = log.column("accel")
    jerk = np.zeros_like(acc)
    jerk[1:] = np.diff(acc) * FPS
    ok = (np.abs(acc) <= cfg.comfort_accel) & (np.abs(jerk) <= cfg.comfort_jerk)
    comfort = 100.0 * float(np.mean(ok)) if len(ok) else 0.0
    return {
        "route_completion": completion,
        "safety_penalty": penalty,
        "driving_score": completion * penalty,
        "efficiency": efficiency,
        "comfort": comfort,
    }


@dataclass(frozen=True)
class ScoreReport:
    route_id: str
    difficulty: str
    speed_adherence: float
    overtake: Optional[float]
    route_completion: float
    safety_penalty: float
    driving_score: float
    efficiency: float
    comfort: float
    collisions: int
    success: bool

    def to_dict(self, ndigits: int = 6) -> dict:
        d = asdict(self)
        for k, v in d.items():
            if isinstance(v, float):
                d[k] = round(v, ndigits)
        return d


def score_log(log: TrajectoryLog, cfg_route, metric_cfg: MetricConfig = MetricConfig()) -> ScoreReport:
    """Full report for one episode log against its route config."""
    route, plan = cfg_route.route, cfg_route.plan
    collisions = int(log.meta.get("collisions", 0))
    sa = speed_adherence(log, route, plan, metric_cfg)
    aux = auxiliary_scores(log, route, collisions, metric_cfg, plan)
    return ScoreReport(
        route_id=cfg_route.route_id,
        difficulty=cfg_route.difficulty.value,
        speed_adherence=sa.total,
        overtake=overtake_score(log.outcomes),
        collisions=collisions,
        success=round(aux["route_completion"], 6) >= 100.0 and collisions == 0,
        **aux,
    )


ROLLUP_METRICS = ("speed_adherence", "overtake", "driving_score", "success_rate", "route_completion", "efficiency", "comfort")
BUCKETS = ("A", "E", "M", "H")


def _value(report: ScoreReport, metric: str):
    if metric == "success_rate":
        return 100.0 * report.success
    return getattr(report, metric)


def aggregate(reports: Iterable[ScoreReport]) -> dict:
    """Unweighted per-difficulty means; the All bucket averages every route that has a value."""
    reports = list(reports)
    if not reports:
        raise ValueError("nothing to aggregate")
    groups = {b: [] for b in BUCKETS}
    for r in reports:
        groups["A"].append(r)
        groups[Difficulty(r.difficulty).letter].append(r)
    rollup = {}
    for b, rs in groups.items():
        row = {"routes": len(rs)}
        for m in ROLLUP_METRICS:
            vals = [v for v in (_value(r, m) for r in rs) if v is not None]
            row[m] = sum(vals) / len(vals) if vals else None
        rollup[b] = row
    return rollup


def rollup_csv(rollup: dict, label: str = "run") -> str:
    header = ["label"] + [f"{m}_{b}" for m in ROLLUP_METRICS for b in BUCKETS]
    cells = [label]
    for m in ROLLUP_METRICS:
        for b in BUCKETS:
            v = rollup[b][m]
            cells.append("-" if v is None else f"{v:.6f}")
    buf = io.StringIO()
    buf.write(",".join(header) + "\n")
    buf.write(",".join(cells) + "\n")
    return buf.getvalue()


def report_json(reports: Sequence[ScoreReport], rollup: Optional[dict] = None) -> str:
    doc = {"routes": [r.to_dict() for r in reports]}
    if rollup is not None:
        doc["rollup"] = {b: {k: (round(v, 6) if isinstance(v, float) else v) for k, v in row.items()} for b, row in rollup.items()}
    return json.dumps(doc, indent=2) + "\n"
