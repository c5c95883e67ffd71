"""Rule-based speed-conditioned expert and the baseline policies used for comparison.

Longitudinal control is the Intelligent Driver Model (Treiber, Hennecke &
Helbing 2000). Passing is a scripted shift-out / pass / merge-back sequence
gated on clearances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from enum import Enum
from pathlib import Path
from typing import Optional

import numpy as np

from .config import Behavior
from .sim import A_LIMIT, MAX_OFFSET, R_LIMIT, Command, Policy, TrajectoryLog, WorldState


@dataclass(frozen=True)
class ExpertParams:
    a_max: float = 3.0
    b_comf: float = 2.0
    s0: float = 4.0
    T_headway: float = 1.2
    delta_exp: float = 4.0
    clearance_ahead: float = 25.0
    clearance_return: float = 8.0
    lane_change_rate: float = 2.0
    # extra shift-out distance per m/s of closing speed (s)
    shift_lookahead: float = 2.0
    # proportional gain on the lateral offset error (1/s)
    lateral_gain: float = 2.0
    creep_speed: float = 1.0
    # brake ahead of a lower-speed plan section once this deceleration is required (m/s^2)
    plan_decel: float = 3.5

    def __post_init__(self):
        for f in fields(self):
            if not getattr(self, f.name) > 0:
                raise ValueError(f"{f.name} must be positive")
        if self.delta_exp < 1:
            raise ValueError("delta_exp must be >= 1")


def load_params(path) -> ExpertParams:
    """Read ``key=value`` lines (``#`` starts a comment) over the defaults."""
    known = {f.name for f in fields(ExpertParams)}
    values = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, val = line.partition("=")
        key = key.strip()
        if not sep or key not in known:
            raise ValueError(f"{path}:{lineno}: unrecognized line {raw!r}")
        values[key] = float(val)
    return ExpertParams(**values)


def idm_accel(v: float, v0: float, p: ExpertParams, gap: Optional[float] = None, v_lead: float = 0.0) -> float:
    """IDM acceleration; ``gap`` is bumper-to-bumper distance to the leader (None = free road)."""
    if v0 <= 0.0:
        free = -p.b_comf / p.a_max if v > 0.0 else 0.0
    else:
        # cap the ratio so a near-zero target cannot overflow; the command is clamped anyway
        free = 1.0 - min(v / v0, 1e3) ** p.delta_exp
    inter = 0.0
    if gap is not None:
        s_star = p.s0 + max(0.0, v * p.T_headway + v * (v - v_lead) / (2.0 * math.sqrt(p.a_max * p.b_comf)))
        inter = (s_star / max(gap, 1e-3)) ** 2
    return p.a_max * (free - inter)


def idm_equilibrium_gap(v: float, v0: float, p: ExpertParams) -> float:
    """Gap at which a follower at speed ``v`` behind a leader at ``v`` holds speed."""
    return (p.s0 + v * p.T_headway) / math.sqrt(1.0 - (v / v0) ** p.delta_exp)


class _Maneuver(Enum):
    KEEP = "keep"
    SHIFT = "shift"
    PASS = "pass"
    MERGE = "merge"


@dataclass(frozen=True)
class _Blocker:
    kind: str
    key: int
    rear: float
    front: float
    speed: float
    width: float


def _blockers(world: WorldState) -> list:
    out = []
    if world.lead is not None:
        ld = world.lead
        out.append(_Blocker("lead", -1, ld.s - ld.length / 2, ld.s + ld.length / 2, ld.speed, ld.width))
    for i, ob in enumerate(world.obstacles):
        out.append(_Blocker("obstacle", i, ob.s_start, ob.s_end, 0.0, ob.width))
    return out


class ExpertPolicy(Policy):
    """IDM speed tracking plus scripted lane changes around slow or static blockers."""

    name = "expert"
    allow_lane_change = True
    anticipate = True

    def __init__(self, params: ExpertParams = ExpertParams()):
        self.p = params
        self.reset(None)

    def reset(self, world) -> None:
        self.maneuver = _Maneuver.KEEP
        self.target: Optional[tuple] = None

    def act(self, world: WorldState) -> Command:
        return self.decide(world, world.active_target_speed, world.active_behavior)

    def _must_pass(self, b: _Blocker, behavior) -> bool:
        if not self.allow_lane_change:
            return False
        return b.kind == "obstacle" or behavior is Behavior.OVERTAKE

    def decide(self, world: WorldState, target_speed: float, behavior: Optional[Behavior]) -> Command:
        p = self.p
        ego = world.ego
        v = ego.speed
        front = ego.s + ego.length / 2
        rear = ego.s - ego.length / 2
        blockers = _blockers(world)
        ahead = sorted((b for b in blockers if b.rear >= front - 1e-6), key=lambda b: b.rear)
        nearest = ahead[0] if ahead else None
        by_key = {(b.kind, b.key): b for b in blockers}
        tgt = by_key.get(self.target) if self.target else None

        if self.maneuver is _Maneuver.KEEP and nearest is not None and self._must_pass(nearest, behavior):
            gap = nearest.rear - front
            if gap <= p.clearance_ahead + p.shift_lookahead * max(v - nearest.speed, 0.0):
                self.maneuver, self.target, tgt = _Maneuver.SHIFT, (nearest.kind, nearest.key), nearest

        if self.maneuver in (_Maneuver.SHIFT, _Maneuver.PASS) and tgt is None:
            self.maneuver = _Maneuver.MERGE

        if self.maneuver is _Maneuver.SHIFT and ego.lane_offset >= MAX_OFFSET - 0.05:
            self.maneuver = _Maneuver.PASS

        if self.maneuver is _Maneuver.PASS and rear > tgt.front + p.clearance_return:
            nxt = next((b for b in ahead if b.rear - front <= p.clearance_ahead and self._must_pass(b, behavior)), None)
            if nxt is not None:
                self.target, tgt = (nxt.kind, nxt.key), nxt
            else:
                self.maneuver, self.target, tgt = _Maneuver.MERGE, None, None

        if self.maneuver is _Maneuver.MERGE and abs(ego.lane_offset) < 0.05:
            self.maneuver = _Maneuver.KEEP

        # longitudinal
        if self.maneuver is _Maneuver.KEEP:
            if nearest is not None and not self._must_pass(nearest, behavior):
                acc = idm_accel(v, target_speed, p, nearest.rear - front, nearest.speed)
            else:
                acc = idm_accel(v, target_speed, p)
            lateral_target = 0.0
        elif self.maneuver is _Maneuver.SHIFT:
            acc = idm_accel(v, target_speed, p)
            clear_at = (ego.width + tgt.width) / 2
            if abs(ego.lane_offset) < clear_at:
                gap = tgt.rear - front
                t_clear = (clear_at - abs(ego.lane_offset)) / p.lane_change_rate
                if gap - max(v - tgt.speed, 0.0) * t_clear < p.s0:
                    acc = idm_accel(v, target_speed, p, gap, tgt.speed)
                    # rolling slowly turns all motion into lateral motion
                    if v < p.creep_speed and gap > 0.5:
                        acc = max(acc, p.creep_speed - v)
            lateral_target = MAX_OFFSET
        elif self.maneuver is _Maneuver.PASS:
            acc = idm_accel(v, target_speed, p)
            lateral_target = MAX_OFFSET
        else:
            if nearest is not None:
                acc = idm_accel(v, target_speed, p, nearest.rear - front, nearest.speed)
            else:
                acc = idm_accel(v, target_speed, p)
            lateral_target = 0.0

        if self.anticipate:
            acc = min(acc, -self._plan_braking(world, v))

        rate_cap = min(p.lane_change_rate, R_LIMIT)
        lane_rate = min(max(p.lateral_gain * (lateral_target - ego.lane_offset), -rate_cap), rate_cap)
        if abs(lateral_target - ego.lane_offset) < 1e-9:
            lane_rate = 0.0
        acc = min(max(acc, -A_LIMIT), A_LIMIT)
        return Command(acc, lane_rate)


    def _plan_braking(self, world: WorldState, v: float) -> float:
        """Deceleration needed to meet the slowest upcoming plan speed, or -inf if not yet needed."""
        plan = world.ctx.plan
        cum = plan.route.cum_dist
        s = world.ego.s
        horizon = s + v * v / (2.0 * self.p.plan_decel) + 10.0
        lo = int(np.searchsorted(cum, s, side="right"))
        hi = int(np.searchsorted(cum, horizon, side="right"))
        if lo < 1 or lo >= hi:
            return -np.inf
        v_next = plan.speeds[lo:hi]
        slower = v_next < v
        if not slower.any():
            return -np.inf
        # the commanded speed switches halfway between keypoints (nearest-keypoint lookup)
        switch_at = 0.5 * (cum[lo - 1:hi - 1] + cum[lo:hi])[slower]
        dist = np.maximum(switch_at - s, 0.1)
        need = float(np.max((v * v - v_next[slower] ** 2) / (2.0 * dist)))
        return need if need >= self.p.plan_decel else -np.inf


class LaneKeepingPolicy(ExpertPolicy):
    """The expert with lane changes disabled: follows whatever is ahead."""

    name = "nolane"
    allow_lane_change = False


class ConstantSpeedPolicy(ExpertPolicy):
    """The expert driving a fixed cruise speed, ignoring the commanded target."""

    anticipate = False

    def __init__(self, speed: float = 8.0, params: ExpertParams = ExpertParams()):
        super().__init__(params)
        self.speed = float(speed)
        self.name = f"constant:{self.speed:g}"

    def act(self, world: WorldState) -> Command:
        return self.decide(world, self.speed, world.active_behavior)


class InertPolicy(Policy):
    name = "inert"

    def act(self, world: WorldState) -> Command:
        return Command(0.0, 0.0)


class ReplayPolicy(Policy):
    """Re-issues the commands recorded in a trajectory log."""

    name = "replay"

    def __init__(self, log: TrajectoryLog):
        self.frames = log.frames

    def act(self, world: WorldState) -> Command:
        nxt = world.frame + 1
        if nxt >= len(self.frames):
            return Command(0.0, 0.0)
        f = self.frames[nxt]
        return Command(f["cmd_accel"] or 0.0, f["cmd_lane_rate"] or 0.0)


def make_policy(spec: str, params: ExpertParams = ExpertParams(), replay_log: Optional[TrajectoryLog] = None) -> Policy:
    kind, _, arg = spec.partition(":")
    if kind == "expert":
        return ExpertPolicy(params)
    if kind == "inert":
        return InertPolicy()
    if kind == "nolane":
        return LaneKeepingPolicy(params)
    if kind == "constant":
        return ConstantSpeedPolicy(float(arg or 8.0), params)
    if kind == "replay":
        if replay_log is None:
            raise ValueError("replay policy needs a log")
        return ReplayPolicy(replay_log)
    raise ValueError(f"unknown policy {spec!r}")
