"""Deterministic fixed-timestep closed-loop world.

The world is route-centric: every agent is located by its arc-length ``s``
along the route and a lateral ``lane_offset`` (positive = left). World
coordinates are derived from those two numbers, and the rectangle overlap
test for collisions is also done in (s, offset) space.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from enum import Enum
from typing import NamedTuple, Optional

import numpy as np

from . import DT, FPS, __version__
from .config import Behavior, ScenarioConfig, config_digest
from .errors import EpisodeAborted, InvalidCommand, SimEnded
from .route import Route, SpeedPlan, query_target_speed

A_LIMIT = 4.0
R_LIMIT = 2.0
MAX_OFFSET = 3.5
VEHICLE_LENGTH = 4.5
VEHICLE_WIDTH = 2.0
OBSTACLE_WIDTH = 2.0
# lead is placed this far beyond the end of any obstacle it would otherwise overlap
LEAD_OBSTACLE_MARGIN = 5.0
# positions are logged with 9 significant digits; keep the true step a bit shorter
# than the travelled distance so rounding cannot break the displacement bound
_ROUNDING_SLACK = 2e-6


class Phase(str, Enum):
    PENDING = "pending"
    ACTIVE = "active"
    DONE = "done"


class Command(NamedTuple):
    accel: float
    lane_rate: float


@dataclass(frozen=True)
class VehicleState:
    x: float
    y: float
    heading: float
    speed: float
    accel: float
    lane_offset: float
    s: float
    length: float = VEHICLE_LENGTH
    width: float = VEHICLE_WIDTH

    @property
    def pos(self) -> tuple[float, float]:
        return (self.x, self.y)


@dataclass(frozen=True)
class ScenarioOutcome:
    triggered: bool
    commanded: Behavior
    ego_finished_ahead: bool = False
    ego_ever_passed: bool = False
    timed_out: bool = False
    collision: bool = False

    @property
    def success(self) -> bool:
        if not self.triggered:
            return False
        if self.commanded is Behavior.OVERTAKE:
            return self.ego_finished_ahead
        return not self.ego_ever_passed and not self.collision

    def to_dict(self) -> dict:
        d = asdict(self)
        d["commanded"] = self.commanded.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioOutcome":
        return cls(**{**d, "commanded": Behavior(d["commanded"])})


@dataclass(frozen=True)
class ScenarioPhase:
    phase: Phase = Phase.PENDING
    outcome: Optional[ScenarioOutcome] = None
    activated_at: Optional[float] = None
    ever_passed: bool = False


@dataclass(frozen=True)
class Obstacle:
    s_start: float
    s_end: float
    width: float = OBSTACLE_WIDTH


@dataclass(frozen=True, eq=False)
class SimContext:
    cfg: ScenarioConfig
    route: Route
    plan: SpeedPlan
    obstacles: tuple
    max_time: float


@dataclass(frozen=True)
class WorldState:
    t: float
    frame: int
    ego: VehicleState
    lead: Optional[VehicleState]
    scenarios: tuple
    active_target_speed: float
    active_behavior: Optional[Behavior]
    collisions: int = 0
    ended: bool = False
    end_reason: Optional[str] = None
    ctx: SimContext = field(default=None, compare=False, repr=False)

    @property
    def scenario_fsm(self) -> Optional[ScenarioPhase]:
        """The first scenario that has not finished, if any."""
        for ph in self.scenarios:
            if ph.phase is not Phase.DONE:
                return ph
        return None

    @property
    def obstacles(self) -> tuple:
        return self.ctx.obstacles

    @property
    def route(self) -> Route:
        return self.ctx.route


def global_timeout(route_length: float, default_speed: float) -> float:
    if default_speed <= 0:
        return 60.0
    return max(60.0, route_length / (0.3 * default_speed))


def _vehicle(route: Route, s: float, offset: float, speed: float, accel: float) -> VehicleState:
    x, y, h = route.pose_at(s, offset)
    return VehicleState(x, y, h, speed, accel, offset, s)


def _active_command(ctx: SimContext, ego: VehicleState, scenarios) -> tuple[float, Optional[Behavior]]:
    v = query_target_speed(ctx.plan, ego.pos)
    behavior = None
    for spec, ph in zip(ctx.cfg.scenarios, scenarios):
        if ph.phase is not Phase.DONE:
            behavior = spec.behavior
            break
    return v, behavior


def init_world(cfg: ScenarioConfig, max_time: Optional[float] = None) -> WorldState:
    route = cfg.route
    length = route.total_length
    obstacles = tuple(Obstacle(o.s_start * length, o.s_end * length) for o in cfg.obstacles)
    if max_time is None:
        max_time = global_timeout(length, cfg.default_speed)
    ctx = SimContext(cfg, route, cfg.plan, obstacles, float(max_time))
    ego = _vehicle(route, 0.0, 0.0, 0.0, 0.0)
    scenarios = tuple(ScenarioPhase() for _ in cfg.scenarios)
    v, behavior = _active_command(ctx, ego, scenarios)
    return WorldState(0.0, 0, ego, None, scenarios, v, behavior, ctx=ctx)


def _overlap(s_a, half_len_a, off_a, half_w_a, s_b, half_len_b, off_b, half_w_b) -> bool:
    return abs(s_a - s_b) < half_len_a + half_len_b and abs(off_a - off_b) < half_w_a + half_w_b


def in_collision(ego: VehicleState, lead: Optional[VehicleState], obstacles) -> bool:
    hl, hw = ego.length / 2, ego.width / 2
    if lead is not None and _overlap(ego.s, hl, ego.lane_offset, hw, lead.s, lead.length / 2, lead.lane_offset, lead.width / 2):
        return True
    for ob in obstacles:
        mid = 0.5 * (ob.s_start + ob.s_end)
        if _overlap(ego.s, hl, ego.lane_offset, hw, mid, 0.5 * (ob.s_end - ob.s_start), 0.0, ob.width / 2):
            return True
    return False


def _advance_ego(route: Route, ego: VehicleState, cmd: Command) -> VehicleState:
    v0 = ego.speed
    a = cmd.accel
    v1 = v0 + a * DT
    if v1 < 0.0:
        dist = v0 * v0 / (2.0 * -a)
        v1 = 0.0
    else:
        dist = 0.5 * (v0 + v1) * DT
    budget = dist - _ROUNDING_SLACK if dist > 2 * _ROUNDING_SLACK else 0.0

    lateral = min(max(cmd.lane_rate * DT, -budget), budget)
    offset = min(max(ego.lane_offset + lateral, -MAX_OFFSET), MAX_OFFSET)
    lateral = offset - ego.lane_offset
    ds = math.sqrt(max(budget * budget - lateral * lateral, 0.0))
    length = route.total_length

    # the offset curve stretches on the outside of bends; shorten ds until the
    # world-frame displacement fits inside the travelled distance
    s = min(ego.s + ds, length)
    x, y, h = route.pose_at(s, offset)
    for _ in range(40):
        moved = math.hypot(x - ego.x, y - ego.y)
        if moved <= budget:
            break
        ds *= budget / moved * (1.0 - 1e-9)
        s = min(ego.s + ds, length)
        x, y, h = route.pose_at(s, offset)
    else:
        s = ego.s
        x, y, h = route.pose_at(s, offset)
    return VehicleState(x, y, h, v1, (v1 - v0) / DT, offset, s, ego.length, ego.width)


def step(world: WorldState, cmd) -> WorldState:
    if world.ended:
        raise SimEnded(f"episode already ended ({world.end_reason})")
    # commands are applied at log precision so a replayed log reproduces the episode bit for bit
    cmd = Command(_r(float(cmd[0])), _r(float(cmd[1])))
    if not (math.isfinite(cmd.accel) and math.isfinite(cmd.lane_rate)):
        raise InvalidCommand(f"non-finite command {cmd}")
    if abs(cmd.accel) > A_LIMIT + 1e-9 or abs(cmd.lane_rate) > R_LIMIT + 1e-9:
        raise InvalidCommand(f"command {cmd} exceeds limits (|accel| <= {A_LIMIT}, |lane_rate| <= {R_LIMIT})")

    ctx = world.ctx
    route = ctx.route
    length = route.total_length
    frame = world.frame + 1
    t = frame / FPS

    ego = _advance_ego(route, world.ego, cmd)
    lead = world.lead
    if lead is not None:
        lead = _vehicle(route, lead.s + lead.speed * DT, lead.lane_offset, lead.speed, 0.0)

    collided = in_collision(ego, lead, ctx.obstacles)
    collisions = world.collisions + int(collided)
    ended, reason = False, None
    if collided:
        ended, reason = True, "collision"
    elif ego.s >= length:
        ended, reason = True, "route_completed"
    elif t >= ctx.max_time - 1e-9:
        ended, reason = True, "timeout"

    phases = list(world.scenarios)
    busy = any(ph.phase is Phase.ACTIVE for ph in phases)
    for i, (spec, ph) in enumerate(zip(ctx.cfg.scenarios, phases)):
        if ph.phase is Phase.ACTIVE:
            passed = ph.ever_passed or ego.s > lead.s
            ahead = ego.s > lead.s + ego.length
            timed_out = t - ph.activated_at > spec.timeout
            if ahead or collided or timed_out or ended:
                outcome = ScenarioOutcome(
                    triggered=True,
                    commanded=spec.behavior,
                    ego_finished_ahead=ahead,
                    ego_ever_passed=passed,
                    timed_out=timed_out and not ahead,
                    collision=collided,
                )
                phases[i] = replace(ph, phase=Phase.DONE, outcome=outcome, ever_passed=passed)
                lead = None
                busy = False
            else:
                phases[i] = replace(ph, ever_passed=passed)
        elif ph.phase is Phase.PENDING:
            if ended:
                phases[i] = replace(ph, phase=Phase.DONE, outcome=ScenarioOutcome(False, spec.behavior))
            elif not busy and ego.s >= spec.trigger_progress * length:
                trigger_s = spec.trigger_progress * length
                lead_s = trigger_s + spec.spawn_distance
                for ob in ctx.obstacles:
                    if ob.s_end > trigger_s:
                        lead_s = max(lead_s, ob.s_end + VEHICLE_LENGTH / 2 + LEAD_OBSTACLE_MARGIN)
                lead = _vehicle(route, lead_s, 0.0, spec.lead_speed, 0.0)
                phases[i] = replace(ph, phase=Phase.ACTIVE, activated_at=t)
                busy = True

    phases = tuple(phases)
    v, behavior = _active_command(ctx, ego, phases)
    return WorldState(t, frame, ego, lead, phases, v, behavior, collisions, ended, reason, ctx)


# ---------------------------------------------------------------------------
# trajectory logs
# ---------------------------------------------------------------------------

FRAME_KEYS = (
    "frame", "t", "x", "y", "heading", "speed", "accel", "lane_offset",
    "lead_x", "lead_y", "lead_speed", "target_speed", "behavior", "cmd_accel", "cmd_lane_rate",
)


def _r(x):
    return None if x is None else float(f"{x:.9g}")


def frame_record(world: WorldState, cmd=(0.0, 0.0)) -> dict:
    e, ld = world.ego, world.lead
    return {
        "frame": world.frame,
        "t": _r(world.t),
        "x": _r(e.x),
        "y": _r(e.y),
        "heading": _r(e.heading),
        "speed": _r(e.speed),
        "accel": _r(e.accel),
        "lane_offset": _r(e.lane_offset),
        "lead_x": _r(ld.x) if ld else None,
        "lead_y": _r(ld.y) if ld else None,
        "lead_speed": _r(ld.speed) if ld else None,
        "target_speed": _r(world.active_target_speed),
        "behavior": world.active_behavior.value if world.active_behavior else None,
        "cmd_accel": _r(cmd[0]),
        "cmd_lane_rate": _r(cmd[1]),
    }


@dataclass
class TrajectoryLog:
    meta: dict
    frames: list

    def column(self, key, fill=np.nan) -> np.ndarray:
        return np.array([fill if f[key] is None else f[key] for f in self.frames], dtype=np.float64)

    @property
    def positions(self) -> np.ndarray:
        return np.array([(f["x"], f["y"]) for f in self.frames], dtype=np.float64).reshape(-1, 2)

    @property
    def speeds(self) -> np.ndarray:
        return self.column("speed")

    @property
    def behaviors(self) -> list:
        return [f["behavior"] for f in self.frames]

    def to_jsonl(self) -> str:
        lines = [json.dumps({"type": "meta", **self.meta}, separators=(",", ":"))]
        lines.extend(json.dumps(f, separators=(",", ":")) for f in self.frames)
        return "\n".join(lines) + "\n"

    @classmethod
    def from_jsonl(cls, text: str) -> "TrajectoryLog":
        rows = [json.loads(line) for line in text.splitlines() if line.strip()]
        if not rows or rows[0].get("type") != "meta":
            raise ValueError("trajectory log must start with a meta line")
        meta = dict(rows[0])
        meta.pop("type")
        frames = [{k: r.get(k) for k in FRAME_KEYS} for r in rows[1:]]
        return cls(meta, frames)

    @property
    def outcomes(self) -> list:
        return [ScenarioOutcome.from_dict(d) for d in self.meta.get("outcomes", [])]


@dataclass
class EpisodeResult:
    log: TrajectoryLog
    outcomes: tuple
    collisions: int
    end_reason: Optional[str]
    final: WorldState


class Policy:
    """Closed-loop driver: sees the world state, returns an (accel, lane_rate) command."""

    name = "policy"

    def reset(self, world: WorldState) -> None:
        pass

    def act(self, world: WorldState) -> Command:
        raise NotImplementedError


def _meta(cfg: ScenarioConfig, policy: Policy, world: WorldState, aborted: bool) -> dict:
    outcomes = [ph.outcome.to_dict() for ph in world.scenarios if ph.outcome is not None]
    return {
        "route_id": cfg.route_id,
        "difficulty": cfg.difficulty.value,
        "seed": cfg.seed,
        "config_digest": config_digest(cfg),
        "policy": getattr(policy, "name", type(policy).__name__),
        "fps": FPS,
        "version": __version__,
        "end_reason": "aborted" if aborted else world.end_reason,
        "collisions": world.collisions,
        "outcomes": outcomes,
    }


def run_episode(cfg: ScenarioConfig, policy: Policy, max_time: Optional[float] = None) -> EpisodeResult:
    world = init_world(cfg, max_time)
    policy.reset(world)
    frames = [frame_record(world)]
    while not world.ended:
        try:
            cmd = policy.act(world)
            world = step(world, cmd)
        except Exception as exc:
            log = TrajectoryLog(_meta(cfg, policy, world, aborted=True), frames)
            partial = EpisodeResult(log, tuple(ph.outcome for ph in world.scenarios), world.collisions, "aborted", world)
            raise EpisodeAborted(f"{cfg.route_id}: policy failed at frame {world.frame}: {exc}", partial) from exc
        frames.append(frame_record(world, cmd))
    log = TrajectoryLog(_meta(cfg, policy, world, aborted=False), frames)
    return EpisodeResult(log, tuple(ph.outcome for ph in world.scenarios), world.collisions, world.end_reason, world)
