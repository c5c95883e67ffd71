"""Route configuration files: data model, XML parsing/serialization, suite generation.

Schema (one route per document; a ``<routes>`` wrapper holding exactly one
``<route>`` is also accepted)::

    <route id="easy_000" difficulty="easy" seed="42" default_speed="8.000000" weather="ClearNoon">
      <waypoints>
        <wp x="0.000000" y="0.000000"/>
        ...
      </waypoints>
      <speed from="0.000000" to="0.500000" v="8.000000"/>
      <obstacle from="0.080000" to="0.095000"/>
      <scenario type="OvertakeRoute" behavior="overtake" trigger="0.150000"
                speed="4.000000" distance="30.000000" timeout="90.000000"/>
    </route>

Progress values (``from``, ``to``, ``trigger``) are normalized route progress in
[0, 1]. This element layout is our own; it is not taken from any CARLA schema.
"""

from __future__ import annotations

import hashlib
import logging
import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

from .errors import DegenerateRoute, InvalidCount, OverlappingSegments, ParseError, SchemaError, ValidationError
from .route import Route, SpeedPlan, SpeedSegment, build_route, build_speed_plan

log = logging.getLogger(__name__)

DEFAULT_TARGET_SPEEDS = (4.0, 6.0, 8.0, 10.0, 12.0)
LEAD_SPEED_FLOOR = 0.5
LEAD_SPEED_MARGIN = 1.0
WEATHERS = ("ClearNoon", "CloudyNoon", "WetNoon", "SoftRainSunset", "ClearSunset", "HardRainNight")
U64_MAX = 2**64 - 1


class Difficulty(str, Enum):
    EASY = "easy"
    MEDIUM = "medium"
    HARD = "hard"

    @property
    def letter(self) -> str:
        return self.value[0].upper()


class Behavior(str, Enum):
    OVERTAKE = "overtake"
    FOLLOW = "follow"


@dataclass(frozen=True)
class OvertakeSpec:
    trigger_progress: float
    lead_speed: float
    spawn_distance: float
    behavior: Behavior
    timeout: float = 90.0
    frequency: Optional[float] = None

    def __post_init__(self):
        if not 0.0 <= self.trigger_progress <= 1.0:
            raise ValidationError(f"trigger progress {self.trigger_progress} outside [0, 1]")
        if not self.lead_speed > 0:
            raise ValidationError("lead speed must be positive")
        if not self.spawn_distance > 0:
            raise ValidationError("spawn distance must be positive")
        if not self.timeout > 0:
            raise ValidationError("scenario timeout must be positive")
        if self.frequency is not None and self.frequency < 0:
            raise ValidationError("frequency must be non-negative")


@dataclass(frozen=True)
class ObstacleSpec:
    """Static blockage of the ego lane over normalized progress ``[s_start, s_end]``."""

    s_start: float
    s_end: float

    def __post_init__(self):
        if not 0.0 <= self.s_start < self.s_end <= 1.0:
            raise ValidationError(f"obstacle bounds ({self.s_start}, {self.s_end}) invalid")


@dataclass(frozen=True)
class ScenarioConfig:
    route_id: str
    difficulty: Difficulty
    waypoints: tuple
    speed_segments: tuple = ()
    scenarios: tuple = ()
    obstacles: tuple = ()
    default_speed: float = 8.0
    seed: int = 0
    weather: str = "ClearNoon"
    warnings: tuple = field(default=(), compare=False, repr=False)

    @cached_property
    def route(self) -> Route:
        return build_route(self.waypoints)

    @cached_property
    def plan(self) -> SpeedPlan:
        return build_speed_plan(self.route, self.speed_segments, self.default_speed)

    def digest(self) -> str:
        return config_digest(self)


def validate(cfg: ScenarioConfig) -> ScenarioConfig:
    if cfg.difficulty is Difficulty.EASY and cfg.scenarios:
        raise ValidationError("easy routes carry no interfering vehicles")
    if not 0 <= cfg.seed <= U64_MAX:
        raise ValidationError(f"seed {cfg.seed} is not an unsigned 64-bit integer")
    if not cfg.default_speed >= 0:
        raise ValidationError("default speed must be non-negative")
    try:
        cfg.route
        cfg.plan
    except DegenerateRoute as exc:
        raise ValidationError(f"waypoints do not form a valid route: {exc}") from exc
    except OverlappingSegments as exc:
        raise ValidationError(str(exc)) from exc
    return cfg


# ---------------------------------------------------------------------------
# XML
# ---------------------------------------------------------------------------


def _num(x: float) -> str:
    s = f"{x:.6f}"
    return "0.000000" if s == "-0.000000" else s


def serialize_config(cfg: ScenarioConfig) -> str:
    root = ET.Element(
        "route",
        {
            "id": cfg.route_id,
            "difficulty": cfg.difficulty.value,
            "seed": str(cfg.seed),
            "default_speed": _num(cfg.default_speed),
            "weather": cfg.weather,
        },
    )
    wps = ET.SubElement(root, "waypoints")
    for x, y in cfg.waypoints:
        ET.SubElement(wps, "wp", {"x": _num(x), "y": _num(y)})
    for sg in sorted(cfg.speed_segments, key=lambda s: s.s_start):
        ET.SubElement(root, "speed", {"from": _num(sg.s_start), "to": _num(sg.s_end), "v": _num(sg.v)})
    for ob in sorted(cfg.obstacles, key=lambda o: o.s_start):
        ET.SubElement(root, "obstacle", {"from": _num(ob.s_start), "to": _num(ob.s_end)})
    for sc in cfg.scenarios:
        attrs = {
            "type": "OvertakeRoute",
            "behavior": sc.behavior.value,
            "trigger": _num(sc.trigger_progress),
            "speed": _num(sc.lead_speed),
            "distance": _num(sc.spawn_distance),
            "timeout": _num(sc.timeout),
        }
        if sc.frequency is not None:
            attrs["frequency"] = _num(sc.frequency)
        ET.SubElement(root, "scenario", attrs)
    ET.indent(root, space="  ")
    return '<?xml version="1.0" encoding="utf-8"?>\n' + ET.tostring(root, encoding="unicode") + "\n"


def config_digest(cfg: ScenarioConfig) -> str:
    return hashlib.sha256(serialize_config(cfg).encode("utf-8")).hexdigest()


def _attr(el, name, conv=float, default=None, required=True):
    raw = el.get(name)
    if raw is None:
        if required:
            raise SchemaError(f"<{el.tag}> is missing attribute '{name}'")
        return default
    try:
        return conv(raw)
    except ValueError as exc:
        raise ValidationError(f"<{el.tag} {name}={raw!r}>: {exc}") from exc


def parse_config(text) -> ScenarioConfig:
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    # ElementTree refuses str input carrying an encoding declaration
    try:
        root = ET.fromstring(text.encode("utf-8"))
    except ET.ParseError as exc:
        raise ParseError(f"malformed XML: {exc}") from exc

    if root.tag == "routes":
        routes = root.findall("route")
        if len(routes) != 1:
            raise SchemaError(f"expected exactly one <route>, found {len(routes)}")
        root = routes[0]
    if root.tag != "route":
        raise SchemaError(f"root element must be <route>, got <{root.tag}>")

    warnings = []
    route_id = _attr(root, "id", str)
    try:
        difficulty = Difficulty(_attr(root, "difficulty", str).lower())
    except ValueError as exc:
        raise ValidationError(str(exc)) from exc
    seed = _attr(root, "seed", int, default=0, required=False)
    default_speed = _attr(root, "default_speed", float, default=8.0, required=False)
    weather = _attr(root, "weather", str, default="ClearNoon", required=False)

    wps_el = root.find("waypoints")
    if wps_el is None:
        raise SchemaError("missing <waypoints>")
    waypoints = tuple((_attr(wp, "x"), _attr(wp, "y")) for wp in wps_el.findall("wp"))
    if not waypoints:
        raise SchemaError("<waypoints> holds no <wp> elements")

    segments, obstacles, scenarios = [], [], []
    for el in root:
        if el.tag == "waypoints":
            continue
        if el.tag == "speed":
            segments.append(SpeedSegment(_attr(el, "from"), _attr(el, "to"), _attr(el, "v")))
        elif el.tag == "obstacle":
            obstacles.append(ObstacleSpec(_attr(el, "from"), _attr(el, "to")))
        elif el.tag == "scenario":
            kind = el.get("type", "OvertakeRoute")
            if kind != "OvertakeRoute":
                warnings.append(f"ignored scenario of unknown type {kind!r}")
                continue
            try:
                behavior = Behavior(_attr(el, "behavior", str).lower())
            except ValueError as exc:
                raise ValidationError(str(exc)) from exc
            scenarios.append(
                OvertakeSpec(
                    trigger_progress=_attr(el, "trigger", default=0.0, required=False),
                    lead_speed=_attr(el, "speed"),
                    spawn_distance=_attr(el, "distance"),
                    behavior=behavior,
                    timeout=_attr(el, "timeout", default=90.0, required=False),
                    frequency=_attr(el, "frequency", default=None, required=False),
                )
            )
        else:
            warnings.append(f"ignored unknown element <{el.tag}>")
    for w in warnings:
        log.warning("%s: %s", route_id, w)

    cfg = ScenarioConfig(
        route_id=route_id,
        difficulty=difficulty,
        waypoints=waypoints,
        speed_segments=tuple(sorted(segments, key=lambda s: s.s_start)),
        scenarios=tuple(scenarios),
        obstacles=tuple(sorted(obstacles, key=lambda o: o.s_start)),
        default_speed=default_speed,
        seed=seed,
        weather=weather,
        warnings=tuple(warnings),
    )
    return validate(cfg)


def with_behavior(cfg: ScenarioConfig, behavior: Behavior) -> ScenarioConfig:
    """Copy of ``cfg`` with every scenario commanded to ``behavior``."""
    return replace(cfg, scenarios=tuple(replace(sc, behavior=behavior) for sc in cfg.scenarios))


# ---------------------------------------------------------------------------
# suite generation
# ---------------------------------------------------------------------------

_STEP = 2.0

# (name, pieces) with pieces as (length m, curvature 1/m); lengths are jittered per route
_LAYOUTS = {
    "rural_curving": [(150, 0.0), (200, 1 / 220), (200, -1 / 220), (180, 1 / 300), (330, 0.0)],
    "urban_left_turn": [(470, 0.0), (math.pi / 2 * 18, 1 / 18), (560, 0.0)],
    "rural_right_turn": [(450, 0.0), (math.pi / 2 * 24, -1 / 24), (570, 0.0)],
    "urban_straight": [(1060, 0.0)],
    "wide_street": [(380, 0.0), (200, 1 / 500), (200, -1 / 500), (280, 0.0)],
}

# four layouts per difficulty, after the evaluation-route table
_TEMPLATES = {
    Difficulty.EASY: [("rural_curving", None), ("urban_left_turn", None), ("urban_straight", None), ("wide_street", None)],
    Difficulty.MEDIUM: [("rural_curving", None), ("wide_street", None), ("rural_right_turn", None), ("urban_straight", None)],
    Difficulty.HARD: [
        ("wide_street", "accident"),
        ("wide_street", "construction"),
        ("rural_right_turn", "construction"),
        ("urban_left_turn", "accident"),
    ],
}
_OBSTACLE_LENGTH = {"accident": 8.0, "construction": 15.0}
_DIFF_CODE = {Difficulty.EASY: 1, Difficulty.MEDIUM: 2, Difficulty.HARD: 3}


def _quantize(a: np.ndarray) -> np.ndarray:
    # q / 1e6 is the double nearest to the decimal q * 1e-6, exactly what parsing its 6-decimal text yields
    return np.rint(a * 1e6) / 1e6


def _pieces(layout: str, jitter) -> tuple[np.ndarray, np.ndarray]:
    """Per-step arc length and curvature of a layout after length jitter."""
    ds_all, kappa_all = [], []
    for (length, kappa), j in zip(_LAYOUTS[layout], jitter):
        length = length * j
        n = max(1, int(round(length / _STEP)))
        ds_all.append(np.full(n, length / n))
        kappa_all.append(np.full(n, kappa))
    return np.concatenate(ds_all), np.concatenate(kappa_all)


def _chords(ds: np.ndarray, kappa: np.ndarray) -> np.ndarray:
    # chord of a constant-curvature arc: exact for both straights and arcs
    safe = np.where(kappa == 0.0, 1.0, kappa)
    return np.where(kappa == 0.0, ds, 2.0 * np.sin(0.5 * kappa * ds) / safe)


def _layout_points(draw: "RouteDraw") -> np.ndarray:
    ds, kappa = _pieces(draw.layout, draw.jitter)
    turn = kappa * ds
    theta = draw.heading + np.concatenate([[0.0], np.cumsum(turn)[:-1]]) + 0.5 * turn
    chord = _chords(ds, kappa)
    steps = np.stack([chord * np.cos(theta), chord * np.sin(theta)], axis=1)
    pts = np.asarray(draw.origin) + np.concatenate([[[0.0, 0.0]], np.cumsum(steps, axis=0)])
    return _quantize(pts)


def _speed_segments(rng, speeds, n_seg):
    cuts = np.sort(rng.uniform(0.15, 0.85, size=n_seg - 1))
    while n_seg > 1 and np.min(np.diff(np.concatenate([[0.0], cuts, [1.0]]))) < 0.12:
        cuts = np.sort(rng.uniform(0.15, 0.85, size=n_seg - 1))
    bounds = [0.0] + [round(float(c), 6) for c in cuts] + [1.0]
    values = []
    for _ in range(n_seg):
        choices = [v for v in speeds if not values or v != values[-1]]
        values.append(float(choices[rng.integers(len(choices))]))
    return tuple(SpeedSegment(bounds[i], bounds[i + 1], values[i]) for i in range(n_seg))


def _derive_seed(seed: int, difficulty: Difficulty, index: int) -> int:
    words = np.random.SeedSequence([seed & U64_MAX, _DIFF_CODE[difficulty], index]).generate_state(2, np.uint64)
    return int(words[0])


@dataclass(frozen=True)
class RouteDraw:
    """Every random choice behind one generated route, before any geometry is built."""

    difficulty: Difficulty
    index: int
    route_seed: int
    layout: str
    heading: float
    origin: tuple
    jitter: tuple
    segments: tuple
    obstacles: tuple
    scenarios: tuple
    weather: str

    @property
    def nominal_length(self) -> float:
        return float(np.sum(_chords(*_pieces(self.layout, self.jitter))))


def draw_route(difficulty: Difficulty, index: int, seed: int, speeds: Sequence[float] = DEFAULT_TARGET_SPEEDS) -> RouteDraw:
    """The random part of :func:`generate_config`; cheap enough to sample in bulk."""
    difficulty = Difficulty(difficulty)
    route_seed = _derive_seed(seed, difficulty, index)
    rng = np.random.default_rng(route_seed)
    layout, incident = _TEMPLATES[difficulty][index % 4]
    heading = float(rng.uniform(0.0, 2 * math.pi))
    origin = tuple(float(v) for v in rng.uniform(-500.0, 500.0, size=2))
    jitter = tuple(float(v) for v in rng.uniform(0.9, 1.1, size=len(_LAYOUTS[layout])))

    n_seg = int(rng.integers(3, 5)) if difficulty is Difficulty.EASY else int(rng.integers(2, 4))
    segments = _speed_segments(rng, tuple(speeds), n_seg)

    obstacles = ()
    scenarios = ()
    if difficulty is not Difficulty.EASY:
        if difficulty is Difficulty.HARD:
            length = float(np.sum(_chords(*_pieces(layout, jitter))))
            o_start = round(float(rng.uniform(0.07, 0.10)), 6)
            o_end = round(o_start + _OBSTACLE_LENGTH[incident] / length, 6)
            obstacles = (ObstacleSpec(o_start, o_end),)
            trigger = round(float(rng.uniform(0.20, 0.25)), 6)
        else:
            trigger = round(float(rng.uniform(0.12, 0.20)), 6)
        # the lead must stay slower than every target commanded after the trigger
        v_t = min(sg.v for sg in segments if sg.s_end > trigger)
        hi = v_t - LEAD_SPEED_MARGIN
        lead = min(round(float(rng.uniform(LEAD_SPEED_FLOOR, hi)), 6), hi)
        behavior = Behavior.OVERTAKE if rng.random() < 0.5 else Behavior.FOLLOW
        scenarios = (
            OvertakeSpec(
                trigger_progress=trigger,
                lead_speed=lead,
                spawn_distance=round(float(rng.uniform(30.0, 40.0)), 6),
                behavior=behavior,
                timeout=90.0,
            ),
        )
    weather = WEATHERS[int(rng.integers(len(WEATHERS)))]
    return RouteDraw(difficulty, index, route_seed, layout, heading, origin, jitter, segments, obstacles, scenarios, weather)


def generate_config(difficulty: Difficulty, index: int, seed: int, speeds: Sequence[float] = DEFAULT_TARGET_SPEEDS) -> ScenarioConfig:
    """The ``index``-th route of a suite; independent of the suite size."""
    d = draw_route(difficulty, index, seed, speeds)
    pts = _layout_points(d)
    cfg = ScenarioConfig(
        route_id=f"{d.difficulty.value}_{index:03d}",
        difficulty=d.difficulty,
        waypoints=tuple(map(tuple, pts.tolist())),
        speed_segments=d.segments,
        scenarios=d.scenarios,
        obstacles=d.obstacles,
        default_speed=8.0,
        seed=d.route_seed,
        weather=d.weather,
    )
    cfg.__dict__["route"] = build_route(pts)  # prime the cached property from the array we already have
    return validate(cfg)


def generate_suite(difficulty, count: int, seed: int, speeds: Sequence[float] = DEFAULT_TARGET_SPEEDS) -> list[ScenarioConfig]:
    if not isinstance(count, (int, np.integer)) or count < 1:
        raise InvalidCount(f"count must be a positive integer, got {count!r}")
    if min(speeds) - LEAD_SPEED_MARGIN <= LEAD_SPEED_FLOOR:
        raise ValidationError("every target speed must exceed lead floor + margin")
    return [generate_config(difficulty, i, seed, speeds) for i in range(int(count))]
