import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from speedbench.config import Behavior, Difficulty
from speedbench.errors import EmptyLog
from speedbench.metrics import (
    MetricConfig,
    ScoreReport,
    aggregate,
    auxiliary_scores,
    overtake_score,
    rollup_csv,
    speed_adherence,
)
from speedbench.route import SpeedSegment, build_route, build_speed_plan
from speedbench.sim import ScenarioOutcome, TrajectoryLog

ROUTE = build_route([(0.0, 0.0), (10.0, 0.0)])
FLAT10 = build_speed_plan(ROUTE, [SpeedSegment(0, 1, 10.0)], 10.0)


def make_log(xy, v, behavior=None, lead_speed=None, accel=None):
    n = len(xy)
    behavior = behavior if isinstance(behavior, list) else [behavior] * n
    lead_speed = lead_speed if isinstance(lead_speed, list) else [lead_speed] * n
    accel = accel if accel is not None else [0.0] * n
    frames = [
        {
            "frame": i, "t": i / 10, "x": float(xy[i][0]), "y": float(xy[i][1]), "heading": 0.0,
            "speed": float(v[i]), "accel": float(accel[i]), "lane_offset": 0.0,
            "lead_x": None if lead_speed[i] is None else 0.0, "lead_y": None if lead_speed[i] is None else 0.0,
            "lead_speed": lead_speed[i], "target_speed": None, "behavior": behavior[i],
            "cmd_accel": 0.0, "cmd_lane_rate": 0.0,
        }
        for i in range(n)
    ]
    return TrajectoryLog({"route_id": "x", "collisions": 0}, frames)


def test_two_step_hand_example():
    log = make_log([(0, 0), (1, 0), (2, 0)], [0.0, 10.0, 5.0])
    br = speed_adherence(log, ROUTE, FLAT10, MetricConfig(alpha=3.0))
    assert br.total == pytest.approx(oracles.TWO_STEP_SCORE, abs=1e-12)
    assert round(br.total, 2) == 61.16
    assert list(br.w) == [0.0, 1.0, 1.0]


def test_ten_percent_error_dynamic_range():
    log = make_log([(0, 0), (1, 0), (2, 0)], [9.0, 9.0, 9.0])
    assert speed_adherence(log, ROUTE, FLAT10).total == pytest.approx(oracles.TEN_PERCENT_ERROR_SCORE, abs=1e-9)


def test_identities():
    route = build_route([(0, 0), (50, 0), (50, 50)])
    plan = build_speed_plan(route, [SpeedSegment(0, 0.3, 4), SpeedSegment(0.3, 0.7, 12), SpeedSegment(0.7, 1, 0)], 8)
    s = np.linspace(0, 100, 301)
    xy = [route.pose_at(x)[:2] for x in s]
    v = plan.speed_at_arclength(s)
    assert speed_adherence(make_log(xy, v), route, plan).total == 100.0
    inert = make_log([(0, 0)] * 20, [0.0] * 20)
    assert speed_adherence(inert, route, plan).total == 0.0


def test_empty_log():
    with pytest.raises(EmptyLog):
        speed_adherence(make_log([(0, 0)], [1.0]), ROUTE, FLAT10)


def _random_case(rng):
    n_kp = int(rng.integers(2, 12))
    kp = np.cumsum(rng.uniform(1, 20, size=(n_kp, 2)), axis=0)
    route = build_route(kp)
    cuts = np.sort(rng.uniform(0.05, 0.95, int(rng.integers(0, 4))))
    b = [0.0, *cuts.tolist(), 1.0]
    plan = build_speed_plan(route, [SpeedSegment(x, y, float(rng.uniform(0, 15))) for x, y in zip(b, b[1:])], 5.0)
    n = int(rng.integers(2, 200))
    s = np.sort(rng.uniform(0, route.total_length, n))
    if rng.random() < 0.3:
        s[rng.integers(0, n, n // 4)] = s[0]
        s = np.sort(s)
    xy = np.array([route.pose_at(x, float(rng.normal(0, 0.3)))[:2] for x in s])
    v = np.abs(plan.speed_at_arclength(s) + rng.normal(0, 2, n))
    follow = rng.random(n) < 0.5
    lead = np.where(rng.random(n) < 0.5, rng.uniform(0, 10, n), np.nan)
    log = make_log(
        xy, v, ["follow" if f else "overtake" for f in follow], [None if math.isnan(x) else float(x) for x in lead]
    )
    return route, plan, log


def _oracle_total(route, plan, log, cfg):
    pts = route.keypoints.tolist()
    cum = oracles.cumulative(pts)
    xy = [(f["x"], f["y"]) for f in log.frames]
    v = [f["speed"] for f in log.frames]
    tgt = [oracles.speed_at(cum, list(plan.speeds), oracles.project(pts, q)) for q in xy]
    soft = None
    if cfg.softening == "full":
        soft = [
            f["behavior"] == "follow" and f["lead_speed"] is not None and f["lead_speed"] <= v[i] < tgt[i]
            for i, f in enumerate(log.frames)
        ]
    return oracles.adherence(xy, v, tgt, cfg.alpha, cfg.epsilon, soft)


def test_matches_resummation_oracle():
    rng = np.random.default_rng(12)
    for _ in range(200):
        route, plan, log = _random_case(rng)
        for cfg in (MetricConfig(), MetricConfig(alpha=1.7, epsilon=0.5, softening="off")):
            assert abs(speed_adherence(log, route, plan, cfg).total - _oracle_total(route, plan, log, cfg)) < 1e-9


def test_breakdown_consistency():
    rng = np.random.default_rng(4)
    route, plan, log = _random_case(rng)
    br = speed_adherence(log, route, plan)
    assert np.all((br.score > 0) & (br.score <= 1))
    assert 0 <= br.total <= 100
    assert math.isclose(np.dot(br.w, br.score) / br.w.sum(), br.total / 100, rel_tol=1e-12)
    assert len(br.frames) == len(log.frames) and set(br.frames[0]) >= {"s", "w", "e", "score", "softened"}


@given(st.integers(0, 2**31), st.lists(st.integers(0, 400), min_size=1, max_size=20))
def test_zero_displacement_frames_do_not_matter(seed, where):
    rng = np.random.default_rng(seed)
    route, plan, log = _random_case(rng)
    frames = list(log.frames)
    for k in sorted(where, reverse=True):
        k = k % len(frames)
        dup = dict(frames[k], speed=float(rng.uniform(0, 20)), behavior="overtake")
        frames.insert(k + 1, dup)
    # the inserted frame repeats a position, so it carries no weight; re-derive the next frame's weight from it
    longer = TrajectoryLog(log.meta, frames)
    assert speed_adherence(longer, route, plan).total == speed_adherence(log, route, plan).total


@given(st.integers(0, 2**31), st.floats(0.1, 10), st.floats(0.01, 5))
def test_strictly_decreasing_in_alpha(seed, a, da):
    route, plan, log = _random_case(np.random.default_rng(seed))
    lo = speed_adherence(log, route, plan, MetricConfig(alpha=a, softening="off"))
    hi = speed_adherence(log, route, plan, MetricConfig(alpha=a + da, softening="off"))
    imperfect = np.any((lo.w > 0) & (lo.e > 0))
    if imperfect:
        assert hi.total < lo.total
    else:
        assert hi.total == lo.total


def test_softening_never_decreases_score():
    rng = np.random.default_rng(8)
    for _ in range(100):
        route, plan, log = _random_case(rng)
        off = speed_adherence(log, route, plan, MetricConfig(softening="off")).total
        half = speed_adherence(log, route, plan, MetricConfig(softening="half")).total
        full = speed_adherence(log, route, plan, MetricConfig(softening="full")).total
        assert off <= half <= full


def test_softening_rule():
    # following a lead at 4 while the target is 10: fully softened
    xy = [(0, 0), (1, 0), (2, 0)]
    log = make_log(xy, [4.0, 4.0, 4.0], "follow", 4.0)
    assert speed_adherence(log, ROUTE, FLAT10).total == 100.0
    # same frames under overtake are not softened
    log = make_log(xy, [4.0, 4.0, 4.0], "overtake", 4.0)
    assert speed_adherence(log, ROUTE, FLAT10).total < 20
    # dawdling below the lead is not lead-constrained
    log = make_log(xy, [3.0, 3.0, 3.0], "follow", 4.0)
    assert speed_adherence(log, ROUTE, FLAT10).total < 20


def test_metric_config_validation():
    for kw in (dict(alpha=0), dict(epsilon=0), dict(softening="some")):
        with pytest.raises(ValueError):
            MetricConfig(**kw)


def O(ok, behavior=Behavior.OVERTAKE, triggered=True):
    if behavior is Behavior.OVERTAKE:
        return ScenarioOutcome(triggered, behavior, ego_finished_ahead=ok and triggered)
    return ScenarioOutcome(triggered, behavior, ego_ever_passed=not ok and triggered)


def test_overtake_score_examples():
    assert overtake_score([]) is None
    assert overtake_score([O(True), O(False), O(True, Behavior.FOLLOW), O(False, Behavior.FOLLOW)]) == 50.0
    assert overtake_score([O(True)] * 3) == 100.0
    assert overtake_score([O(True, triggered=False)]) == 0.0
    assert overtake_score([O(True, Behavior.FOLLOW, triggered=False)]) == 0.0
    assert overtake_score([ScenarioOutcome(True, Behavior.FOLLOW, collision=True)]) == 0.0


@given(st.lists(st.tuples(st.booleans(), st.booleans(), st.booleans()), min_size=1, max_size=12), st.randoms())
def test_overtake_score_grid_and_order(flags, rnd):
    outs = [O(ok, Behavior.OVERTAKE if ov else Behavior.FOLLOW, trig) for ok, ov, trig in flags]
    score = overtake_score(outs)
    n = len(outs)
    assert any(math.isclose(score, 100 * k / n) for k in range(n + 1))
    rnd.shuffle(outs)
    assert overtake_score(outs) == score


def test_auxiliary_scores():
    route = build_route([(0, 0), (100, 0)])
    plan = build_speed_plan(route, [SpeedSegment(0, 1, 10)], 10)
    xy = [(float(x), 0.0) for x in range(0, 81)]
    log = make_log(xy, [10.0] * 81)
    aux = auxiliary_scores(log, route, 1, plan=plan)
    assert aux["route_completion"] == pytest.approx(80.0)
    assert aux["driving_score"] == pytest.approx(48.0)
    assert aux["safety_penalty"] == 0.6
    assert aux["efficiency"] == pytest.approx(100.0)
    full = make_log([(float(x), 0.0) for x in range(0, 101)], [10.0] * 101)
    aux = auxiliary_scores(full, route, 0, plan=plan)
    assert aux["driving_score"] == aux["route_completion"] == 100.0
    inert = make_log([(0.0, 0.0)] * 10, [0.0] * 10)
    aux = auxiliary_scores(inert, route, 0, plan=plan)
    assert aux["route_completion"] == 0.0 and aux["efficiency"] == 0.0


def test_comfort_thresholds():
    route = build_route([(0, 0), (100, 0)])
    xy = [(float(x), 0.0) for x in range(5)]
    # jerk from 0 to 1 in one frame is 10 m/s^3: frames 1 and 4 fail, 0 and 2 pass, 3 exceeds accel
    log = make_log(xy, [5.0] * 5, accel=[0.0, 1.0, 1.0, 5.0, 5.0])
    assert auxiliary_scores(log, route, 0)["comfort"] == pytest.approx(100 * 2 / 5)


def report(d, sa, ot=None, comp=100.0, coll=0):
    return ScoreReport("r", d, sa, ot, comp, 0.6**coll, comp * 0.6**coll, 100.0, 100.0, coll, comp >= 100 and coll == 0)


def test_aggregate_echo_and_easy_only():
    reps = [report("easy", 90.0), report("medium", 80.0, 100.0), report("hard", 70.0, 0.0, comp=50.0, coll=1)]
    roll = aggregate(reps)
    assert roll["E"]["speed_adherence"] == 90.0 and roll["M"]["speed_adherence"] == 80.0
    assert roll["H"]["driving_score"] == 30.0 and roll["H"]["success_rate"] == 0.0
    assert roll["E"]["overtake"] is None and roll["A"]["overtake"] == 50.0
    easy = aggregate([report("easy", 90.0), report("easy", 70.0)])
    assert easy["A"]["overtake"] is None and easy["E"]["speed_adherence"] == 80.0
    assert easy["M"]["speed_adherence"] is None
    with pytest.raises(ValueError):
        aggregate([])


def test_aggregate_48_against_flat_mean():
    rng = np.random.default_rng(0)
    reps = [report(d, float(rng.uniform(0, 100)), None if d == "easy" else float(rng.choice([0, 100]))) for d in ["easy", "medium", "hard"] for _ in range(16)]
    roll = aggregate(reps)
    assert roll["A"]["speed_adherence"] == pytest.approx(sum(r.speed_adherence for r in reps) / 48, abs=1e-12)
    ot = [r.overtake for r in reps if r.overtake is not None]
    assert roll["A"]["overtake"] == pytest.approx(sum(ot) / 32, abs=1e-12)
    assert roll["A"]["routes"] == 48


def test_rollup_csv_layout():
    roll = aggregate([report("easy", 90.0), report("medium", 80.0, 100.0)])
    header, row = rollup_csv(roll, "expert").splitlines()
    cols = header.split(",")
    assert cols[:5] == ["label", "speed_adherence_A", "speed_adherence_E", "speed_adherence_M", "speed_adherence_H"]
    cells = dict(zip(cols, row.split(",")))
    assert cells["overtake_E"] == "-" and cells["speed_adherence_A"] == "85.000000"
