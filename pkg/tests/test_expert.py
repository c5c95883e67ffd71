import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from speedbench.config import Behavior, Difficulty, OvertakeSpec, ScenarioConfig, generate_config
from speedbench.expert import (
    ConstantSpeedPolicy,
    ExpertParams,
    ExpertPolicy,
    InertPolicy,
    LaneKeepingPolicy,
    ReplayPolicy,
    idm_accel,
    idm_equilibrium_gap,
    load_params,
    make_policy,
)
from speedbench.route import SpeedSegment
from speedbench.sim import A_LIMIT, R_LIMIT, init_world, run_episode, step

P = ExpertParams()
LONG_STRAIGHT = tuple((float(x), 0.0) for x in range(0, 2001, 50))


def lane(v, scenarios=()):
    diff = Difficulty.MEDIUM if scenarios else Difficulty.EASY
    return ScenarioConfig("lane", diff, LONG_STRAIGHT, (SpeedSegment(0, 1, v),), tuple(scenarios), default_speed=v)


def test_free_road_equilibrium():
    assert idm_accel(8.0, 8.0, P) == 0.0
    w = init_world(lane(8.0))
    w = replace(w, ego=replace(w.ego, speed=8.0))
    acc, rate = ExpertPolicy().act(w)
    assert abs(acc) < 0.05 and rate == 0.0


def test_follow_equilibrium_gap():
    # with the free-road term at the same target, the steady gap carries the 1/sqrt(1 - (v/v0)^4) factor
    gap = idm_equilibrium_gap(4.0, 8.0, P)
    assert gap == pytest.approx((P.s0 + 4.0 * P.T_headway) / math.sqrt(1 - (4 / 8) ** 4))
    assert abs(idm_accel(4.0, 8.0, P, gap, 4.0)) < 1e-12
    # far below the desired speed the equilibrium reduces to s0 + v * T
    assert abs(idm_accel(4.0, 1e6, P, P.s0 + 4.0 * P.T_headway, 4.0)) < 0.05


def test_params_validation_and_file(tmp_path):
    with pytest.raises(ValueError):
        ExpertParams(a_max=0)
    with pytest.raises(ValueError):
        ExpertParams(delta_exp=0.5)
    f = tmp_path / "p.txt"
    f.write_text("# tuned\ns0 = 3.5\nT_headway=1.0  # shorter\n")
    p = load_params(f)
    assert p.s0 == 3.5 and p.T_headway == 1.0 and p.a_max == 3.0
    f.write_text("bogus=1\n")
    with pytest.raises(ValueError):
        load_params(f)


@settings(max_examples=12)
@given(st.floats(2.0, 15.0))
def test_speed_convergence(target):
    res = run_episode(lane(target), ExpertPolicy(), max_time=15.0)
    assert abs(res.log.speeds[-1] - target) < 0.1


@settings(max_examples=10)
@given(st.floats(0.05, 0.95), st.sampled_from([6.0, 8.0, 12.0]))
def test_follow_safety(frac, target):
    lead_v = frac * target
    cfg = lane(target, [OvertakeSpec(0.0, lead_v, 30.0, Behavior.FOLLOW, timeout=40.0)])
    res = run_episode(cfg, ExpertPolicy(), max_time=40.0)
    log = res.log
    lead = np.array([[np.nan if f["lead_x"] is None else f["lead_x"]] for f in log.frames])[:, 0]
    ego_x = log.positions[:, 0]
    has = ~np.isnan(lead)
    gap = lead[has] - ego_x[has] - 4.5
    assert gap.min() >= 0.5 * P.s0
    (o,) = res.outcomes
    assert not o.ego_ever_passed and not o.collision and o.success


def test_responsiveness_on_easy_template():
    base = generate_config(Difficulty.EASY, 2, 5)
    means = []
    for v in (6.0, 10.0):
        cfg = replace(base, speed_segments=(SpeedSegment(0.0, 1.0, v),))
        means.append(run_episode(cfg, ExpertPolicy()).log.speeds.mean())
    assert means[1] - means[0] > 2.0


def test_overtake_on_medium_template():
    cfg = generate_config(Difficulty.MEDIUM, 0, 7)
    cfg = replace(cfg, scenarios=tuple(replace(s, behavior=Behavior.OVERTAKE) for s in cfg.scenarios))
    res = run_episode(cfg, ExpertPolicy())
    assert res.outcomes[0].ego_finished_ahead and res.collisions == 0


def test_obstacle_forces_lane_change_even_under_follow():
    cfg = generate_config(Difficulty.HARD, 0, 7)
    cfg = replace(cfg, scenarios=tuple(replace(s, behavior=Behavior.FOLLOW) for s in cfg.scenarios))
    res = run_episode(cfg, ExpertPolicy())
    assert res.collisions == 0 and res.end_reason == "route_completed"
    assert res.log.column("lane_offset").max() > 2.0


@settings(max_examples=60)
@given(
    v=st.floats(0, 20),
    off=st.floats(-3.5, 3.5),
    target=st.floats(0, 20),
    gap=st.floats(-2, 80),
    lead_v=st.floats(0.1, 10),
    behavior=st.sampled_from(list(Behavior)),
)
def test_commands_respect_limits(v, off, target, gap, lead_v, behavior):
    cfg = lane(8.0, [OvertakeSpec(0.0, lead_v, 30.0, behavior)])
    w = step(init_world(cfg), (0.0, 0.0))
    w = replace(w, ego=replace(w.ego, speed=v, lane_offset=off), lead=replace(w.lead, s=w.ego.s + 4.5 + gap))
    pol = ExpertPolicy()
    for _ in range(3):
        acc, rate = pol.decide(w, target, behavior)
        assert abs(acc) <= A_LIMIT and abs(rate) <= R_LIMIT


def test_make_policy_specs():
    assert isinstance(make_policy("expert"), ExpertPolicy)
    assert isinstance(make_policy("inert"), InertPolicy)
    assert isinstance(make_policy("nolane"), LaneKeepingPolicy)
    c = make_policy("constant:6.5")
    assert isinstance(c, ConstantSpeedPolicy) and c.speed == 6.5
    with pytest.raises(ValueError):
        make_policy("replay")
    with pytest.raises(ValueError):
        make_policy("telepathy")


def test_replay_reproduces_log():
    cfg = generate_config(Difficulty.HARD, 3, 2)
    original = run_episode(cfg, ExpertPolicy()).log
    again = run_episode(cfg, ReplayPolicy(original)).log
    assert np.array_equal(again.positions, original.positions)
    assert again.meta["outcomes"] == original.meta["outcomes"]
