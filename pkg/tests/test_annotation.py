import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from speedbench.annotation import (
    PRESETS,
    AnnotationParams,
    extrapolate,
    lookahead_draws,
    preset,
    read_speed_trace,
    tendency_speed,
    tendency_speeds,
    virtual_target_speed,
)
from speedbench.errors import TraceTooShort


def test_tendency_examples():
    assert tendency_speed([2, 3, 4, 5, 4, 3], 0, 40) == 5
    assert tendency_speed([6, 5, 4, 5, 6], 0, 40) == 4
    assert all(tendency_speed([5.0] * 8, t, 40) == 5.0 for t in range(8))
    # last frame has no future: falls back to its own speed
    assert tendency_speed([1, 2, 3], 2, 40) == 3
    with pytest.raises(IndexError):
        tendency_speed([1, 2], 2, 40)


def test_tendency_window_is_truncated_by_horizon():
    v = [0, 1, 2, 3, 4, 5, 6]
    assert tendency_speed(v, 0, 2) == 2
    assert list(tendency_speeds(v, 2)) == [2, 3, 4, 5, 6, 6, 6]


traces = st.lists(st.floats(0, 30, allow_nan=False).map(lambda x: round(x, 2)), min_size=1, max_size=120)


@given(traces, st.integers(1, 50))
def test_tendency_vector_matches_scan(v, horizon):
    got = tendency_speeds(v, horizon)
    assert [float(x) for x in got] == [float(oracles.tendency(v, t, horizon)) for t in range(len(v))]


def test_extrapolation_examples():
    assert extrapolate(5.0, 5.2, 10, 1.0, 10) == pytest.approx(7.2, abs=1e-12)
    assert extrapolate(8.0, 5.0, 10, 3.0, 10) == 0.0


def test_presets_exact():
    long, short = preset("long"), preset("Short")
    assert (long.horizon, long.fps, long.t_max, long.max_extend) == (40, 10, 3.0, 10.0)
    assert (short.horizon, short.fps, short.t_max, short.max_extend) == (40, 10, 1.5, 3.0)
    assert long.t_min == short.t_min == 0.5
    assert set(PRESETS) == {"long", "short"}
    with pytest.raises(ValueError):
        preset("medium")


@pytest.mark.parametrize("kw", [dict(horizon=0), dict(t_min=2.0, t_max=1.0), dict(t_min=-0.1), dict(max_extend=0.0)])
def test_param_validation(kw):
    with pytest.raises(ValueError):
        AnnotationParams(**kw)


def test_too_short_and_negative():
    with pytest.raises(TraceTooShort):
        virtual_target_speed([3.0], preset("long"))
    with pytest.raises(ValueError):
        virtual_target_speed([3.0, -1.0], preset("long"))


def test_constant_trace_is_fixed_point():
    out = virtual_target_speed([7.5] * 30, preset("long", seed=3))
    assert np.all(out.v_virt == 7.5) and np.all(out.v_tend == 7.5)


def test_draws_stay_in_bounds_and_are_keyed():
    p = preset("long", seed=4)
    r = lookahead_draws(10_000, p)
    assert r.min() >= p.t_min and r.max() < p.t_max
    assert np.array_equal(r, lookahead_draws(10_000, p))
    assert not np.array_equal(r[:50], lookahead_draws(51, p, trace_index=1))
    # a shorter trace uses a prefix of the same stream
    assert np.array_equal(r[:99], lookahead_draws(100, p))


def _random_trace(rng):
    n = int(rng.integers(2, 300))
    kind = rng.integers(3)
    if kind == 0:
        v = rng.uniform(0, 20, n)
    elif kind == 1:
        v = np.clip(np.cumsum(rng.normal(0, 0.3, n)) + rng.uniform(0, 15), 0, None)
    else:
        v = np.round(np.abs(10 * np.sin(np.linspace(0, rng.uniform(1, 20), n))), 1)
    return v


def test_invariants_on_random_traces():
    rng = np.random.default_rng(77)
    for i in range(1000):
        v = _random_trace(rng)
        p = preset("long" if i % 2 else "short", seed=i)
        a = virtual_target_speed(v, p, trace_index=i)
        assert np.all(a.v_virt >= 0)
        assert np.all(np.abs(a.v_virt - a.v_tend) <= p.max_extend)
        assert a.v_virt[0] == a.v_tend[0]


@given(st.lists(st.floats(0, 25), min_size=3, max_size=80), st.integers(0, 2**32))
def test_trend_consistency(v, seed):
    a = virtual_target_speed(v, preset("long", seed))
    d_tend = np.diff(a.v_tend)
    dv = a.v_virt[1:] - a.v_tend[1:]
    # the floor at zero can only pull a falling extrapolation up to zero, never flip its sign
    assert np.all((dv == 0) | (np.sign(dv) == np.sign(d_tend)))


def test_no_leakage_beyond_horizon():
    rng = np.random.default_rng(5)
    p = preset("long", seed=9)
    F = p.horizon
    for _ in range(200):
        v = _random_trace(rng)
        if len(v) < F + 3:
            continue
        t = int(rng.integers(0, len(v) - F - 1))
        base = virtual_target_speed(v, p).v_virt[t]
        w = v.copy()
        w[t + F + 1:] = rng.uniform(0, 30, len(v) - t - F - 1)
        assert virtual_target_speed(w, p).v_virt[t] == base


def test_short_never_extends_further_than_long():
    rng = np.random.default_rng(6)
    for i in range(300):
        v = _random_trace(rng)
        lo = virtual_target_speed(v, preset("long", seed=i), i)
        sh = virtual_target_speed(v, preset("short", seed=i), i)
        assert np.all(np.abs(sh.v_virt - sh.v_tend) <= np.abs(lo.v_virt - lo.v_tend) + 1e-12)


def test_determinism_and_csv(tmp_path):
    v = np.linspace(0, 12, 60)
    a = virtual_target_speed(v, preset("long", seed=1)).to_csv()
    assert a == virtual_target_speed(v, preset("long", seed=1)).to_csv()
    assert a != virtual_target_speed(v, preset("long", seed=2)).to_csv()
    assert a.splitlines()[0] == "frame,v,v_tend,v_virt"
    f = tmp_path / "trace.csv"
    f.write_text("t,v\n0,1.5\n1,2.5\n")
    assert list(read_speed_trace(f)) == [1.5, 2.5]
    f.write_text("speed\n1\n")
    with pytest.raises(ValueError):
        read_speed_trace(f)
