"""Vehicle plant: PI law, AEB trigger and ramp, actuator lag, outcomes."""

import math

import numpy as np
import pytest

from accel_eval.plant import (
    ACC,
    AEB,
    AvConfig,
    SimState,
    acc_command,
    aeb_threshold,
    classify_events,
    instantaneous_ttc,
    simulate,
    step,
)
from accel_eval.scenario import ScenarioSample, derive_kinematics

from test_scenario import make_model
from accel_eval.scenario import ProposalParams, scenario_stream, stream_namespace


def mk(v_l, r_inv, ttc_inv):
    rdot, v0, r0 = derive_kinematics(v_l, r_inv, ttc_inv)
    return ScenarioSample(v_l, r_inv, ttc_inv, r0, rdot, v0, 1.0)


# Controllers forced inert: zero gains, AEB threshold zero never trips.
OFF = AvConfig(kp_acc=0.0, ki_acc=0.0, ttc_aeb_schedule=((5.0, 0.0), (40.0, 0.0)))


def test_config_validation():
    with pytest.raises(ValueError):
        AvConfig(ts=0.0)
    with pytest.raises(ValueError):
        AvConfig(tau_av=0.0)
    with pytest.raises(ValueError):
        AvConfig(t_lc_max=-1.0)
    with pytest.raises(ValueError):
        AvConfig(r_aeb=1.0)
    with pytest.raises(ValueError):
        AvConfig(error_sign=0.5)
    with pytest.raises(ValueError):
        AvConfig(ttc_aeb_schedule=())
    with pytest.raises(ValueError):
        AvConfig(ttc_aeb_schedule=((15.0, 1.0), (5.0, 1.3)))
    with pytest.raises(ValueError):
        AvConfig(ttc_aeb_schedule=((5.0, -1.0),))


def test_aeb_threshold_schedule():
    cfg = AvConfig()
    assert aeb_threshold(0.0, cfg) == 1.0
    assert aeb_threshold(5.0, cfg) == 1.0
    assert aeb_threshold(10.0, cfg) == pytest.approx(1.15, rel=1e-12)
    assert aeb_threshold(25.0, cfg) == 1.5
    assert aeb_threshold(100.0, cfg) == 1.5


def test_instantaneous_ttc():
    assert instantaneous_ttc(10.0, 5.0, 5.0) == math.inf
    assert instantaneous_ttc(10.0, 4.0, 5.0) == math.inf
    assert instantaneous_ttc(10.0, 7.0, 5.0) == 5.0


def test_pi_single_step_formula():
    cfg = AvConfig()
    a_d, err = acc_command(2.5, 0.1, -0.3, cfg)
    expect_err = -1.0 * (2.5 - 2.0)
    expect = -0.3 + cfg.kp_acc * (expect_err - 0.1) + cfg.ki_acc * (expect_err + 0.1) * cfg.ts / 2.0
    assert err == expect_err
    assert a_d == max(-5.0, min(5.0, expect))


def test_pi_zero_error_holds_command():
    cfg = AvConfig()
    a_d, err = acc_command(2.0, 0.0, 0.0, cfg)
    assert a_d == 0.0 and err == 0.0


def test_pi_saturation_both_sides():
    cfg = AvConfig()
    # A huge gap demands acceleration; a tiny gap demands braking.
    assert acc_command(5.0, 0.0, 0.0, cfg)[0] == 5.0
    assert acc_command(0.5, 0.0, 0.0, cfg)[0] == -5.0


def test_aeb_ramp_first_step():
    cfg = AvConfig()
    st = SimState(t=0.0, r=2.0, v=14.0, a=0.0, a_cmd=0.0, mode=AEB,
                  prev_err=0.0, a_d_prev=0.0)
    nxt = step(st, mk(10.0, 0.5, 2.0), cfg)
    assert nxt.a_cmd == cfg.r_aeb * cfg.ts == -1.6
    assert nxt.mode == AEB


def test_aeb_ramp_reaches_floor_and_latches():
    cfg = AvConfig()
    trace = simulate(mk(10.0, 0.5, 2.0), cfg, record=True)
    assert all(st.mode == AEB for st in trace.states)
    cmds = [st.a_cmd for st in trace.states]
    assert min(cmds) == -cfg.a_aeb
    for prev, cur in zip(cmds, cmds[1:]):
        if cur > -cfg.a_aeb:
            assert cur - prev == pytest.approx(cfg.r_aeb * cfg.ts, abs=1e-12)
        else:
            assert cur == -cfg.a_aeb


def test_mode_latches_after_trigger():
    # Starts in ACC (TTC above threshold), transitions once, never back.
    cfg = AvConfig()
    trace = simulate(mk(30.0, 1.0 / 15.5, 10.0 / 15.5), cfg, record=True)
    modes = [st.mode for st in trace.states]
    assert modes[0] == ACC
    assert AEB in modes
    flips = sum(1 for a, b in zip(modes, modes[1:]) if a != b)
    assert flips == 1


def test_initial_state_can_start_in_aeb():
    # TTC0 = 1 s is below every threshold at this speed.
    trace = simulate(mk(10.0, 0.25, 1.0), AvConfig(), record=True)
    assert trace.states[0].mode == AEB


def test_actuator_lag_closed_form():
    # Constant command c through a first-order lag from rest:
    # a_n = c * (1 - (1 - ts/tau)^n).
    cfg = AvConfig(tau_av=1.0, a_aeb=10.0, r_aeb=-1000.0,
                   ttc_aeb_schedule=((5.0, 1e9), (40.0, 1e9)))
    trace = simulate(mk(10.0, 0.25, 0.5), cfg, record=True)
    lam = cfg.ts / cfg.tau_av
    for n, st in enumerate(trace.states):
        if n == 0:
            continue
        assert st.a == pytest.approx(-10.0 * (1.0 - (1.0 - lam) ** n), rel=1e-12)


def test_disabled_controllers_crash_closed_form():
    # 4 m gap closing at 2 m/s with inert controllers: crash at 2.0 s.
    trace = simulate(mk(10.0, 0.25, 0.5), OFF)
    assert trace.outcome == "crash"
    assert abs(trace.t_end - 2.0) <= OFF.ts
    assert trace.delta_v == 2.0
    assert trace.distance_m == 24.0  # 20 periods at 12 m/s
    rec = classify_events(trace, OFF)
    assert rec.crash and rec.conflict and rec.delta_v == 2.0


def test_crash_implies_conflict():
    trace = simulate(mk(10.0, 0.5, 5.0), AvConfig())
    assert trace.outcome == "crash"
    rec = classify_events(trace, AvConfig())
    assert rec.conflict
    assert rec.delta_v is not None and rec.delta_v > 0.0


def test_no_event_far_and_not_closing():
    trace = simulate(mk(20.0, 0.01, 0.0), AvConfig())
    assert trace.outcome == "none"
    assert trace.delta_v is None
    assert trace.min_range > AvConfig().r_conflict


def test_speed_never_negative():
    # Full braking from low speed pins v at zero instead of reversing.
    cfg = AvConfig()
    trace = simulate(mk(0.5, 0.2, 1.5), cfg, record=True)
    assert all(st.v >= 0.0 for st in trace.states)
    assert any(st.v == 0.0 for st in trace.states)


def test_headway_regulation_converges():
    cfg = AvConfig(t_lc_max=60.0)
    trace = simulate(mk(20.0, 0.02, 0.0), cfg)
    assert trace.outcome == "none"
    headway = trace.final.r / trace.final.v
    assert headway == pytest.approx(cfg.t_hw_desired, rel=0.05)
    assert trace.final.v == pytest.approx(20.0, rel=0.01)


def test_horizon_step_count():
    trace = simulate(mk(20.0, 0.01, 0.0), AvConfig(), record=True)
    assert len(trace.states) == 81  # initial state + 8 s / 0.1 s steps
    assert trace.t_end == pytest.approx(8.0, abs=1e-9)


def test_fast_and_recorded_paths_agree_exactly():
    model = make_model()
    cfg = AvConfig()
    ns = stream_namespace("test/pathpair")
    cases = []
    for i in range(150):
        b = model.bins[i % 3]
        cases.append(model.sample_scenario(b, scenario_stream(21, i, ns)))
    for i in range(150, 300):
        b = model.bins[i % 3]
        prop = ProposalParams(-0.05, -0.01, b.name)
        cases.append(model.sample_scenario(b, scenario_stream(21, i, ns), prop))
    for s in cases:
        fast = simulate(s, cfg)
        slow = simulate(s, cfg, record=True)
        assert fast.final == slow.final
        assert fast.outcome == slow.outcome
        assert fast.t_end == slow.t_end
        assert fast.min_range == slow.min_range
        assert fast.delta_v == slow.delta_v
        assert fast.distance_m == slow.distance_m


def test_distance_is_rectangle_rule_on_period_start_speeds():
    trace = simulate(mk(20.0, 0.01, 0.0), AvConfig(), record=True)
    sums = sum(st.v for st in trace.states[:-1])
    assert trace.distance_m == sums * 0.1
