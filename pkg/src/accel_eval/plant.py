"""Longitudinal model of the evaluated vehicle during a cut-in event.

The vehicle runs a velocity-form PI controller regulating time headway
(ACC).  A latching automatic emergency brake (AEB) takes over when the
instantaneous time-to-collision drops below a speed-dependent threshold;
once triggered it never hands back within the event.  Both controllers
command acceleration through a first-order actuator lag, integrated
explicitly at a fixed control period.

The lead vehicle holds its speed for the whole event, so only the
following vehicle's state evolves.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .scenario import ScenarioSample

__all__ = [
    "ACC",
    "AEB",
    "AvConfig",
    "SimState",
    "SimTrace",
    "EventRecord",
    "acc_command",
    "aeb_threshold",
    "instantaneous_ttc",
    "step",
    "simulate",
    "classify_events",
]

ACC = "acc"
AEB = "aeb"

_V_HEADWAY_EPS = 1e-6  # m/s, keeps time headway finite at standstill


@dataclass(frozen=True)
class AvConfig:
    """Controller and plant parameters.

    Defaults are the production-tuned set used throughout; the AEB
    trigger schedule is a plausible placeholder (threshold in seconds at
    reference speeds in m/s) and should be overridden when the real
    curve is available.
    """

    t_hw_desired: float = 2.0  # s, ACC time-headway setpoint
    a_acc_max: float = 5.0  # m/s^2, ACC command saturation (+/-)
    kp_acc: float = -38.6  # proportional gain on headway error
    ki_acc: float = -1.35  # integral gain on headway error
    a_aeb: float = 10.0  # m/s^2, AEB deceleration magnitude
    r_aeb: float = -16.0  # m/s^3, AEB command ramp rate
    tau_av: float = 0.0796  # s, actuator first-order lag
    ts: float = 0.1  # s, control period
    t_lc_max: float = 8.0  # s, event horizon
    ttc_aeb_schedule: tuple[tuple[float, float], ...] = (
        (5.0, 1.0),
        (15.0, 1.3),
        (25.0, 1.5),
        (40.0, 1.5),
    )
    r_conflict: float = 9.144  # m, proximity threshold (30 ft)
    error_sign: float = -1.0  # +1 uses raw headway error; -1 flips it

    def __post_init__(self):
        if not self.ts > 0:
            raise ValueError(f"ts must be > 0, got {self.ts}")
        if not self.tau_av > 0:
            raise ValueError(f"tau_av must be > 0, got {self.tau_av}")
        if not self.t_lc_max > 0:
            raise ValueError(f"t_lc_max must be > 0, got {self.t_lc_max}")
        if not self.a_acc_max >= 0:
            raise ValueError(f"a_acc_max must be >= 0, got {self.a_acc_max}")
        if not self.a_aeb >= 0:
            raise ValueError(f"a_aeb must be >= 0, got {self.a_aeb}")
        if not self.r_aeb <= 0:
            raise ValueError(f"r_aeb must be <= 0, got {self.r_aeb}")
        if not self.r_conflict >= 0:
            raise ValueError(f"r_conflict must be >= 0, got {self.r_conflict}")
        if self.error_sign not in (-1.0, 1.0):
            raise ValueError(f"error_sign must be -1 or +1, got {self.error_sign}")
        if not self.ttc_aeb_schedule:
            raise ValueError("ttc_aeb_schedule must not be empty")
        speeds = [v for v, _ in self.ttc_aeb_schedule]
        if any(b >= a for a, b in zip(speeds[1:], speeds)):
            raise ValueError("ttc_aeb_schedule speeds must be strictly increasing")
        if any(t < 0 for _, t in self.ttc_aeb_schedule):
            raise ValueError("ttc_aeb_schedule thresholds must be >= 0")


@dataclass(frozen=True, slots=True)
class SimState:
    """Following-vehicle state at one control tick."""

    t: float  # s
    r: float  # m, range to lead
    v: float  # m/s
    a: float  # m/s^2, realized acceleration
    a_cmd: float  # m/s^2, commanded acceleration
    mode: str  # ACC or AEB
    prev_err: float  # last headway error seen by the PI
    a_d_prev: float  # last ACC command (PI memory)


@dataclass(frozen=True)
class SimTrace:
    """Outcome of one simulated event."""

    states: tuple[SimState, ...]  # empty unless recording was requested
    final: SimState
    outcome: str  # "none", "conflict" or "crash"
    t_end: float  # s
    min_range: float  # m, over the whole trajectory
    delta_v: float | None  # m/s, closing speed at impact; None without a crash
    distance_m: float  # m traveled by the following vehicle


@dataclass(frozen=True)
class EventRecord:
    conflict: bool
    crash: bool
    delta_v: float | None


def acc_command(t_hw: float, prev_err: float, a_d_prev: float, cfg: AvConfig) -> tuple[float, float]:
    """One velocity-form PI update; returns (saturated command, new error)."""
    err = cfg.error_sign * (t_hw - cfg.t_hw_desired)
    a_d = (
        a_d_prev
        + cfg.kp_acc * (err - prev_err)
        + cfg.ki_acc * (err + prev_err) * cfg.ts / 2.0
    )
    a_d = min(cfg.a_acc_max, max(-cfg.a_acc_max, a_d))
    return a_d, err


def aeb_threshold(v: float, cfg: AvConfig) -> float:
    """TTC trigger threshold at speed ``v``, piecewise linear, clamped at the ends."""
    sched = cfg.ttc_aeb_schedule
    if v <= sched[0][0]:
        return sched[0][1]
    if v >= sched[-1][0]:
        return sched[-1][1]
    for (v0, t0), (v1, t1) in zip(sched, sched[1:]):
        if v <= v1:
            return t0 + (v - v0) * (t1 - t0) / (v1 - v0)
    return sched[-1][1]


def instantaneous_ttc(r: float, v: float, v_l: float) -> float:
    """Range over closing speed; infinite when not closing."""
    if v <= v_l:
        return math.inf
    return r / (v - v_l)


def step(state: SimState, scenario: ScenarioSample, cfg: AvConfig) -> SimState:
    """Advance one control period.

    Order matters: mode latch, command, actuator lag, then kinematics.
    The range update uses the speed from the start of the period, so a
    crash during the period is attributed to that period's closing
    speed.
    """
    mode = state.mode
    if mode == ACC and instantaneous_ttc(state.r, state.v, scenario.v_l) < aeb_threshold(
        state.v, cfg
    ):
        mode = AEB

    if mode == ACC:
        t_hw = state.r / max(state.v, _V_HEADWAY_EPS)
        a_cmd, err = acc_command(t_hw, state.prev_err, state.a_d_prev, cfg)
        prev_err = err
        a_d_prev = a_cmd
    else:
        a_cmd = max(-cfg.a_aeb, state.a_cmd + cfg.r_aeb * cfg.ts)
        prev_err = state.prev_err
        a_d_prev = state.a_d_prev

    a = state.a + (cfg.ts / cfg.tau_av) * (a_cmd - state.a)
    v = max(0.0, state.v + a * cfg.ts)
    r = state.r + (scenario.v_l - state.v) * cfg.ts
    return SimState(
        t=state.t + cfg.ts,
        r=r,
        v=v,
        a=a,
        a_cmd=a_cmd,
        mode=mode,
        prev_err=prev_err,
        a_d_prev=a_d_prev,
    )


def _initial_state(scenario: ScenarioSample, cfg: AvConfig) -> SimState:
    ttc0 = instantaneous_ttc(scenario.r0, scenario.v0, scenario.v_l)
    mode = AEB if ttc0 < aeb_threshold(scenario.v0, cfg) else ACC
    return SimState(
        t=0.0, r=scenario.r0, v=scenario.v0, a=0.0, a_cmd=0.0,
        mode=mode, prev_err=0.0, a_d_prev=0.0,
    )


def simulate(scenario: ScenarioSample, cfg: AvConfig, record: bool = False) -> SimTrace:
    """Run one event to crash or to the horizon.

    Distance uses the rectangle rule on the speed at each period start,
    which is also the integration scheme of the kinematics.  The
    unrecorded path inlines :func:`step` on local floats (it is the hot
    loop of every estimator); the recorded path drives :func:`step`
    itself, and the two are held to exact agreement by tests.
    """
    if record:
        return _simulate_recorded(scenario, cfg)

    v_l = scenario.v_l
    ts = cfg.ts
    lag = ts / cfg.tau_av
    n_steps = round(cfg.t_lc_max / ts)

    state = _initial_state(scenario, cfg)
    t = 0.0
    r = state.r
    v = state.v
    a = 0.0
    a_cmd = 0.0
    aeb = state.mode == AEB
    prev_err = 0.0
    a_d_prev = 0.0
    min_range = r
    sum_v = 0.0
    delta_v = None
    for _ in range(n_steps):
        if not aeb and v > v_l and r / (v - v_l) < aeb_threshold(v, cfg):
            aeb = True
        if aeb:
            a_cmd = max(-cfg.a_aeb, a_cmd + cfg.r_aeb * ts)
        else:
            t_hw = r / max(v, _V_HEADWAY_EPS)
            err = cfg.error_sign * (t_hw - cfg.t_hw_desired)
            a_d = (
                a_d_prev
                + cfg.kp_acc * (err - prev_err)
                + cfg.ki_acc * (err + prev_err) * ts / 2.0
            )
            a_cmd = min(cfg.a_acc_max, max(-cfg.a_acc_max, a_d))
            prev_err = err
            a_d_prev = a_cmd
        a = a + lag * (a_cmd - a)
        v_before = v
        v = max(0.0, v + a * ts)
        r = r + (v_l - v_before) * ts
        t = t + ts
        sum_v += v_before
        if r < min_range:
            min_range = r
        if r <= 0.0:
            delta_v = v_before - v_l
            break
    final = SimState(
        t=t, r=r, v=v, a=a, a_cmd=a_cmd, mode=AEB if aeb else ACC,
        prev_err=prev_err, a_d_prev=a_d_prev,
    )
    if r <= 0.0:
        outcome = "crash"
    elif min_range < cfg.r_conflict:
        outcome = "conflict"
    else:
        outcome = "none"
    return SimTrace(
        states=(),
        final=final,
        outcome=outcome,
        t_end=t,
        min_range=min_range,
        delta_v=delta_v,
        distance_m=sum_v * cfg.ts,
    )


def _simulate_recorded(scenario: ScenarioSample, cfg: AvConfig) -> SimTrace:
    state = _initial_state(scenario, cfg)
    states = [state]
    min_range = state.r
    sum_v = 0.0
    delta_v = None
    n_steps = round(cfg.t_lc_max / cfg.ts)
    for _ in range(n_steps):
        v_before = state.v
        state = step(state, scenario, cfg)
        sum_v += v_before
        states.append(state)
        if state.r < min_range:
            min_range = state.r
        if state.r <= 0.0:
            delta_v = v_before - scenario.v_l
            break
    if state.r <= 0.0:
        outcome = "crash"
    elif min_range < cfg.r_conflict:
        outcome = "conflict"
    else:
        outcome = "none"
    return SimTrace(
        states=tuple(states),
        final=state,
        outcome=outcome,
        t_end=state.t,
        min_range=min_range,
        delta_v=delta_v,
        distance_m=sum_v * cfg.ts,
    )


def classify_events(trace: SimTrace, cfg: AvConfig) -> EventRecord:
    """Conflict and crash flags recomputed from the trace geometry."""
    crash = trace.final.r <= 0.0
    conflict = trace.min_range < cfg.r_conflict
    return EventRecord(conflict=conflict, crash=crash, delta_v=trace.delta_v)
