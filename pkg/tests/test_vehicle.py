import math

import pytest
from hypothesis import given, settings, strategies as st

from hmdp import lanechange as lc
from hmdp.vehicle import (
    BicycleState,
    ControlInput,
    TrackingGains,
    VehicleGeometry,
    integrate_bicycle,
    low_level_loop,
    track_reference,
    wrap_angle,
)

GEOM = VehicleGeometry()
GAINS = TrackingGains()
P = lc.LaneChangeParams()


def test_geometry_validation():
    with pytest.raises(ValueError):
        VehicleGeometry(l=0.0)
    with pytest.raises(ValueError):
        integrate_bicycle(BicycleState(0, 0, 0, 1), ControlInput(0, 0), GEOM, 0.0)


def test_straight_line_step():
    z = integrate_bicycle(BicycleState(0.0, 0.0, 0.0, 10.0), ControlInput(0.0, 0.0), GEOM, 0.1)
    assert z == BicycleState(1.0, 0.0, 0.0, 10.0)


def test_constant_acceleration_step():
    z = integrate_bicycle(BicycleState(0.0, 0.0, 0.0, 10.0), ControlInput(0.0, 2.0), GEOM, 0.1)
    assert z.v == pytest.approx(10.2, abs=1e-12)
    assert z.x == pytest.approx(1.01, abs=1e-12)


def test_full_circle_returns_to_start():
    delta, v, dt = 0.2, 5.0, 0.01
    radius = GEOM.l / math.tan(delta)
    period = 2 * math.pi * radius / v
    n = round(period / dt)
    dt = period / n
    z = BicycleState(0.0, 0.0, 0.0, v)
    for _ in range(n):
        z = integrate_bicycle(z, ControlInput(delta, 0.0), GEOM, dt)
    assert math.hypot(z.x, z.y) < 1e-3


def test_curvature_matches_analytic_circle():
    delta, v = 0.1, 10.0
    z = BicycleState(0.0, 0.0, 0.0, v)
    for _ in range(10):
        z = integrate_bicycle(z, ControlInput(delta, 0.0), GEOM, 0.1)
    assert z.theta == pytest.approx(v * math.tan(delta) / GEOM.l * 1.0, abs=1e-12)


@settings(max_examples=80, deadline=None)
@given(x=st.floats(-100, 100), y=st.floats(-5, 5), th=st.floats(-3.0, 3.0),
       v=st.floats(0, 40), a=st.floats(-6, 4))
def test_no_steer_keeps_heading(x, y, th, v, a):
    z = integrate_bicycle(BicycleState(x, y, th, v), ControlInput(0.0, a), GEOM, 0.1)
    assert z.theta == pytest.approx(th, abs=1e-15)
    if th == 0.0:
        assert z.y == y


@settings(max_examples=80, deadline=None)
@given(th=st.floats(-20, 20))
def test_wrap_angle_range(th):
    w = wrap_angle(th)
    assert -math.pi < w <= math.pi
    assert math.isclose(math.cos(w), math.cos(th), abs_tol=1e-9)


def test_rk4_convergence_order():
    z0 = BicycleState(0.0, 0.0, 0.1, 12.0)
    u = ControlInput(0.15, 1.0)

    def run(dt, n):
        z = z0
        for _ in range(n):
            z = integrate_bicycle(z, u, GEOM, dt)
        return z

    ref = run(0.4 / 64, 64)
    errs = [abs(run(0.4 / k, k).y - ref.y) for k in (1, 2)]
    # one-step local error ~ dt^5; halving dt means two steps of (dt/2)^5
    ratio = errs[0] / errs[1]
    assert 16 * 0.8 <= ratio <= 16 * 1.2 * 2.1


def test_track_reference_fixed_point():
    z = BicycleState(10.0, 0.0, 0.0, 20.0)
    assert track_reference(z, (16.0, 0.0, 20.0), GEOM, GAINS) == ControlInput(0.0, 0.0)


def test_track_reference_proportional_speed():
    g = TrackingGains(k_v=2.0)
    u = track_reference(BicycleState(0.0, 0.0, 0.0, 10.0), (5.0, 0.0, 11.0), GEOM, g)
    assert u.a == 2.0


def test_offset_decreases_monotonically():
    z = BicycleState(0.0, 0.5, 0.0, 20.0)
    prev = abs(z.y)
    for i in range(20):
        look = max(GAINS.lookahead_min, GAINS.lookahead_time * z.v)
        u = track_reference(z, (z.x + look, 0.0, 20.0), GEOM, GAINS)
        if i == 0:
            assert u.delta < 0
        z = integrate_bicycle(z, u, GEOM, 0.1)
        assert abs(z.y) < prev
        prev = abs(z.y)


@settings(max_examples=120, deadline=None)
@given(x=st.floats(-50, 50), y=st.floats(-10, 10), th=st.floats(-3.1, 3.1),
       v=st.floats(0, 40), xr=st.floats(-50, 50), yr=st.floats(-10, 10), vr=st.floats(0, 40))
def test_inputs_respect_saturation(x, y, th, v, xr, yr, vr):
    u = track_reference(BicycleState(x, y, th, v), (xr, yr, vr), GEOM, GAINS)
    assert abs(u.delta) <= GAINS.delta_max
    assert GAINS.a_min <= u.a <= GAINS.a_max


def test_low_level_runs_four_ticks():
    res = low_level_loop(BicycleState(0.0, 0.0, 0.0, 25.0), lambda t: 0.0, lambda t: 25.0,
                         P.T_h, P.T_l)
    assert len(res.samples) == 4
    assert res.z_end.x == pytest.approx(10.0)


def test_low_level_rest_stays_put():
    z0 = BicycleState(3.0, 1.0, 0.2, 0.0)
    res = low_level_loop(z0, lambda t: 1.0, lambda t: 0.0, P.T_h, P.T_l)
    assert res.z_end == z0


def test_low_level_rejects_incommensurate_periods():
    with pytest.raises(ValueError):
        low_level_loop(BicycleState(0, 0, 0, 1), lambda t: 0.0, lambda t: 1.0, 0.35, 0.1)


def test_full_quintic_tracking_error():
    def y_ref(t):
        return lc.lateral_reference(P, min(max(t, 0.0), P.t_qlc))
    z = BicycleState(0.0, 0.0, 0.0, 25.0)
    worst = 0.0
    for k in range(8):
        t0 = k * P.T_h
        res = low_level_loop(z, lambda tau, t0=t0: y_ref(t0 + tau), lambda tau: 25.0, P.T_h, P.T_l)
        for i, zi in enumerate(res.samples):
            worst = max(worst, abs(zi.y - y_ref(t0 + (i + 1) * P.T_l)))
        z = res.z_end
    assert worst < 0.2
    assert abs(z.y - P.y_qlc) < 0.05


def test_tracking_warning_flag():
    tight = TrackingGains(envelope=0.01)
    res = low_level_loop(BicycleState(0.0, 0.0, 0.0, 25.0), lambda t: 1.0, lambda t: 25.0,
                         P.T_h, P.T_l, gains=tight)
    assert res.warning and res.max_lateral_error > 0.01
