"""Kinematic bicycle plant and a simple reference tracker.

The plant integrates

    x' = v cos(theta), y' = v sin(theta), theta' = v tan(delta) / l, v' = a

with classical RK4 at the low-level period. The tracker pairs a
proportional speed law with pure-pursuit steering toward a preview point on
the lateral reference.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple


class BicycleState(NamedTuple):
    x: float
    y: float
    theta: float
    v: float


class ControlInput(NamedTuple):
    delta: float
    a: float


@dataclass(frozen=True)
class VehicleGeometry:
    l: float = 2.7

    def __post_init__(self):
        if self.l <= 0:
            raise ValueError("wheelbase must be positive")


@dataclass(frozen=True)
class TrackingGains:
    # 1/T_l: the speed error closes within one low-level tick
    k_v: float = 10.0
    lookahead_time: float = 0.3
    lookahead_min: float = 4.0
    # 2.0 is classical pure pursuit (damping ~0.71 on a straight line);
    # 4.0 makes the linearised offset dynamics critically damped
    curvature_gain: float = 4.0
    delta_max: float = 0.5
    a_min: float = -6.0
    a_max: float = 4.0
    # |y - y_ref| beyond this raises a tracking warning
    envelope: float = 0.5


def wrap_angle(theta: float) -> float:
    """Map to (-pi, pi]."""
    if -math.pi < theta <= math.pi:
        return theta
    w = math.fmod(theta + math.pi, 2.0 * math.pi)
    if w <= 0.0:
        w += 2.0 * math.pi
    return w - math.pi


def _deriv(z, u, l):
    _, _, th, v = z
    return (v * math.cos(th), v * math.sin(th), v * math.tan(u.delta) / l, u.a)


def integrate_bicycle(z: BicycleState, u: ControlInput, geom: VehicleGeometry,
                      dt: float) -> BicycleState:
    """One RK4 step of the kinematic bicycle model; inputs held constant."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    l = geom.l
    k1 = _deriv(z, u, l)
    z2 = [z[i] + 0.5 * dt * k1[i] for i in range(4)]
    k2 = _deriv(z2, u, l)
    z3 = [z[i] + 0.5 * dt * k2[i] for i in range(4)]
    k3 = _deriv(z3, u, l)
    z4 = [z[i] + dt * k3[i] for i in range(4)]
    k4 = _deriv(z4, u, l)
    out = [z[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]) for i in range(4)]
    # exact no-op on the lateral pair when not steering
    if u.delta == 0.0 and z.theta == 0.0:
        out[1], out[2] = z.y, z.theta
    return BicycleState(out[0], out[1], wrap_angle(out[2]), max(0.0, out[3]))


def _clip(v, lo, hi):
    return lo if v < lo else hi if v > hi else v


def track_reference(z: BicycleState, ref, geom: VehicleGeometry,
                    gains: TrackingGains = TrackingGains()) -> ControlInput:
    """Control toward ``ref = (x_ref, y_ref, v_ref)``.

    ``(x_ref, y_ref)`` is the preview point on the path; steering is the
    pure-pursuit curvature toward it, both inputs saturated.
    """
    x_ref, y_ref, v_ref = ref
    a = _clip(gains.k_v * (v_ref - z.v), gains.a_min, gains.a_max)
    dx, dy = x_ref - z.x, y_ref - z.y
    dist = math.hypot(dx, dy)
    if dist < 1e-9:
        return ControlInput(0.0, a)
    alpha = wrap_angle(math.atan2(dy, dx) - z.theta)
    delta = math.atan2(gains.curvature_gain * geom.l * math.sin(alpha), dist)
    return ControlInput(_clip(delta, -gains.delta_max, gains.delta_max), a)


@dataclass
class LowLevelResult:
    z_end: BicycleState
    samples: list  # BicycleState after each tick
    max_lateral_error: float
    warning: bool

    @property
    def ego_summary(self):
        """(x_HV, v_HV, y_HV) reported back to the decision layer."""
        return self.z_end.x, self.z_end.v, self.z_end.y


def low_level_loop(z0: BicycleState, y_ref: Callable[[float], float],
                   v_ref: Callable[[float], float], T_h: float, T_l: float,
                   geom: VehicleGeometry = VehicleGeometry(),
                   gains: TrackingGains = TrackingGains()) -> LowLevelResult:
    """Run ``T_h / T_l`` tracking ticks over one decision period.

    ``y_ref(tau)`` and ``v_ref(tau)`` give the reference ``tau`` seconds after
    the start of the period; ``y_ref`` must accept ``tau`` beyond ``T_h`` for
    preview.
    """
    n = T_h / T_l
    if abs(n - round(n)) > 1e-9:
        raise ValueError("T_h must be an integer multiple of T_l")
    z = z0
    samples = []
    worst = 0.0
    for i in range(int(round(n))):
        tau = i * T_l
        v_target = v_ref(tau)
        look = max(gains.lookahead_min, gains.lookahead_time * max(z.v, 0.0))
        preview = tau + look / max(z.v, 1.0)
        u = track_reference(z, (z.x + look, y_ref(preview), v_target), geom, gains)
        if v_target == 0.0 and z.v == 0.0:
            u = ControlInput(0.0, 0.0)
        z = integrate_bicycle(z, u, geom, T_l)
        samples.append(z)
        worst = max(worst, abs(z.y - y_ref(tau + T_l)))
    return LowLevelResult(z, samples, worst, worst > gains.envelope)
