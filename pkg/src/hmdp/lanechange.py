"""Autonomous lane change as a hybrid MDP.

Five maneuver modes (Cruise, Braking, Quick lane change, Acceleration,
Return) driven by six actions. The ego vehicle follows a point-mass
longitudinal model whose acceleration is set by the mode and a quintic
lateral path while changing lanes or returning. Three surrounding vehicles
are tracked: ``Or`` ahead on the original lane, ``Ob`` behind and ``Og``
ahead on the target lane.

Continuous state layout (indices below)::

    x_hv, v_hv, y_ref, t_ref, lane, y_start, lat_mode, x_prev

``y_ref`` is the lateral reference the low level tracks, ``y_start`` the
offset at which the current lateral maneuver began, ``lat_mode`` which
maneuver ``t_ref`` refers to and ``x_prev`` the ego position at the previous
decision (used to evaluate the gap rule at decision time).

Environment layout: ``(x, y, v, a)`` for Or, Ob, Og in that order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import IntEnum
from typing import Sequence

from .core import HmdpModel


class Maneuver(IntEnum):
    CRUISE = 1
    BRAKING = 2
    QUICK_LANE_CHANGE = 3
    ACCELERATION = 4
    RETURN = 5

    @property
    def index(self) -> int:
        return self.value - 1


class ManeuverAction(IntEnum):
    SPEED_UP = 6
    WAIT = 7
    INITIATE = 8
    RECOVER = 9
    ABANDON = 10
    MAINTAIN = 11

    @property
    def index(self) -> int:
        return self.value - 6


def state_code(index: int) -> int:
    return index + 1


def action_code(index: int) -> int:
    return index + 6


Z1, Z2, Z3, Z4, Z5 = (m.index for m in Maneuver)
SPEED_UP, WAIT, INITIATE, RECOVER, ABANDON, MAINTAIN = (a.index for a in ManeuverAction)

# x vector layout
X_HV, V_HV, Y_REF, T_REF, LANE, Y_START, LAT_MODE, X_PREV = range(8)
X_DIM = 8
# lateral maneuver tags
LAT_NONE, LAT_CHANGE, LAT_RETURN = 0.0, 1.0, 2.0

VEHICLE_IDS = ("Or", "Ob", "Og")
OR, OB, OG = 0, 4, 8  # offsets into the environment vector
XI_DIM = 12

_CENTER_EPS = 1e-9

# None marks an undefined edge: kept as a self-loop but never admissible.
_TABLE = {
    Maneuver.CRUISE: {
        ManeuverAction.SPEED_UP: Maneuver.ACCELERATION,
        ManeuverAction.WAIT: Maneuver.BRAKING,
        ManeuverAction.INITIATE: Maneuver.QUICK_LANE_CHANGE,
        ManeuverAction.RECOVER: Maneuver.CRUISE,
        ManeuverAction.ABANDON: None,
        ManeuverAction.MAINTAIN: Maneuver.CRUISE,
    },
    Maneuver.BRAKING: {
        ManeuverAction.SPEED_UP: Maneuver.ACCELERATION,
        ManeuverAction.WAIT: Maneuver.BRAKING,
        ManeuverAction.INITIATE: Maneuver.QUICK_LANE_CHANGE,
        ManeuverAction.RECOVER: Maneuver.CRUISE,
        ManeuverAction.ABANDON: None,
        ManeuverAction.MAINTAIN: Maneuver.BRAKING,
    },
    Maneuver.QUICK_LANE_CHANGE: {
        ManeuverAction.SPEED_UP: Maneuver.ACCELERATION,
        ManeuverAction.WAIT: None,
        ManeuverAction.INITIATE: None,
        ManeuverAction.RECOVER: Maneuver.CRUISE,
        ManeuverAction.ABANDON: Maneuver.RETURN,
        ManeuverAction.MAINTAIN: Maneuver.QUICK_LANE_CHANGE,
    },
    Maneuver.ACCELERATION: {
        ManeuverAction.SPEED_UP: Maneuver.ACCELERATION,
        ManeuverAction.WAIT: None,
        ManeuverAction.INITIATE: Maneuver.QUICK_LANE_CHANGE,
        ManeuverAction.RECOVER: Maneuver.CRUISE,
        ManeuverAction.ABANDON: None,
        ManeuverAction.MAINTAIN: Maneuver.ACCELERATION,
    },
    Maneuver.RETURN: {
        ManeuverAction.SPEED_UP: None,
        ManeuverAction.WAIT: Maneuver.BRAKING,
        ManeuverAction.INITIATE: Maneuver.QUICK_LANE_CHANGE,
        ManeuverAction.RECOVER: Maneuver.CRUISE,
        ManeuverAction.ABANDON: None,
        ManeuverAction.MAINTAIN: Maneuver.RETURN,
    },
}


def transition_table():
    """Return ``(table, disabled)`` in index form; undefined edges self-loop."""
    table = []
    disabled = set()
    for m in Maneuver:
        row = []
        for act in ManeuverAction:
            nxt = _TABLE[m][act]
            if nxt is None:
                row.append(m.index)
                disabled.add((m.index, act.index))
            else:
                row.append(nxt.index)
        table.append(tuple(row))
    return tuple(table), frozenset(disabled)


class ParameterError(ValueError):
    pass


@dataclass(frozen=True)
class LaneChangeParams:
    costs: tuple = (0.0, 3.0, 2.0, 10.0, 5.0)
    d_safe: float = 15.0
    de: float = -4.0
    ac: float = 4.0
    t_qlc: float = 2.0
    y_qlc: float = 3.8
    lane_width: float = 3.8
    vehicle_width: float = 2.5
    T_h: float = 0.4
    T_l: float = 0.1
    N_l: int = 3
    # slow leader within this distance makes a lane change pending
    trigger_distance: float = 250.0
    v_desired: float = 25.0

    def __post_init__(self):
        c = tuple(float(v) for v in self.costs)
        object.__setattr__(self, "costs", c)
        self.validate()

    def validate(self) -> None:
        if len(self.costs) != 5:
            raise ParameterError("costs must list c1..c5")
        c1, c2, c3, c4, c5 = self.costs
        if not (c1 < c3 < c2 < c5 < c4):
            raise ParameterError(f"costs must satisfy c1<c3<c2<c5<c4, got {self.costs}")
        if c1 != 0 or any(v < 0 for v in self.costs):
            raise ParameterError("c1 must be 0 and all costs non-negative")
        if not self.de < 0 < self.ac:
            raise ParameterError("need de < 0 < ac")
        if self.t_qlc <= 0 or self.y_qlc <= 0 or self.lane_width <= 0:
            raise ParameterError("t_qlc, y_qlc and lane_width must be positive")
        if self.d_safe < 0:
            raise ParameterError("d_safe must be non-negative")
        if self.T_h <= 0 or self.T_l <= 0:
            raise ParameterError("sampling times must be positive")
        ratio = self.T_h / self.T_l
        if abs(ratio - round(ratio)) > 1e-9:
            raise ParameterError("T_h must be an integer multiple of T_l")

    @property
    def ticks_per_decision(self) -> int:
        return int(round(self.T_h / self.T_l))


# ---------------------------------------------------------------- value types

@dataclass(frozen=True)
class EgoState:
    x: float
    v: float
    y: float = 0.0
    lane: str = "original"
    t_ref: float = 0.0


@dataclass(frozen=True)
class SurroundingVehicle:
    id: str
    x: float
    y: float
    v: float
    accel_profile: tuple = ()  # ((t_start, a), ...) sorted by t_start

    def accel_at(self, t: float) -> float:
        a = 0.0
        for t0, acc in self.accel_profile:
            if t0 <= t + 1e-9:
                a = acc
            else:
                break
        return a


# ------------------------------------------------------------------ functions

def stage_cost_lane(params: LaneChangeParams, s: int) -> float:
    """Cost of maneuver code ``s`` (1..5); independent of the action."""
    if not 1 <= s <= 5:
        raise ValueError(f"maneuver code {s} outside 1..5")
    return params.costs[s - 1]


def mode_acceleration(params: LaneChangeParams, s_index: int) -> float:
    if s_index == Z2:
        return params.de
    if s_index == Z4:
        return params.ac
    return 0.0


def ego_longitudinal_step(ego: EgoState, s: int, params: LaneChangeParams) -> EgoState:
    a = mode_acceleration(params, s - 1)
    return replace(ego, x=ego.x + ego.v * params.T_h,
                   v=max(0.0, ego.v + a * params.T_h))


def quintic(tau: float) -> float:
    return tau * tau * tau * (10.0 - 15.0 * tau + 6.0 * tau * tau)


def quintic_rate(tau: float) -> float:
    return 30.0 * tau * tau * (1.0 - tau) ** 2


def quintic_accel(tau: float) -> float:
    return 60.0 * tau * (1.0 - tau) * (1.0 - 2.0 * tau)


def maneuver_duration(params: LaneChangeParams, direction: str, y_start: float) -> float:
    """Duration scaled by the lateral distance still to cover."""
    if direction == "change":
        remaining = params.y_qlc - y_start
    elif direction == "return":
        remaining = y_start
    else:
        raise ValueError(f"unknown direction {direction!r}")
    return params.t_qlc * max(0.0, remaining) / params.y_qlc


def lateral_reference(params: LaneChangeParams, t_ref: float, direction: str = "change",
                      y_start: float = 0.0) -> float:
    """Lateral position ``t_ref`` seconds into a change or return maneuver."""
    dur = maneuver_duration(params, direction, y_start)
    if t_ref < -1e-12 or t_ref > dur + 1e-12:
        raise ValueError(f"t_ref={t_ref} outside [0, {dur}]")
    target = params.y_qlc if direction == "change" else 0.0
    if dur <= 0.0 or t_ref >= dur:
        return target
    return y_start + (target - y_start) * quintic(max(0.0, t_ref) / dur)


def surrounding_step(v: SurroundingVehicle, t: float, dt: float) -> SurroundingVehicle:
    """Double-integrator step with the profile acceleration at time ``t``."""
    a = v.accel_at(t)
    v1 = v.v + a * dt
    if v1 < 0.0:
        # stops inside the step
        tau = -v.v / a
        return replace(v, x=v.x + v.v * tau + 0.5 * a * tau * tau, v=0.0)
    return replace(v, x=v.x + v.v * dt + 0.5 * a * dt * dt, v=v1)


def predict_environment(vehicles: Sequence[SurroundingVehicle], horizon: int, dt: float):
    """Constant-velocity extrapolation: list over steps 1..horizon of
    ``{id: (x, v)}``."""
    out = []
    for i in range(1, horizon + 1):
        out.append({veh.id: (veh.x + veh.v * dt * i, veh.v) for veh in vehicles})
    return out


def _on_original(params: LaneChangeParams, y: float) -> bool:
    return y < 0.5 * params.lane_width


def safety_admissible(ego: EgoState, vehicles, s_next: int, params: LaneChangeParams) -> bool:
    """Pointwise safety rules on a single configuration.

    ``vehicles`` maps id -> SurroundingVehicle (or anything with ``.x``).
    """
    if ego.lane == "original":
        if vehicles["Or"].x - ego.x < params.d_safe:
            return False
    if s_next == Maneuver.QUICK_LANE_CHANGE:
        for vid in ("Ob", "Og"):
            if abs(ego.x - vehicles[vid].x) <= params.d_safe:
                return False
    return True


# --------------------------------------------------------- vector-level model

def _lateral_step(p: LaneChangeParams, s: int, x):
    y, t_ref, y_start, lat = x[Y_REF], x[T_REF], x[Y_START], x[LAT_MODE]
    if s == Z3 or s == Z5:
        tag, direction = (LAT_CHANGE, "change") if s == Z3 else (LAT_RETURN, "return")
        if lat != tag:
            y_start, t_ref, lat = y, 0.0, tag
        dur = maneuver_duration(p, direction, y_start)
        t_ref = min(t_ref + p.T_h, dur)
        y = lateral_reference(p, t_ref, direction, y_start)
        return y, t_ref, y_start, lat
    return y, 0.0, y, LAT_NONE


def lateral_plan(p: LaneChangeParams, s: int, x):
    """``(direction, y_start, t_ref0, duration)`` for the step taken in mode
    index ``s`` from ``x``; direction is None when no lateral maneuver runs."""
    if s == Z3 or s == Z5:
        tag, direction = (LAT_CHANGE, "change") if s == Z3 else (LAT_RETURN, "return")
        if x[LAT_MODE] != tag:
            y_start, t0 = x[Y_REF], 0.0
        else:
            y_start, t0 = x[Y_START], x[T_REF]
        return direction, y_start, t0, maneuver_duration(p, direction, y_start)
    return None, x[Y_REF], 0.0, 0.0


def ego_dynamics(p: LaneChangeParams, s: int, x, xi=None):
    a = mode_acceleration(p, s)
    y, t_ref, y_start, lat = _lateral_step(p, s, x)
    lane = 0.0 if _on_original(p, y) else 1.0
    return (x[X_HV] + x[V_HV] * p.T_h, max(0.0, x[V_HV] + a * p.T_h),
            y, t_ref, lane, y_start, lat, x[X_HV])


def env_dynamics(p: LaneChangeParams, xi, x=None):
    out = []
    dt = p.T_h
    for off in (OR, OB, OG):
        xj, yj, vj, aj = xi[off:off + 4]
        v1 = vj + aj * dt
        if v1 < 0.0:
            tau = -vj / aj
            out += [xj + vj * tau + 0.5 * aj * tau * tau, yj, 0.0, aj]
        else:
            out += [xj + vj * dt + 0.5 * aj * dt * dt, yj, v1, aj]
    return tuple(out)


def _at_center(p: LaneChangeParams, y: float) -> bool:
    return abs(y) <= _CENTER_EPS or abs(y - p.y_qlc) <= _CENTER_EPS


def constrained(p: LaneChangeParams, s: int, x, xi) -> bool:
    """Membership of the successor (s, x, xi) in the safe set."""
    if s != Z3 and s != Z5 and not _at_center(p, x[Y_REF]):
        return False
    x_hv = x[X_HV]
    if x[LANE] == 0.0 and xi[OR] - x_hv < p.d_safe:
        return False
    if s == Z3:
        dt = p.T_h
        x_prev = x[X_PREV]
        for off in (OB, OG):
            xj, _, vj, aj = xi[off:off + 4]
            if abs(x_hv - xj) <= p.d_safe:
                return False
            # same rule at decision time, back-projected through the step
            vj0 = vj - aj * dt
            xj0 = xj - vj0 * dt - 0.5 * aj * dt * dt
            if abs(x_prev - xj0) <= p.d_safe:
                return False
    return True


def leader_pending(p: LaneChangeParams, x, xi) -> bool:
    if x[LANE] != 0.0:
        return False
    gap = xi[OR] - x[X_HV]
    return 0.0 <= gap <= p.trigger_distance and xi[OR + 2] < p.v_desired


def settled(p: LaneChangeParams, s: int, x, xi) -> bool:
    return s == Z1 and not leader_pending(p, x, xi)


def _clear_to_change(p, s, x, xi) -> bool:
    """Initiating now keeps every step of the predicted change admissible."""
    x1, xi1 = ego_dynamics(p, s, x), env_dynamics(p, xi)
    if not constrained(p, Z3, x1, xi1):
        return False
    steps = int(math.ceil(maneuver_duration(p, "change", x1[Y_REF]) / p.T_h - 1e-9))
    for _ in range(steps):
        x1, xi1 = ego_dynamics(p, Z3, x1), env_dynamics(p, xi1, x1)
        if not constrained(p, Z3, x1, xi1):
            return False
    return True


def _cruise_safe(p, s, x, xi) -> bool:
    """Not braking yet is safe: one step in mode ``s``, one in cruise (the
    mode switch only acts a step later), then braking to a stop all keep the
    front gap on the original lane."""
    x1, xi1 = x, xi
    modes = [s, Z1]
    limit = int(math.ceil(x[V_HV] / (abs(p.de) * p.T_h))) + 1
    modes += [Z2] * limit
    for mode in modes:
        x1, xi1 = ego_dynamics(p, mode, x1), env_dynamics(p, xi1, x1)
        if x1[LANE] != 0.0:
            return True
        if xi1[OR] - x1[X_HV] < p.d_safe:
            return False
        if mode == Z2 and x1[V_HV] == 0.0:
            break
    return True


def baseline_index(p: LaneChangeParams, s: int, x, xi) -> int:
    """Rule-based policy in index form (never abandons a started change)."""
    if s == Z1:
        if not leader_pending(p, x, xi):
            return MAINTAIN
        if _clear_to_change(p, s, x, xi):
            return INITIATE
        return MAINTAIN if _cruise_safe(p, s, x, xi) else WAIT
    if s == Z2:
        if _clear_to_change(p, s, x, xi):
            return INITIATE
        return WAIT
    if s == Z3:
        y1, t1, ys, _ = _lateral_step(p, s, x)
        return RECOVER if t1 >= maneuver_duration(p, "change", ys) else MAINTAIN
    if s == Z4:
        return RECOVER if x[V_HV] >= p.v_desired else SPEED_UP
    # Return
    y1, t1, ys, _ = _lateral_step(p, s, x)
    if t1 >= maneuver_duration(p, "return", ys):
        return RECOVER if _cruise_safe(p, s, x, xi) else WAIT
    return MAINTAIN


def baseline_policy(ego: EgoState, vehicles, s: int, params: LaneChangeParams) -> int:
    """Baseline action code for maneuver code ``s`` at a pointwise configuration."""
    x = ego_vector(ego)
    xi = environment_vector([vehicles[v] for v in VEHICLE_IDS], zero_accel=True)
    return action_code(baseline_index(params, s - 1, x, xi))


def make_baseline(p: LaneChangeParams):
    def policy(s, x, xi):
        return baseline_index(p, s, x, xi)
    return policy


def ego_vector(ego: EgoState, x_prev: float | None = None):
    lane = 0.0 if ego.lane == "original" else 1.0
    return (float(ego.x), float(ego.v), float(ego.y), float(ego.t_ref), lane, float(ego.y),
            LAT_NONE, float(ego.x if x_prev is None else x_prev))


def environment_vector(vehicles: Sequence[SurroundingVehicle], t: float = 0.0,
                       zero_accel: bool = True):
    """Pack Or, Ob, Og; with ``zero_accel`` the solver sees constant velocity."""
    by_id = {v.id: v for v in vehicles}
    out = []
    for vid in VEHICLE_IDS:
        v = by_id[vid]
        out += [float(v.x), float(v.y), float(v.v), 0.0 if zero_accel else v.accel_at(t)]
    return tuple(out)


def build_model(params: LaneChangeParams) -> HmdpModel:
    table, disabled = transition_table()
    p = params
    dyn = [(lambda s: (lambda x, xi: ego_dynamics(p, s, x, xi)))(s) for s in range(5)]
    costs = p.costs
    model = HmdpModel(
        state_count=5,
        action_count=6,
        transition=table,
        mode_dynamics=dyn,
        env_dynamics=lambda xi, x: env_dynamics(p, xi, x),
        stage_cost=lambda s, a: costs[s],
        constrained_set=lambda s, x, xi: constrained(p, s, x, xi),
        goal=lambda s: s == Z1,
        x_dim=X_DIM,
        xi_dim=XI_DIM,
        settled=lambda s, x, xi: settled(p, s, x, xi),
        disabled=disabled,
        name="lane-change",
    )
    model.validate_costs()
    return model
