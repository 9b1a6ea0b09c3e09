"""Closed-loop scenario runner: decision layer every T_h, plant every T_l.

The solver only ever sees constant-velocity extrapolation of the
surrounding traffic; the plant vehicles follow their true acceleration
profiles. Ego longitudinal state is fed back from the bicycle plant while
the lateral maneuver bookkeeping stays in the decision model.
"""

from __future__ import annotations

import dataclasses
import math
import time
from dataclasses import dataclass, field
from typing import Optional

from . import lanechange as lc
from .core import HybridState, admissible_actions
from .scenario import ScenarioConfig
from .solver import (
    BaselineDivergenceError,
    InfeasibleError,
    TheoremViolationError,
    ValueRecord,
    check_lyapunov,
    shift_plan,
    solve_step,
)
from .vehicle import BicycleState, low_level_loop

TRACE_COLUMNS = ("t", "s", "a", "x_hv", "v_hv", "y_hv", "x_or", "x_ob", "v_ob", "x_og",
                 "gap_ob", "v_star", "feasible_count")


@dataclass(frozen=True)
class TraceRow:
    t: float
    s: int               # active maneuver code
    a: Optional[int]     # action code decided at t; None on the final row
    x_hv: float
    v_hv: float
    y_hv: float
    x_or: float
    x_ob: float
    v_ob: float
    x_og: float
    gap_ob: float
    v_star: Optional[float]  # None in rule mode
    feasible_count: int


@dataclass
class RunReport:
    mode: str
    timeline: list            # (t, action code, commanded maneuver code)
    min_gap_lane_change: Optional[float]
    goal_time: Optional[float]
    lyapunov_ok: Optional[bool]
    lyapunov_reason: str
    admissible_ok: bool
    shift_ok: Optional[bool]
    shift_failures: list      # decision times where the shifted plan failed
    lyapunov_failures: list   # decision times k where V(k+1)-V(k) > -J(k)
    tracking_warnings: list   # decision times with a low-level envelope breach
    max_consistency_error: float
    max_lateral_error: float
    runtime: float
    completed: bool = True
    error: str = ""

    @property
    def feasibility_ok(self):
        return self.admissible_ok and self.shift_ok is not False

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["timeline"] = [list(e) for e in self.timeline]
        d["feasibility_ok"] = self.feasibility_ok
        return d


@dataclass
class Trace:
    rows: list = field(default_factory=list)

    def __len__(self):
        return len(self.rows)

    def column(self, name):
        return [getattr(r, name) for r in self.rows]


class SimulationInfeasible(RuntimeError):
    def __init__(self, message, trace, report):
        super().__init__(message)
        self.trace = trace
        self.report = report


def _y_ref_function(p, s, x):
    direction, y_start, t0, dur = lc.lateral_plan(p, s, x)
    if direction is None:
        y = x[lc.Y_REF]
        return lambda tau: y

    def y_ref(tau):
        return lc.lateral_reference(p, min(max(t0 + tau, 0.0), dur), direction, y_start)
    return y_ref


def timeline_from_rows(rows) -> list:
    """(t, a, s') at every decision whose action differs from the previous one."""
    out = []
    prev = None
    for i, r in enumerate(rows):
        if r.a is None:
            continue
        if r.a != prev:
            s_next = rows[i + 1].s if i + 1 < len(rows) else None
            out.append((r.t, r.a, s_next))
        prev = r.a
    return out


def min_gap_lane_change(rows) -> Optional[float]:
    gaps = [r.gap_ob for r in rows if r.s == lc.Maneuver.QUICK_LANE_CHANGE]
    return min(gaps) if gaps else None


def value_records(rows, params) -> list:
    return [ValueRecord(i, r.v_star, lc.stage_cost_lane(params, r.s))
            for i, r in enumerate(rows) if r.v_star is not None]


def lyapunov_failures(records, tol) -> list:
    bad = []
    for i in range(len(records) - 1):
        if not check_lyapunov(records[i:i + 2], tol):
            bad.append(records[i].k)
    return bad


def _make_row(t, s, a, x, z, veh, v_star, count):
    by = {v.id: v for v in veh}
    return TraceRow(t, lc.state_code(s), None if a is None else lc.action_code(a),
                    z.x, z.v, z.y, by["Or"].x, by["Ob"].x, by["Ob"].v, by["Og"].x,
                    abs(z.x - by["Ob"].x), v_star, count)


def run_simulation(cfg: ScenarioConfig):
    """Run the closed loop; returns ``(trace, report)``.

    Raises SimulationInfeasible (carrying the partial trace) when the solver
    finds no feasible sequence at some tick.
    """
    p = cfg.params
    model = lc.build_model(p)
    baseline = lc.make_baseline(p)
    hmdp = cfg.mode == "hmdp"
    n_ticks = p.ticks_per_decision
    n_dec = cfg.decision_count
    started = time.perf_counter()

    lane_y = 0.0 if cfg.ego.lane == "original" else p.lane_width
    ego = lc.EgoState(cfg.ego.x, cfg.ego.v, lane_y, cfg.ego.lane)
    x = lc.ego_vector(ego)
    z = BicycleState(cfg.ego.x, lane_y, 0.0, cfg.ego.v)
    veh = [cfg.vehicle(vid) for vid in lc.VEHICLE_IDS]
    s = lc.Z1
    trace = Trace()
    prev_plan = None
    shift_failures, warnings = [], []
    worst_consistency = worst_lateral = 0.0
    admissible_ok = True
    goal_time = None

    def report(completed=True, error=""):
        rows = trace.rows
        recs = value_records(rows, p) if hmdp else []
        verdict = check_lyapunov(recs, cfg.solver.tolerance) if hmdp else None
        return RunReport(
            mode=cfg.mode,
            timeline=timeline_from_rows(rows),
            min_gap_lane_change=min_gap_lane_change(rows),
            goal_time=goal_time,
            lyapunov_ok=None if verdict is None else verdict.holds,
            lyapunov_reason="" if verdict is None else verdict.reason,
            admissible_ok=admissible_ok,
            shift_ok=(not shift_failures) if hmdp else None,
            shift_failures=shift_failures,
            lyapunov_failures=[rows[k].t for k in lyapunov_failures(recs, cfg.solver.tolerance)],
            tracking_warnings=warnings,
            max_consistency_error=worst_consistency,
            max_lateral_error=worst_lateral,
            runtime=time.perf_counter() - started,
            completed=completed,
            error=error,
        )

    for k in range(n_dec + 1):
        t = round(k * p.T_h, 9)
        xi = lc.environment_vector(veh, t, zero_accel=True)
        h = HybridState(s, x, xi, k)
        if goal_time is None and model.at_goal(s, x, xi):
            goal_time = t
        count = len(admissible_actions(model, h))
        admissible_ok = admissible_ok and count > 0
        last = k == n_dec
        v_star = None
        a = None
        if hmdp:
            try:
                plan = solve_step(model, baseline, h, cfg.solver)
            except InfeasibleError as exc:
                trace.rows.append(_make_row(t, s, None, x, z, veh, math.inf, count))
                raise SimulationInfeasible(f"t={t:.1f}: {exc}", trace,
                                           report(False, str(exc))) from exc
            if prev_plan is not None:
                try:
                    shift_plan(model, baseline, prev_plan, h, cfg.solver.rollout_cap)
                except (TheoremViolationError, BaselineDivergenceError):
                    shift_failures.append(t)
            prev_plan = plan
            v_star = plan.value
            if not last:
                a = plan.first_action
        elif not last:
            a = lc.baseline_index(p, s, x, xi)
        trace.rows.append(_make_row(t, s, a, x, z, veh, v_star, count))
        if last:
            break

        # low level over [t, t + T_h) with the active mode's references
        v0, acc = x[lc.V_HV], lc.mode_acceleration(p, s)
        res = low_level_loop(
            z, _y_ref_function(p, s, x),
            lambda tau: max(0.0, v0 + acc * (tau + p.T_l)),
            p.T_h, p.T_l, cfg.geometry, cfg.gains)
        for i in range(n_ticks):
            veh = [lc.surrounding_step(v, t + i * p.T_l, p.T_l) for v in veh]
        if res.warning:
            warnings.append(t)
        worst_lateral = max(worst_lateral, res.max_lateral_error)

        x_model = lc.ego_dynamics(p, s, x)
        worst_consistency = max(worst_consistency, abs(res.z_end.x - x_model[lc.X_HV]))
        z = res.z_end
        x = (z.x, z.v) + tuple(x_model[2:])
        s = model.transition[s][a]

    return trace, report()


@dataclass
class Comparison:
    hmdp: tuple   # (trace, report)
    rule: tuple

    def summary(self) -> dict:
        rh, rr = self.hmdp[1], self.rule[1]

        def diff(u, v):
            return None if u is None or v is None else u - v
        return {
            "min_gap_lane_change": {"hmdp": rh.min_gap_lane_change,
                                    "rule": rr.min_gap_lane_change,
                                    "delta": diff(rh.min_gap_lane_change,
                                                  rr.min_gap_lane_change)},
            "goal_time": {"hmdp": rh.goal_time, "rule": rr.goal_time,
                          "delta": diff(rh.goal_time, rr.goal_time)},
            "timeline": {"hmdp": [list(e) for e in rh.timeline],
                         "rule": [list(e) for e in rr.timeline]},
        }


def compare(cfg: ScenarioConfig) -> Comparison:
    """Run both decision modes on the same plant and traffic."""
    return Comparison(run_simulation(cfg.with_mode("hmdp")),
                      run_simulation(cfg.with_mode("rule")))


_VEHICLE_FIELDS = {"x0": "x", "y0": "y", "v0": "v"}


def override(cfg: ScenarioConfig, name: str, value) -> ScenarioConfig:
    """Copy of ``cfg`` with one named parameter replaced.

    Accepts LaneChangeParams / SolverConfig / TrackingGains field names,
    ``duration``, or ``<vehicle id>.<x0|y0|v0>``.
    """
    if "." in name:
        vid, attr = name.split(".", 1)
        if attr not in _VEHICLE_FIELDS:
            raise KeyError(name)
        veh = tuple(dataclasses.replace(v, **{_VEHICLE_FIELDS[attr]: float(value)})
                    if v.id == vid else v for v in cfg.vehicles)
        if veh == cfg.vehicles and vid not in lc.VEHICLE_IDS:
            raise KeyError(name)
        return dataclasses.replace(cfg, vehicles=veh)
    if name == "duration":
        return dataclasses.replace(cfg, duration=float(value))
    for attr in ("params", "solver", "gains", "geometry"):
        sub = getattr(cfg, attr)
        fields = {f.name: f for f in dataclasses.fields(sub)}
        if name in fields:
            if isinstance(getattr(sub, name), int):
                if float(value) != int(value):
                    raise ValueError(f"{name} must be an integer, got {value}")
                value = int(value)
            else:
                value = float(value)
            return dataclasses.replace(cfg, **{attr: dataclasses.replace(sub, **{name: value})})
    raise KeyError(name)


def sweep(cfg: ScenarioConfig, name: str, values) -> list:
    """``(value, report)`` for each override; infeasible runs keep their partial report."""
    out = []
    for v in values:
        try:
            _, rep = run_simulation(override(cfg, name, v))
        except SimulationInfeasible as exc:
            rep = exc.report
        out.append((v, rep))
    return out
