import dataclasses
import math

import pytest
from hypothesis import given, settings, strategies as st

from hmdp import lanechange as lc
from hmdp.outputs import (
    emit_outputs,
    plot_series,
    read_plot_data,
    read_trace_csv,
    replay_monitors,
    write_trace_csv,
)
from hmdp.runner import (
    TRACE_COLUMNS,
    SimulationInfeasible,
    Trace,
    TraceRow,
    compare,
    override,
    run_simulation,
    sweep,
    timeline_from_rows,
)
from hmdp.scenario import default_scenario

CFG = default_scenario()


@pytest.fixture(scope="module")
def hmdp_run():
    return run_simulation(CFG)


@pytest.fixture(scope="module")
def rule_run():
    return run_simulation(CFG.with_mode("rule"))


def test_row_count_and_times(hmdp_run):
    trace, _ = hmdp_run
    assert len(trace) == int(CFG.duration / CFG.params.T_h) + 1 == 28
    ts = trace.column("t")
    assert all(b > a for a, b in zip(ts, ts[1:]))
    assert all(abs(b - a - 0.4) < 1e-9 for a, b in zip(ts, ts[1:]))
    assert trace.rows[-1].a is None
    assert all(r.a is not None for r in trace.rows[:-1])


def test_codes_in_range(hmdp_run, rule_run):
    for trace, _ in (hmdp_run, rule_run):
        assert all(1 <= r.s <= 5 for r in trace.rows)
        assert all(6 <= r.a <= 11 for r in trace.rows if r.a is not None)


def test_single_decision_row():
    trace, _ = run_simulation(dataclasses.replace(CFG, duration=0.4))
    assert [r.a is not None for r in trace.rows] == [True, False]


def test_hmdp_timeline_has_initiate_abandon_initiate(hmdp_run):
    _, rep = hmdp_run
    acts = [a for _, a, _ in rep.timeline]
    i1 = acts.index(lc.ManeuverAction.INITIATE)
    ab = acts.index(lc.ManeuverAction.ABANDON, i1)
    acts.index(lc.ManeuverAction.INITIATE, ab)


def test_rule_continues_change_and_gap_collapses(rule_run):
    trace, rep = rule_run
    acts = [a for _, a, _ in rep.timeline]
    assert lc.ManeuverAction.ABANDON not in acts
    assert rep.min_gap_lane_change < CFG.params.d_safe


def test_timeline_consistency(hmdp_run):
    trace, rep = hmdp_run
    rows = trace.rows
    times = {t for t, _, _ in rep.timeline}
    for prev, cur in zip(rows, rows[1:]):
        if cur.a is not None and cur.a != prev.a:
            assert cur.t in times
    for t, a, s_next in rep.timeline:
        i = [r.t for r in rows].index(t)
        assert rows[i].a == a and rows[i + 1].s == s_next


def test_gap_column(hmdp_run):
    trace, _ = hmdp_run
    for r in trace.rows:
        assert r.gap_ob == abs(r.x_hv - r.x_ob)


def test_high_low_consistency(hmdp_run, rule_run):
    for _, rep in (hmdp_run, rule_run):
        assert rep.max_consistency_error < 1.0
        assert rep.tracking_warnings == []


def test_determinism(tmp_path, hmdp_run):
    again, _ = run_simulation(CFG)
    assert again.rows == hmdp_run[0].rows
    a = write_trace_csv(hmdp_run[0], tmp_path / "a.csv").read_bytes()
    b = write_trace_csv(again, tmp_path / "b.csv").read_bytes()
    assert a == b


def test_csv_round_trip(tmp_path, hmdp_run, rule_run):
    for trace, _ in (hmdp_run, rule_run):
        path = write_trace_csv(trace, tmp_path / "t.csv")
        assert path.read_text().splitlines()[0] == ",".join(TRACE_COLUMNS)
        assert read_trace_csv(path).rows == trace.rows


row_floats = st.floats(allow_nan=False, allow_infinity=False, width=64)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(row_floats, st.integers(1, 5), st.one_of(st.none(), st.integers(6, 11)),
                          row_floats, st.one_of(st.none(), row_floats), st.integers(0, 6)),
                max_size=6))
def test_csv_round_trip_property(tmp_path_factory, rows):
    trace = Trace([TraceRow(t, s, a, x, x, x, x, x, x, x, abs(x), v, n)
                   for t, s, a, x, v, n in rows])
    path = write_trace_csv(trace, tmp_path_factory.mktemp("rt") / "t.csv")
    assert read_trace_csv(path).rows == trace.rows


def test_replay_reproduces_report(tmp_path, hmdp_run):
    trace, rep = hmdp_run
    path = write_trace_csv(trace, tmp_path / "t.csv")
    replay = replay_monitors(read_trace_csv(path), CFG.params, CFG.solver.tolerance)
    assert replay["lyapunov_ok"] == rep.lyapunov_ok
    assert replay["lyapunov_failures"] == rep.lyapunov_failures
    assert replay["admissible_ok"] == rep.admissible_ok


def test_emit_outputs(tmp_path, hmdp_run):
    trace, rep = hmdp_run
    paths = emit_outputs(trace, rep, tmp_path / "out")
    assert paths["trace"].exists() and paths["report"].exists()
    for p in paths["plots"]:
        pts = read_plot_data(p)
        assert len(pts) == len(trace)
        assert all(b[0] > a[0] for a, b in zip(pts, pts[1:]))
    assert set(plot_series(trace)) == {"state", "lateral", "gap"}


def test_compare_summary():
    res = compare(CFG)
    s = res.summary()
    assert s["min_gap_lane_change"]["hmdp"] >= CFG.params.d_safe
    assert s["min_gap_lane_change"]["rule"] < CFG.params.d_safe
    assert s["goal_time"]["hmdp"] < 11.0 and s["goal_time"]["rule"] < 11.0
    assert res.hmdp[0].rows == run_simulation(CFG)[0].rows


def test_nominal_traffic_keeps_both_monitors():
    # without the unannounced acceleration, prediction is exact
    veh = tuple(dataclasses.replace(v, accel_profile=()) if v.id == "Ob" else v
                for v in CFG.vehicles)
    trace, rep = run_simulation(dataclasses.replace(CFG, vehicles=veh))
    assert rep.lyapunov_ok and rep.shift_ok
    assert rep.goal_time is not None


def test_infeasible_start_raises_with_partial_trace():
    veh = tuple(dataclasses.replace(v, x=10.0) if v.id == "Or" else v for v in CFG.vehicles)
    with pytest.raises(SimulationInfeasible) as err:
        run_simulation(dataclasses.replace(CFG, vehicles=veh))
    assert len(err.value.trace) == 1
    assert math.isinf(err.value.trace.rows[0].v_star)
    assert not err.value.report.completed


def test_override_and_sweep():
    assert override(CFG, "d_safe", 20).params.d_safe == 20.0
    assert override(CFG, "horizon", 2).solver.horizon == 2
    assert override(CFG, "Ob.v0", 10).vehicle("Ob").v == 10.0
    assert override(CFG, "duration", 2).duration == 2.0
    with pytest.raises(KeyError):
        override(CFG, "nonsense", 1)
    with pytest.raises(KeyError):
        override(CFG, "Zz.x0", 1)
    res = sweep(dataclasses.replace(CFG, duration=2.0), "horizon", [1, 2])
    assert [v for v, _ in res] == [1, 2]
    assert all(r.completed for _, r in res)


def test_timeline_from_rows_marks_changes():
    def row(t, s, a):
        return TraceRow(t, s, a, 0, 0, 0, 0, 0, 0, 0, 0, None, 1)
    rows = [row(0.0, 1, 11), row(0.4, 1, 11), row(0.8, 1, 8), row(1.2, 3, 11), row(1.6, 3, None)]
    assert timeline_from_rows(rows) == [(0.0, 11, 1), (0.8, 8, 3), (1.2, 11, 3)]


def test_override_rejects_fractional_integer_field():
    with pytest.raises(ValueError):
        override(CFG, "horizon", 2.5)
