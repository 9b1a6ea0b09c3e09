import pytest
from hypothesis import given, settings, strategies as st

from hmdp.randmodels import (
    InstanceSpec,
    build_instance,
    check_instance,
    generate_instance,
    oracle_check,
)
from hmdp.solver import BaselineDivergenceError, InfeasibleError, SolverConfig, solve_step


def test_generation_is_seeded():
    assert generate_instance(7) == generate_instance(7)
    assert generate_instance(7) != generate_instance(8)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), broken=st.booleans())
def test_json_round_trip(seed, broken):
    spec = generate_instance(seed, broken)
    assert InstanceSpec.from_json(spec.to_json()) == spec


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_goal_row_is_free(seed):
    spec = generate_instance(seed)
    model, _, _ = build_instance(spec)
    assert all(model.stage_cost(0, a) == 0 for a in range(spec.n_actions))
    assert all(model.stage_cost(s, a) >= 1 for s in range(1, spec.n_states)
               for a in range(spec.n_actions))


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_broken_baseline_never_reaches_goal(seed):
    spec = generate_instance(seed, broken=True)
    spec.s0 = 1
    model, policy, h = build_instance(spec)
    cfg = SolverConfig(horizon=spec.horizon, rollout_cap=4 * spec.n_states + 4)
    with pytest.raises((BaselineDivergenceError, InfeasibleError)):
        solve_step(model, policy, h, cfg)


@settings(max_examples=100, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_single_instance_check(seed):
    assert check_instance(generate_instance(seed)) in ("", "infeasible")


def test_oracle_check_counts():
    rep = oracle_check(200, seed=3)
    assert rep.instances == 200 and rep.passed == 200
    assert rep.divergence_controls == 2
    assert rep.ok
    with pytest.raises(ValueError):
        oracle_check(0)
