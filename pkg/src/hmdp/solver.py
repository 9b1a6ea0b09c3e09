"""Receding-horizon action selection over a hybrid MDP.

The finite-horizon problem is solved exactly by depth-first search over the
admissible-action tree. The cost-to-go past the horizon is the cost of
rolling out a baseline policy that is assumed to reach the goal. A brute
force enumerator serves as an independent oracle, and two runtime monitors
certify recursive feasibility (shifted plans) and value decrease.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional, Sequence

from .core import (
    FeasibilityError,
    HmdpModel,
    HybridState,
    Policy,
    _admissible,
    _successor,
    rollout,
    step_hybrid,
    successors,
)


class InfeasibleError(RuntimeError):
    """No action sequence of full horizon length satisfies the constraints."""

    def __init__(self, message: str, deepest: int):
        super().__init__(message)
        self.deepest = deepest


class BaselineDivergenceError(RuntimeError):
    """The baseline policy failed to reach the goal within the rollout cap."""


class TheoremViolationError(RuntimeError):
    """A shifted plan could not be certified feasible."""


@dataclass(frozen=True)
class SolverConfig:
    horizon: int = 4
    rollout_cap: int = 500
    tolerance: float = 1e-9

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.rollout_cap < self.horizon:
            raise ValueError("rollout_cap must be >= horizon")
        if self.tolerance < 0:
            raise ValueError("tolerance must be non-negative")


@dataclass(frozen=True)
class DecisionPlan:
    root: HybridState
    actions: tuple
    predicted_states: tuple  # s*(1;k) .. s*(N;k) as HybridStates
    stage_costs: tuple
    terminal_cost: float
    value: float

    @property
    def first_action(self) -> int:
        return self.actions[0]


@dataclass(frozen=True)
class ValueRecord:
    k: int
    value: float
    executed_stage_cost: float


@dataclass(frozen=True)
class LyapunovVerdict:
    holds: bool
    index: Optional[int] = None
    reason: str = ""

    def __bool__(self):
        return self.holds


def _rollout_cost(model, baseline, h, cap):
    _, cost, reached = rollout(model, baseline, h, cap)
    if not reached:
        raise BaselineDivergenceError(
            f"baseline did not reach the goal within {cap} steps from mode {h.s}")
    return cost


def terminal_cost(model: HmdpModel, baseline: Policy, h_terminal: HybridState,
                  cap: int) -> float:
    """Cost-to-go of the baseline from ``h_terminal`` (zero at a settled goal).

    FeasibilityError propagates when the baseline tail leaves the safe set;
    the solvers treat such terminal states as infeasible.
    """
    if model.at_goal(h_terminal.s, h_terminal.x, h_terminal.xi):
        return 0.0
    return _rollout_cost(model, baseline, h_terminal, cap)


class _TerminalCache:
    def __init__(self, model, baseline, cap):
        self.model = model
        self.baseline = baseline
        self.cap = cap
        self._memo = {}

    def __call__(self, h):
        key = (h.s, h.x, h.xi)
        hit = self._memo.get(key)
        if hit is None:
            try:
                hit = terminal_cost(self.model, self.baseline, h, self.cap)
            except FeasibilityError:
                hit = math.inf
            self._memo[key] = hit
        return hit


def solve_step(model: HmdpModel, baseline: Policy, h: HybridState,
               cfg: SolverConfig, prune: bool = True) -> DecisionPlan:
    """Exact minimiser of horizon stage costs plus baseline terminal cost.

    Children are visited in ascending action order and only a strictly
    better total replaces the incumbent, so ties resolve to the
    lexicographically smallest action sequence. Bound pruning is exact
    because stage and terminal costs are non-negative.
    """
    n = cfg.horizon
    tail = _TerminalCache(model, baseline, cfg.rollout_cap)
    best_value = math.inf
    best = None
    deepest = 0
    actions = [0] * n
    states = [None] * n
    costs = [0.0] * n

    def dfs(node, depth, prefix):
        nonlocal best_value, best, deepest
        if depth > deepest:
            deepest = depth
        if depth == n:
            tc = tail(node)
            if tc == math.inf:
                return
            total = prefix + tc
            if total < best_value:
                best_value = total
                best = (tuple(actions), tuple(states), tuple(costs), tc)
            return
        if prune and prefix >= best_value:
            return
        for a, child in successors(model, node):
            c = model.stage_cost(node.s, a)
            actions[depth] = a
            states[depth] = child
            costs[depth] = c
            dfs(child, depth + 1, prefix + c)

    dfs(h, 0, 0.0)
    if best is None:
        raise InfeasibleError(
            f"no feasible action sequence of length {n} (deepest feasible depth {deepest})",
            deepest)
    acts, sts, cs, tc = best
    return DecisionPlan(h, acts, sts, cs, tc, best_value)


def oracle_solve(model: HmdpModel, baseline: Policy, h: HybridState,
                 cfg: SolverConfig) -> DecisionPlan:
    """Brute-force reference: enumerate all |A|^N sequences, no pruning."""
    n = cfg.horizon
    best = None
    best_value = math.inf
    deepest = 0
    for seq in itertools.product(range(model.action_count), repeat=n):
        node = h
        states = []
        costs = []
        total = 0.0
        ok = True
        for i, a in enumerate(seq):
            try:
                nxt = step_hybrid(model, node, a)
            except FeasibilityError:
                ok = False
                deepest = max(deepest, i)
                break
            c = model.stage_cost(node.s, a)
            costs.append(c)
            states.append(nxt)
            total += c
            node = nxt
        if not ok:
            continue
        try:
            tc = terminal_cost(model, baseline, node, cfg.rollout_cap)
        except FeasibilityError:
            deepest = n
            continue
        deepest = n
        total += tc
        if total < best_value:
            best_value = total
            best = DecisionPlan(h, seq, tuple(states), tuple(costs), tc, total)
    if best is None:
        raise InfeasibleError(
            f"no feasible action sequence of length {n} (deepest feasible depth {deepest})",
            deepest)
    return best


def evaluate_plan(model: HmdpModel, baseline: Policy, h: HybridState,
                  actions: Sequence[int], cap: int) -> DecisionPlan:
    """Re-simulate ``actions`` from ``h`` with full feasibility checking.

    Raises FeasibilityError if any step, or the baseline tail past the last
    step, leaves the constrained set.
    """
    node = h
    states = []
    costs = []
    total = 0.0
    for a in actions:
        nxt = step_hybrid(model, node, a)
        c = model.stage_cost(node.s, a)
        costs.append(c)
        states.append(nxt)
        total += c
        node = nxt
    tc = terminal_cost(model, baseline, node, cap)
    return DecisionPlan(h, tuple(actions), tuple(states), tuple(costs), tc, total + tc)


def verify_plan(model: HmdpModel, baseline: Policy, plan: DecisionPlan, cap: int,
                tol: float = 1e-9) -> bool:
    """True when re-simulating the plan reproduces its states and value."""
    try:
        again = evaluate_plan(model, baseline, plan.root, plan.actions, cap)
    except (FeasibilityError, BaselineDivergenceError):
        return False
    return (again.predicted_states == plan.predicted_states
            and abs(again.value - plan.value) <= tol)


def shift_plan(model: HmdpModel, baseline: Policy, prev: DecisionPlan,
               h_next: HybridState, cap: int = 500) -> DecisionPlan:
    """Candidate plan at k+1: drop the executed action, append the baseline's."""
    last = prev.predicted_states[-1] if prev.predicted_states else prev.root
    a_tail = baseline(last.s, last.x, last.xi)
    nxt = _successor(model, last, a_tail)
    if not _admissible(model, last, a_tail, nxt):
        raise TheoremViolationError(
            f"baseline action {a_tail} is inadmissible at the predicted terminal state")
    actions = tuple(prev.actions[1:]) + (a_tail,)
    try:
        return evaluate_plan(model, baseline, h_next, actions, cap)
    except FeasibilityError as exc:
        raise TheoremViolationError(f"shifted plan infeasible at k+1: {exc}") from exc


def check_lyapunov(records: Sequence[ValueRecord], tolerance: float = 1e-9) -> LyapunovVerdict:
    """Check V(k+1) - V(k) <= -J(k) + tol, with no plateau off the goal."""
    for i in range(len(records) - 1):
        cur, nxt = records[i], records[i + 1]
        diff = nxt.value - cur.value
        if diff > -cur.executed_stage_cost + tolerance:
            return LyapunovVerdict(
                False, i,
                f"V({nxt.k}) - V({cur.k}) = {diff:.6g} > -J = {-cur.executed_stage_cost:.6g}")
        if abs(diff) <= tolerance and cur.executed_stage_cost > tolerance:
            return LyapunovVerdict(False, i, f"value plateau at k={cur.k} off the goal")
    return LyapunovVerdict(True)
