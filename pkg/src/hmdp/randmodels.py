"""Seeded random HMDP instances for cross-checking the solver.

Every instance has goal mode 0 and a baseline built from a random tree
rooted at the goal: each non-goal mode's baseline action leads to its
parent, and the goal's baseline action is a self loop. Constraints only ever
forbid modes that no baseline edge enters, so the baseline stays admissible
from every state.
"""

from __future__ import annotations

import json
import random
from dataclasses import asdict, dataclass, field

from .core import FeasibilityError, HmdpModel, HybridState, step_hybrid
from .solver import (
    BaselineDivergenceError,
    InfeasibleError,
    SolverConfig,
    TheoremViolationError,
    ValueRecord,
    check_lyapunov,
    oracle_solve,
    shift_plan,
    solve_step,
)

X_MOD = 7
XI_MOD = 5


@dataclass
class InstanceSpec:
    seed: int
    n_states: int
    n_actions: int
    horizon: int
    transition: list
    costs: list            # costs[s][a], integers; zero on the goal row
    baseline: list         # baseline[s] -> action
    x_gain: list           # per mode: x' = (gain*x + shift) mod X_MOD
    x_shift: list
    forbidden: list        # modes guarded by the continuous-state constraint
    disabled: list         # [s, a] pairs
    x0: int = 0
    xi0: int = 0
    s0: int = 1
    broken: bool = False

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "InstanceSpec":
        return cls(**json.loads(text))


def generate_instance(seed: int, broken: bool = False) -> InstanceSpec:
    rng = random.Random(seed)
    n_s = rng.randint(2, 6)
    n_a = rng.randint(2, 6)
    horizon = rng.randint(1, 4)
    parent = [0] + [rng.randrange(0, s) for s in range(1, n_s)]
    base = [rng.randrange(n_a) for _ in range(n_s)]
    trans = [[rng.randrange(n_s) for _ in range(n_a)] for _ in range(n_s)]
    for s in range(n_s):
        trans[s][base[s]] = parent[s] if s else 0
    if broken:
        # no edge out of a non-goal mode reaches the goal, so every
        # baseline tail from a non-goal mode runs into the rollout cap
        n_s = max(n_s, 2)
        while len(trans) < n_s:
            trans.append([0] * n_a)
            base.append(rng.randrange(n_a))
        for s in range(1, n_s):
            trans[s] = [rng.randrange(1, n_s) for _ in range(n_a)]
    targets = {trans[s][base[s]] for s in range(n_s)} | {0}
    candidates = [s for s in range(n_s) if s not in targets]
    forbidden = [s for s in candidates if rng.random() < 0.6]
    disabled = []
    for s in range(n_s):
        for a in range(n_a):
            if a != base[s] and rng.random() < 0.1:
                disabled.append([s, a])
    costs = [[0] * n_a] + [[rng.randint(1, 9) for _ in range(n_a)] for _ in range(n_s - 1)]
    return InstanceSpec(
        seed=seed, n_states=n_s, n_actions=n_a, horizon=horizon, transition=trans,
        costs=costs, baseline=base,
        x_gain=[rng.randint(1, X_MOD - 1) for _ in range(n_s)],
        x_shift=[rng.randrange(X_MOD) for _ in range(n_s)],
        forbidden=forbidden, disabled=disabled,
        x0=rng.randrange(X_MOD), xi0=rng.randrange(XI_MOD),
        s0=rng.randrange(1, n_s), broken=broken,
    )


def build_instance(spec: InstanceSpec):
    """``(model, baseline_policy, h0)`` for a spec."""
    gains, shifts = spec.x_gain, spec.x_shift
    forbidden = frozenset(spec.forbidden)

    def dyn(s):
        g, c = gains[s], shifts[s]
        return lambda x, xi: (float((g * int(x[0]) + c) % X_MOD),)

    def constrained(s, x, xi):
        if s in forbidden:
            return (int(x[0]) + int(xi[0])) % 3 != 0
        return True

    model = HmdpModel(
        state_count=spec.n_states,
        action_count=spec.n_actions,
        transition=spec.transition,
        mode_dynamics=[dyn(s) for s in range(spec.n_states)],
        env_dynamics=lambda xi, x: (float((int(xi[0]) + int(x[0]) + 1) % XI_MOD),),
        stage_cost=lambda s, a: float(spec.costs[s][a]),
        constrained_set=constrained,
        goal=lambda s: s == 0,
        x_dim=1,
        xi_dim=1,
        disabled=frozenset((s, a) for s, a in spec.disabled),
        name=f"random-{spec.seed}",
    )
    base = spec.baseline
    policy = lambda s, x, xi: base[s]  # noqa: E731
    h0 = HybridState(spec.s0, (float(spec.x0),), (float(spec.xi0),), 0)
    return model, policy, h0


@dataclass
class OracleReport:
    instances: int = 0
    passed: int = 0
    failed: int = 0
    infeasible_roots: int = 0
    divergence_controls: int = 0
    divergence_detected: int = 0
    failures: list = field(default_factory=list)  # serialized specs with a reason

    @property
    def ok(self) -> bool:
        return self.failed == 0 and self.divergence_detected == self.divergence_controls


def _plans_match(a, b) -> bool:
    return a.value == b.value and a.actions[0] == b.actions[0]


def check_instance(spec: InstanceSpec, loop_steps: int = 12) -> str:
    """Empty string on success, ``"infeasible"`` when both solvers agree the
    root has no plan, else a failure reason."""
    model, policy, h = build_instance(spec)
    cfg = SolverConfig(horizon=spec.horizon, rollout_cap=4 * spec.n_states + 4)
    try:
        fast = solve_step(model, policy, h, cfg)
    except InfeasibleError:
        try:
            oracle_solve(model, policy, h, cfg)
        except InfeasibleError:
            return "infeasible"
        return "solve_step infeasible but oracle found a plan"
    slow = oracle_solve(model, policy, h, cfg)
    if not _plans_match(fast, slow):
        return f"mismatch: fast {fast.actions}/{fast.value} vs oracle {slow.actions}/{slow.value}"
    # closed loop: value decrease and shifted-plan feasibility
    records = []
    prev = fast
    node = h
    for k in range(loop_steps):
        plan = fast if k == 0 else solve_step(model, policy, node, cfg)
        if k:
            try:
                shift_plan(model, policy, prev, node, cfg.rollout_cap)
            except TheoremViolationError as exc:
                return f"shift failed at k={k}: {exc}"
        records.append(ValueRecord(k, plan.value, model.stage_cost(node.s, plan.first_action)))
        if model.at_goal(node.s, node.x, node.xi):
            break
        try:
            node = step_hybrid(model, node, plan.first_action)
        except FeasibilityError as exc:
            return f"executed action infeasible at k={k}: {exc}"
        prev = plan
    verdict = check_lyapunov(records)
    if not verdict:
        return f"value monitor: {verdict.reason}"
    return ""


def oracle_check(n_instances: int, seed: int = 0, controls: int | None = None) -> OracleReport:
    if n_instances < 1:
        raise ValueError("n_instances must be >= 1")
    rng = random.Random(seed)
    rep = OracleReport()
    for _ in range(n_instances):
        spec = generate_instance(rng.getrandbits(32))
        rep.instances += 1
        reason = check_instance(spec)
        if reason == "infeasible":
            rep.infeasible_roots += 1
            rep.passed += 1
        elif reason:
            rep.failed += 1
            rep.failures.append({"reason": reason, "instance": json.loads(spec.to_json())})
        else:
            rep.passed += 1
    n_ctl = max(1, n_instances // 100) if controls is None else controls
    for _ in range(n_ctl):
        spec = generate_instance(rng.getrandbits(32), broken=True)
        spec.s0 = 1
        model, policy, h = build_instance(spec)
        cfg = SolverConfig(horizon=spec.horizon, rollout_cap=4 * spec.n_states + 4)
        rep.divergence_controls += 1
        try:
            solve_step(model, policy, h, cfg)
        except BaselineDivergenceError:
            rep.divergence_detected += 1
        except InfeasibleError:
            pass
    return rep
