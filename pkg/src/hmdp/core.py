"""Generic hybrid MDP model and the stepping/rollout machinery.

A hybrid state couples a discrete mode with a continuous state and an
environment state. Modes evolve through a deterministic transition table
driven by actions; the continuous and environment parts evolve autonomously
under mode-dependent dynamics.

States and environment vectors are plain tuples of floats so that hybrid
states are hashable and cheap to copy.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

Vector = tuple  # tuple[float, ...]

# (s, x, xi) -> action index
Policy = Callable[[int, Vector, Vector], int]


class ModelDefinitionError(ValueError):
    """Model or its inputs are malformed (bad index, wrong dimension, ...)."""


class FeasibilityError(RuntimeError):
    """An action would leave the constrained state set."""

    def __init__(self, message: str, *, step: Optional[int] = None,
                 state: "HybridState | None" = None, action: Optional[int] = None,
                 predicate: str = ""):
        super().__init__(message)
        self.step = step
        self.state = state
        self.action = action
        self.predicate = predicate


def _always_true(s, x, xi):
    return True


@dataclass(frozen=True)
class HybridState:
    s: int
    x: Vector
    xi: Vector
    k: int = 0


@dataclass(eq=False)
class HmdpModel:
    """The tuple (S, X, A, f, J) plus mode/environment dynamics and predicates.

    ``transition[s][a]`` is the successor mode. ``mode_dynamics[s]`` maps
    ``(x, xi) -> x'``; ``env_dynamics`` maps ``(xi, x) -> xi'``.
    ``constrained_set(s, x, xi)`` is membership in the safe set, evaluated on
    successor states. ``disabled`` lists (s, a) pairs that are never
    admissible (undefined edges kept only for totality of the table).

    ``settled(s, x, xi)`` refines goal detection for rollouts: a rollout stops
    once ``goal(s)`` holds *and* the configuration is settled, i.e. the zero
    cost tail is absorbing. It defaults to always true.
    """

    state_count: int
    action_count: int
    transition: Sequence[Sequence[int]]
    mode_dynamics: Sequence[Callable[[Vector, Vector], Vector]]
    env_dynamics: Callable[[Vector, Vector], Vector]
    stage_cost: Callable[[int, int], float]
    constrained_set: Callable[[int, Vector, Vector], bool]
    goal: Callable[[int], bool]
    x_dim: int
    xi_dim: int
    settled: Callable[[int, Vector, Vector], bool] = _always_true
    disabled: frozenset = field(default_factory=frozenset)
    name: str = "hmdp"

    def __post_init__(self):
        if self.state_count < 1 or self.action_count < 1:
            raise ModelDefinitionError("state and action sets must be nonempty")
        if len(self.transition) != self.state_count:
            raise ModelDefinitionError("transition table must have one row per state")
        for s, row in enumerate(self.transition):
            if len(row) != self.action_count:
                raise ModelDefinitionError(f"transition row {s} is not total over actions")
            for nxt in row:
                if not 0 <= nxt < self.state_count:
                    raise ModelDefinitionError(f"transition row {s} points outside S: {nxt}")
        if len(self.mode_dynamics) != self.state_count:
            raise ModelDefinitionError("mode_dynamics needs one function per state")
        self.transition = tuple(tuple(int(v) for v in row) for row in self.transition)
        self.disabled = frozenset(self.disabled)

    def at_goal(self, s: int, x: Vector, xi: Vector) -> bool:
        return self.goal(s) and self.settled(s, x, xi)

    def validate_costs(self) -> None:
        """Check J >= 0 everywhere and J(s, .) == 0 exactly on goal modes."""
        for s in range(self.state_count):
            costs = [self.stage_cost(s, a) for a in range(self.action_count)]
            if any(c < 0 or not math.isfinite(c) for c in costs):
                raise ModelDefinitionError(f"stage cost of state {s} must be finite and >= 0")
            zero = all(c == 0 for c in costs)
            if zero != bool(self.goal(s)):
                raise ModelDefinitionError(
                    f"stage cost must vanish exactly on goal states (state {s})")


def _check_state(model: HmdpModel, s: int) -> None:
    if not 0 <= s < model.state_count:
        raise ModelDefinitionError(f"discrete state {s} outside 0..{model.state_count - 1}")


def _check_action(model: HmdpModel, a: int) -> None:
    if not 0 <= a < model.action_count:
        raise ModelDefinitionError(f"action {a} outside 0..{model.action_count - 1}")


def _check_vector(v: Vector, dim: int, what: str) -> None:
    if len(v) != dim:
        raise ModelDefinitionError(f"{what} has dimension {len(v)}, expected {dim}")


def transition(model: HmdpModel, s: int, a: int) -> int:
    _check_state(model, s)
    _check_action(model, a)
    return model.transition[s][a]


def step_continuous(model: HmdpModel, s: int, x: Vector, xi: Vector) -> Vector:
    _check_state(model, s)
    _check_vector(x, model.x_dim, "continuous state")
    _check_vector(xi, model.xi_dim, "environment state")
    out = tuple(model.mode_dynamics[s](x, xi))
    _check_vector(out, model.x_dim, "continuous successor")
    return out


def step_environment(model: HmdpModel, xi: Vector, x: Vector) -> Vector:
    _check_vector(xi, model.xi_dim, "environment state")
    _check_vector(x, model.x_dim, "continuous state")
    out = tuple(model.env_dynamics(xi, x))
    _check_vector(out, model.xi_dim, "environment successor")
    return out


def _successor(model: HmdpModel, h: HybridState, a: int) -> HybridState:
    # unchecked fast path; callers validate indices
    return HybridState(
        model.transition[h.s][a],
        tuple(model.mode_dynamics[h.s](h.x, h.xi)),
        tuple(model.env_dynamics(h.xi, h.x)),
        h.k + 1,
    )


def _admissible(model: HmdpModel, h: HybridState, a: int, nxt: HybridState) -> bool:
    if (h.s, a) in model.disabled:
        return False
    return bool(model.constrained_set(nxt.s, nxt.x, nxt.xi))


def successors(model: HmdpModel, h: HybridState) -> list:
    """Admissible ``(action, successor)`` pairs in ascending action order."""
    x1 = tuple(model.mode_dynamics[h.s](h.x, h.xi))
    xi1 = tuple(model.env_dynamics(h.xi, h.x))
    row = model.transition[h.s]
    out = []
    for a in range(model.action_count):
        if (h.s, a) in model.disabled:
            continue
        s1 = row[a]
        if model.constrained_set(s1, x1, xi1):
            out.append((a, HybridState(s1, x1, xi1, h.k + 1)))
    return out


def admissible_actions(model: HmdpModel, h: HybridState) -> list:
    _check_state(model, h.s)
    return [a for a, _ in successors(model, h)]


def step_hybrid(model: HmdpModel, h: HybridState, a: int) -> HybridState:
    """Advance one hybrid step; raises FeasibilityError if ``a`` is inadmissible.

    Continuous and environment updates use the pre-transition mode ``h.s``.
    """
    s1 = transition(model, h.s, a)
    x1 = step_continuous(model, h.s, h.x, h.xi)
    xi1 = step_environment(model, h.xi, h.x)
    nxt = HybridState(s1, x1, xi1, h.k + 1)
    if (h.s, a) in model.disabled:
        raise FeasibilityError(f"action {a} is undefined in state {h.s}", step=h.k,
                               state=h, action=a, predicate="disabled")
    if not model.constrained_set(s1, x1, xi1):
        raise FeasibilityError(f"action {a} at step {h.k} leaves the constrained set",
                               step=h.k, state=h, action=a, predicate="constrained_set")
    return nxt


@dataclass(frozen=True)
class RolloutStep:
    state: HybridState
    action: int
    cost: float


def rollout(model: HmdpModel, policy: Policy, h0: HybridState, max_steps: int):
    """Run ``policy`` from ``h0`` until the goal or ``max_steps``.

    Returns ``(steps, total_cost, reached_goal)``.
    """
    if max_steps < 1:
        raise ValueError("max_steps must be >= 1")
    steps = []
    total = 0.0
    h = h0
    while not model.at_goal(h.s, h.x, h.xi) and len(steps) < max_steps:
        a = policy(h.s, h.x, h.xi)
        _check_action(model, a)
        cost = model.stage_cost(h.s, a)
        nxt = _successor(model, h, a)
        if not _admissible(model, h, a, nxt):
            raise FeasibilityError(
                f"policy chose inadmissible action {a} at rollout step {len(steps)}",
                step=len(steps), state=h, action=a, predicate="constrained_set")
        steps.append(RolloutStep(h, a, cost))
        total += cost
        h = nxt
    return steps, total, model.at_goal(h.s, h.x, h.xi)
