"""Receding-horizon decision making over hybrid MDPs, with a lane-change
domain, a bicycle-model plant and a scenario runner."""

from .core import (
    FeasibilityError,
    HmdpModel,
    HybridState,
    ModelDefinitionError,
    rollout,
    step_hybrid,
    successors,
)
from .solver import (
    BaselineDivergenceError,
    DecisionPlan,
    InfeasibleError,
    SolverConfig,
    TheoremViolationError,
    ValueRecord,
    check_lyapunov,
    oracle_solve,
    shift_plan,
    solve_step,
)

__version__ = "0.1.0"
