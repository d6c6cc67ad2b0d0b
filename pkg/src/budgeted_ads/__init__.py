"""Budgeted pay-per-click bandits: BudgetedUCB, the greedy benchmark, and a
coupled simulator for checking regret guarantees empirically."""

from .engine import CoupledOutcome, RunTrace, run_coupled, run_policy
from .model import ArmSpec, InstanceError, ProblemInstance, generate_instance, load_instance
from .policy import PolicySpec
from .realization import HASH_VERSION, ClickSource, Mode

__version__ = "0.1.0"

__all__ = [
    "ArmSpec", "ClickSource", "CoupledOutcome", "HASH_VERSION", "InstanceError", "Mode",
    "PolicySpec", "ProblemInstance", "RunTrace", "generate_instance", "load_instance",
    "run_coupled", "run_policy",
]
