"""Arm-selection rules: BudgetedUCB, the greedy benchmark, and baselines.

The scalar helpers here are plain Python and are also compiled by the engine
(``numba.njit``), so the simulation kernel and the library API evaluate the
same expressions.  Arm indices are 1-based canonical; ``None`` means idle.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .realization import BASELINE_STREAM, hash_uniform

POLICY_KINDS = ("budgeted_ucb", "greedy", "random_available", "fixed_arm")


def confidence_radius(impressions, horizon, ucb_constant):
    """``C * sqrt(ln T / (1 + n))``; natural log, finite at ``n = 0``."""
    return ucb_constant * math.sqrt(math.log(horizon) / (1.0 + impressions))


def empirical_ctr(clicks, impressions):
    if clicks > impressions:
        raise ValueError("clicks exceed impressions")
    if impressions == 0:
        return 0.0
    return clicks / impressions


def ucb_index(payment, nu, radius):
    # deliberately unclipped: nu + radius may exceed 1
    return payment * (nu + radius)


def is_available(remaining_budget, payment):
    return remaining_budget >= payment


@dataclass
class ArmEstimate:
    impressions: int = 0
    clicks: int = 0
    remaining_budget: float = 0.0


@dataclass
class PolicyState:
    """Counters BudgetedUCB sees at the start of a round."""

    payments: Sequence[float]
    ucb_constant: float
    horizon: int
    estimates: list[ArmEstimate] = field(default_factory=list)

    @classmethod
    def fresh(cls, instance, ucb_constant: float = 1.0) -> "PolicyState":
        return cls(
            list(instance.payment),
            ucb_constant,
            instance.horizon,
            [ArmEstimate(0, 0, float(B)) for B in instance.budget],
        )

    def record(self, arm: int, click: int) -> None:
        est = self.estimates[arm - 1]
        est.impressions += 1
        if click:
            est.clicks += 1
            est.remaining_budget -= self.payments[arm - 1]

    def available(self) -> set[int]:
        return {
            i
            for i, (est, b) in enumerate(zip(self.estimates, self.payments), start=1)
            if is_available(est.remaining_budget, b)
        }

    def indices(self) -> list[float]:
        return [
            ucb_index(
                b,
                empirical_ctr(est.clicks, est.impressions),
                confidence_radius(est.impressions, self.horizon, self.ucb_constant),
            )
            for est, b in zip(self.estimates, self.payments)
        ]


def argmax_available(indices: Sequence[float], available: Iterable[int]) -> int | None:
    """Lowest 1-based arm attaining the largest index among ``available``."""
    best, best_val = None, -math.inf
    for i in sorted(available):
        if indices[i - 1] > best_val:
            best, best_val = i, indices[i - 1]
    return best


def select_budgeted_ucb(state: PolicyState, available: Iterable[int]) -> int | None:
    return argmax_available(state.indices(), available)


def select_greedy(available: Iterable[int]) -> int | None:
    return min(available, default=None)


def select_random_available(available: Iterable[int], u: float) -> int | None:
    """Pick ``sorted(available)[floor(u * size)]`` for a uniform ``u`` in [0, 1)."""
    arms = sorted(available)
    if not arms:
        return None
    return arms[int(u * len(arms))]


def select_fixed_arm(arm: int, available: Iterable[int]) -> int | None:
    return arm if arm in set(available) else None


def baseline_uniform(seed: int, round_: int) -> float:
    """The random_available baseline's own draw for ``round_``."""
    return hash_uniform(seed, BASELINE_STREAM, 0, round_)


def select_baseline(kind: str, available: Iterable[int], seed: int = 0,
                    round_: int = 1, fixed_arm: int | None = None) -> int | None:
    if kind == "random_available":
        return select_random_available(available, baseline_uniform(seed, round_))
    if kind == "fixed_arm":
        if fixed_arm is None:
            raise ValueError("fixed_arm baseline needs an arm")
        return select_fixed_arm(fixed_arm, available)
    raise ValueError(f"unknown baseline kind {kind!r}")


@dataclass(frozen=True)
class PolicySpec:
    """A policy kind plus its parameters, e.g. ``PolicySpec.parse("fixed_arm:2")``."""

    kind: str = "budgeted_ucb"
    ucb_constant: float = 1.0
    fixed_arm: int = 0

    def __post_init__(self) -> None:
        if self.kind not in POLICY_KINDS:
            raise ValueError(f"unknown policy {self.kind!r}; expected one of {POLICY_KINDS}")
        if not self.ucb_constant > 0:
            raise ValueError("ucb_constant must be > 0")
        if self.kind == "fixed_arm" and self.fixed_arm < 1:
            raise ValueError("fixed_arm needs a 1-based arm index")

    @classmethod
    def parse(cls, text: str, ucb_constant: float = 1.0) -> "PolicySpec":
        kind, _, arg = text.partition(":")
        if kind == "fixed_arm":
            if not arg.isdigit():
                raise ValueError(f"expected fixed_arm:<i>, got {text!r}")
            return cls(kind, ucb_constant, int(arg))
        if arg:
            raise ValueError(f"policy {kind!r} takes no argument")
        return cls(kind, ucb_constant)

    @property
    def label(self) -> str:
        if self.kind == "fixed_arm":
            return f"fixed_arm:{self.fixed_arm}"
        if self.kind == "budgeted_ucb":
            return f"budgeted_ucb(C={self.ucb_constant:g})"
        return self.kind
