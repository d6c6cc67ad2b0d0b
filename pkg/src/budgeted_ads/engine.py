"""Round-by-round simulation of one policy, and coupled greedy/UCB pairs.

The loop runs in a numba kernel; every policy, the greedy benchmark
included, goes through the same kernel so a coupled pair reads its clicks
through identical plumbing.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property

import numba
import numpy as np

from . import policy as pol
from .model import ProblemInstance
from .policy import PolicySpec
from .realization import BASELINE_STREAM, ClickSource, Mode, stream_key_nb, uniform_nb

_KIND_CODE = {"budgeted_ucb": 0, "greedy": 1, "random_available": 2, "fixed_arm": 3}

_radius = numba.njit(cache=True)(pol.confidence_radius)
_ctr_hat = numba.njit(cache=True)(pol.empirical_ctr)
_index = numba.njit(cache=True)(pol.ucb_index)
_available = numba.njit(cache=True)(pol.is_available)


@numba.njit(cache=True)
def _simulate(ctr, pay, budget, horizon, kind, ucb_c, seed, mode, fixed_arm, diag):
    k = ctr.shape[0]
    chosen = np.zeros(horizon, dtype=np.int32)
    clicked = np.zeros(horizon, dtype=np.uint8)
    rem_after = np.full(horizon, np.nan)
    n = np.zeros(k, dtype=np.int64)
    c = np.zeros(k, dtype=np.int64)
    rem = budget.copy()
    istar = np.zeros(k, dtype=np.int64)
    avail = np.zeros(k, dtype=np.bool_)
    violations = 0
    reward = 0.0
    click_key = stream_key_nb(seed, mode)
    base_key = stream_key_nb(seed, BASELINE_STREAM)

    for t in range(1, horizon + 1):
        if diag:
            for i in range(k):
                if n[i] >= 1:
                    if abs(ctr[i] - _ctr_hat(c[i], n[i])) > _radius(n[i], horizon, ucb_c):
                        violations += 1

        first = -1
        count = 0
        for i in range(k):
            avail[i] = _available(rem[i], pay[i])
            if avail[i]:
                count += 1
                if first < 0:
                    first = i

        a = -1
        if count > 0:
            if kind == 0:
                best = -np.inf
                for i in range(k):
                    if avail[i]:
                        v = _index(pay[i], _ctr_hat(c[i], n[i]), _radius(n[i], horizon, ucb_c))
                        if v > best:
                            best = v
                            a = i
            elif kind == 1:
                a = first
            elif kind == 2:
                target = int(uniform_nb(base_key, 0, t) * count)
                for i in range(k):
                    if avail[i]:
                        if target == 0:
                            a = i
                            break
                        target -= 1
            else:
                if avail[fixed_arm - 1]:
                    a = fixed_arm - 1
        if a < 0:
            continue

        index = n[a] + 1 if mode == 2 else t
        hit = uniform_nb(click_key, a + 1, index) < ctr[a]
        istar[a] = first + 1
        n[a] += 1
        chosen[t - 1] = a + 1
        if hit:
            c[a] += 1
            rem[a] -= pay[a]
            reward += pay[a]
            clicked[t - 1] = 1
        rem_after[t - 1] = rem[a]

    return chosen, clicked, rem_after, n, c, rem, istar, violations, reward


@dataclass(frozen=True, eq=False)
class RunTrace:
    """Everything recorded about one policy execution.

    Per-round arrays are indexed by round - 1; ``chosen`` holds 1-based arms
    with 0 for idle rounds.  Per-arm arrays are indexed by arm - 1.
    ``istar[j-1]`` is the lowest available arm at the last round arm ``j`` was
    shown, 0 if ``j`` was never shown.  ``confidence_violations`` is None when
    diagnostics were off.
    """

    instance: ProblemInstance
    policy: PolicySpec
    seed: int
    mode: Mode
    chosen: np.ndarray
    clicks: np.ndarray
    remaining_after: np.ndarray
    impressions: np.ndarray
    click_counts: np.ndarray
    remaining_budget: np.ndarray
    istar: np.ndarray
    total_reward: float
    confidence_violations: int | None

    @property
    def idle_rounds(self) -> int:
        return int(np.count_nonzero(self.chosen == 0))

    @cached_property
    def exhausted(self) -> frozenset[int]:
        # arms pushed below one click's worth by their own charges
        done = (self.click_counts > 0) & (self.remaining_budget < self.instance.payment)
        return frozenset(int(i) + 1 for i in np.flatnonzero(done))

    @property
    def last_exhausted(self) -> int:
        return extract_last_exhausted(self)

    @property
    def best_unexhausted(self) -> int:
        return extract_best_unexhausted(self)

    @property
    def expected_value(self) -> float:
        """``n . w`` for this trace's impressions."""
        return float(self.impressions @ self.instance.w)

    def rows(self):
        """(round, chosen_arm, click, remaining_budget_of_chosen, reward_so_far)."""
        pay = self.instance.payment
        so_far = 0.0
        for t in range(self.instance.horizon):
            arm = int(self.chosen[t])
            click = int(self.clicks[t])
            if click:
                so_far += float(pay[arm - 1])
            rem = float(self.remaining_after[t]) if arm else ""
            yield t + 1, arm, click, rem, so_far


def extract_last_exhausted(trace: RunTrace) -> int:
    return max(trace.exhausted, default=0)


def extract_best_unexhausted(trace: RunTrace) -> int:
    """Lowest arm not exhausted; ``k + 1`` if every arm was exhausted."""
    k = trace.instance.k
    return next((i for i in range(1, k + 1) if i not in trace.exhausted), k + 1)


def run_policy(instance: ProblemInstance, policy: PolicySpec, source: ClickSource,
               record_diagnostics: bool = True) -> RunTrace:
    if source.k != instance.k or source.horizon != instance.horizon:
        raise ValueError("click source was built for a different instance")
    if not np.array_equal(source.ctr_array, instance.ctr):
        raise ValueError("click source CTRs differ from the instance")
    if policy.kind == "fixed_arm" and policy.fixed_arm > instance.k:
        raise ValueError(f"fixed arm {policy.fixed_arm} exceeds k={instance.k}")
    out = _simulate(
        instance.ctr, instance.payment, instance.budget, instance.horizon,
        _KIND_CODE[policy.kind], float(policy.ucb_constant), np.uint64(source.seed),
        int(source.mode), int(policy.fixed_arm), bool(record_diagnostics),
    )
    chosen, clicked, rem_after, n, c, rem, istar, violations, reward = out
    return RunTrace(
        instance, policy, source.seed, source.mode, chosen, clicked, rem_after,
        n, c, rem, istar, float(reward), int(violations) if record_diagnostics else None,
    )


def exact_dot(counts, values) -> float:
    """``counts . values`` summed exactly, rounded once."""
    return float(sum(int(c) * Fraction(float(v)) for c, v in zip(counts, values)))


class CouplingError(AssertionError):
    """A coupled pair broke the per-arm ordering the shared stack guarantees."""


@dataclass(frozen=True, eq=False)
class CoupledOutcome:
    greedy_trace: RunTrace
    ucb_trace: RunTrace
    regret_sample: float
    seed: int

    @property
    def last_exhausted(self) -> int:
        """i_B, taken from the greedy run."""
        return self.greedy_trace.last_exhausted

    @property
    def best_unexhausted(self) -> int:
        """i_A, taken from the learning policy's run."""
        return self.ucb_trace.best_unexhausted


GREEDY = PolicySpec("greedy")


def run_coupled(instance: ProblemInstance, seed: int, ucb_params: PolicySpec | None = None,
                record_diagnostics: bool = True) -> CoupledOutcome:
    """Run greedy and ``ucb_params`` (default BudgetedUCB, C=1) on one stack realization."""
    ucb_params = ucb_params or PolicySpec()
    source = ClickSource.for_instance(instance, seed, Mode.STACK)
    greedy = run_policy(instance, GREEDY, source, record_diagnostics=False)
    learner = run_policy(instance, ucb_params, source, record_diagnostics)
    m, n = greedy.impressions, learner.impressions
    regret = exact_dot(m - n, instance.w)

    i_b = greedy.last_exhausted
    if i_b and np.any(n[:i_b] > m[:i_b]):
        bad = [i + 1 for i in range(i_b) if n[i] > m[i]]
        raise CouplingError(f"seed {seed}: n > m on arms {bad} at or below i_B={i_b}")
    return CoupledOutcome(greedy, learner, regret, source.seed)


def write_trace_csv(trace: RunTrace, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["round", "chosen_arm", "click", "remaining_budget_of_chosen", "reward_so_far"])
        for row in trace.rows():
            writer.writerow([repr(x) if isinstance(x, float) else x for x in row])


__all__ = [
    "CoupledOutcome", "CouplingError", "RunTrace", "extract_best_unexhausted",
    "extract_last_exhausted", "run_coupled", "run_policy", "write_trace_csv",
]
