"""Regret estimates from coupled runs and explicit-constant regret bounds.

Conventions for the index of the last arm greedy exhausts (``i_B``):

* ``i_B = 0`` (nothing exhausted): the Theorem-1 style maximum ranges over
  ``{i_B, i_B + 1}`` clipped to ``[1, k]``, so only ``i = 1`` contributes.
* For the large-gap certificate ``i_B = 0`` maps to the first gap, and
  ``i_B = k`` needs no gap at all.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

from .engine import CoupledOutcome, RunTrace
from .model import ProblemInstance

DEFAULT_C_LOG = 8.0
DEFAULT_COR_A = 4.0
DEFAULT_COR_B = 8.0


@dataclass(frozen=True)
class RegretEstimate:
    mean: float
    standard_error: float
    replications: int
    horizon: int
    seeds: str = ""


def mean_and_se(samples: Sequence[float]) -> tuple[float, float]:
    """Sample mean and ``std(ddof=1) / sqrt(R)``; SE is 0 for a single sample."""
    x = np.asarray(samples, dtype=np.float64)
    if x.size == 0:
        raise ValueError("no samples")
    if x.size == 1:
        return float(x[0]), 0.0
    return float(x.mean()), float(x.std(ddof=1) / math.sqrt(x.size))


def empirical_regret(outcomes: Sequence[CoupledOutcome], seeds: str = "") -> RegretEstimate:
    if not outcomes:
        raise ValueError("empirical_regret needs at least one outcome")
    horizons = {o.greedy_trace.instance.horizon for o in outcomes}
    if len(horizons) != 1:
        raise ValueError("outcomes mix horizons")
    mean, se = mean_and_se([o.regret_sample for o in outcomes])
    return RegretEstimate(mean, se, len(outcomes), horizons.pop(), seeds)


def ib_histogram(values: Iterable[int], k: int) -> list[int]:
    """Counts of ``i_B`` over ``0..k``."""
    hist = [0] * (k + 1)
    for v in values:
        hist[v] += 1
    return hist


def _probabilities(hist: Sequence[float], k: int) -> np.ndarray:
    p = np.asarray(hist, dtype=np.float64)
    if p.shape != (k + 1,):
        raise ValueError(f"i_B histogram must have k+1={k + 1} bins")
    if np.any(p < 0) or p.sum() <= 0:
        raise ValueError("i_B histogram must be non-negative with positive mass")
    return p / p.sum()


def theorem1_inner(instance: ProblemInstance, i: int, epsilon: float) -> float:
    """``sum_{j>i} b_j^2 / max(eps, w_i - w_j)`` for canonical ``1 <= i <= k``."""
    w, b = instance.w, instance.payment
    return float(sum(b[j] ** 2 / max(epsilon, w[i - 1] - w[j]) for j in range(i, instance.k)))


def theorem1_rhs(instance: ProblemInstance, ib_hist: Sequence[float], epsilon: float,
                 c_log: float = DEFAULT_C_LOG) -> float:
    """``eps*T + c_log*ln T * E[max_{i in {i_B, i_B+1}} inner(i)]``."""
    if not epsilon > 0:
        raise ValueError("epsilon must be > 0")
    k, T = instance.k, instance.horizon
    p = _probabilities(ib_hist, k)
    expected = 0.0
    for ib in range(k + 1):
        if p[ib] == 0:
            continue
        terms = [theorem1_inner(instance, i, epsilon) for i in (ib, ib + 1) if 1 <= i <= k]
        expected += float(p[ib]) * max(terms)
    return epsilon * T + c_log * math.log(T) * expected


def footnote_epsilon(instance: ProblemInstance) -> float:
    """``sqrt(ln T / (k T))``, or ``1/T`` when ``T = 1`` makes that zero."""
    T = instance.horizon
    eps = math.sqrt(math.log(T) / (instance.k * T))
    return eps if eps > 0 else 1.0 / T


def corollary_a_bound(instance: ProblemInstance, c: float = DEFAULT_COR_A) -> float:
    T = instance.horizon
    v = math.sqrt(instance.stats.v_squared)
    return c * v * math.sqrt(instance.k * T * math.log(T))


def corollary_b_bound(instance: ProblemInstance, delta: float, c: float = DEFAULT_COR_B) -> float:
    if not delta > 0:
        raise ValueError("delta must be > 0")
    if math.isinf(delta):
        return 0.0
    return c * instance.k / delta * instance.stats.v_squared * math.log(instance.horizon)


def gap_at_ib(instance: ProblemInstance, ib: int) -> float:
    """Gap after arm ``i_B``; ``i_B = 0`` reads the first gap, ``i_B = k`` is unconstrained."""
    k = instance.k
    i = max(ib, 1)
    if i >= k:
        return math.inf
    return instance.stats.gaps[i - 1]


def certify_delta(instance: ProblemInstance, ib_hist: Sequence[float]) -> float | None:
    """Largest ``delta`` with ``P[gap(i_B) >= delta] >= 1 - (v/T)^2`` under ``ib_hist``.

    Returns None when no positive ``delta`` qualifies.
    """
    p = _probabilities(ib_hist, instance.k)
    allowance = instance.stats.v_squared / instance.horizon ** 2
    masses: dict[float, float] = {}
    for ib, q in enumerate(p):
        if q > 0:
            g = gap_at_ib(instance, ib)
            masses[g] = masses.get(g, 0.0) + q
    dropped = 0.0
    for g in sorted(masses):
        if dropped + masses[g] > allowance:
            return g if g > 0 else None
        dropped += masses[g]
    return math.inf


@dataclass(frozen=True)
class BoundReport:
    theorem1_rhs: float
    corollary_a: float
    corollary_b: float | None
    epsilon: float
    delta: float | None
    ib_histogram: tuple[int, ...]
    constants: Mapping[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "theorem1_rhs": self.theorem1_rhs,
            "corollary_a": self.corollary_a,
            "corollary_b": self.corollary_b,
            "epsilon": self.epsilon,
            "delta": None if self.delta is None else (
                "inf" if math.isinf(self.delta) else self.delta),
            "ib_histogram": list(self.ib_histogram),
            "constants": dict(self.constants),
        }


def bound_report(instance: ProblemInstance, ib_hist: Sequence[int], c_log: float = DEFAULT_C_LOG,
                 cor_a: float = DEFAULT_COR_A, cor_b: float = DEFAULT_COR_B) -> BoundReport:
    eps = footnote_epsilon(instance)
    delta = certify_delta(instance, ib_hist)
    return BoundReport(
        theorem1_rhs(instance, ib_hist, eps, c_log),
        corollary_a_bound(instance, cor_a),
        None if delta is None else corollary_b_bound(instance, delta, cor_b),
        eps,
        delta,
        tuple(int(x) for x in ib_hist),
        {"c_log": c_log, "cor_a": cor_a, "cor_b": cor_b},
    )


@dataclass(frozen=True)
class LemmaCheck:
    passed: bool
    slack: float
    lhs: float
    rhs: float
    i_a: int
    i_b: int


def check_coupling_lemma(outcome: CoupledOutcome, rel_tol: float = 1e-9) -> LemmaCheck:
    """``(m-n).w <= sum_{j > max(i_A,i_B)} n_j (w_{i_A} - w_j)`` and ``i_A <= i_B + 1``.

    The inequality is allowed ``rel_tol * T`` of float slack.  When every arm is
    exhausted (``i_A = k + 1``) the right-hand side is the empty sum.
    """
    instance = outcome.ucb_trace.instance
    k, T, w = instance.k, instance.horizon, instance.w
    n = outcome.ucb_trace.impressions
    i_a, i_b = outcome.best_unexhausted, outcome.last_exhausted
    w_a = w[i_a - 1] if i_a <= k else 0.0
    start = max(i_a, i_b)
    rhs = float(sum(n[j] * (w_a - w[j]) for j in range(start, k)))
    lhs = outcome.regret_sample
    ok = lhs <= rhs + rel_tol * T and i_a <= i_b + 1
    return LemmaCheck(bool(ok), rhs - lhs, lhs, rhs, i_a, i_b)


def ucb_trick_threshold(payment: float, gap: float, ucb_constant: float, horizon: int) -> float:
    """``4 C^2 b^2 ln T / gap^2``."""
    return 4.0 * ucb_constant ** 2 * payment ** 2 * math.log(horizon) / gap ** 2


def check_ucb_trick(trace: RunTrace, instance: ProblemInstance | None = None,
                    ucb_constant: float | None = None) -> dict[int, bool]:
    """Per-arm check of ``n_j`` against the threshold at ``gap = w_{i*_j} - w_j``.

    Only arms that were shown, whose ``i*_j`` differs from ``j`` and sits
    strictly higher in value are checked; the result maps those arms to
    pass/fail.  Meaningful only for runs with zero confidence violations.
    """
    if trace.confidence_violations is None:
        raise ValueError("trace was recorded without diagnostics")
    instance = instance or trace.instance
    C = trace.policy.ucb_constant if ucb_constant is None else ucb_constant
    w, b, T = instance.w, instance.payment, instance.horizon
    out = {}
    for j in range(1, instance.k + 1):
        nj, star = int(trace.impressions[j - 1]), int(trace.istar[j - 1])
        if nj == 0 or star == j or star == 0:
            continue
        g = w[star - 1] - w[j - 1]
        if g <= 0:
            continue
        out[j] = nj <= ucb_trick_threshold(b[j - 1], g, C, T)
    return out


@dataclass(frozen=True)
class ConfidenceReport:
    violation_rate: float
    runs: int
    target: float


def check_confidence_event(traces: Sequence[RunTrace], ucb_constant: float | None = None,
                           horizon: int | None = None) -> ConfidenceReport:
    """Fraction of runs with any ``|mu - nu| > r``; reported next to ``1/T``."""
    if not traces:
        raise ValueError("no traces")
    if any(t.confidence_violations is None for t in traces):
        raise ValueError("trace was recorded without diagnostics")
    if ucb_constant is not None and any(t.policy.ucb_constant != ucb_constant for t in traces):
        raise ValueError("traces were run with a different ucb_constant")
    T = horizon or traces[0].instance.horizon
    bad = sum(1 for t in traces if t.confidence_violations > 0)
    return ConfidenceReport(bad / len(traces), len(traces), 1.0 / T)
