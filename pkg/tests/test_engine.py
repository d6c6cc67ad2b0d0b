import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from budgeted_ads.analysis import empirical_regret, mean_and_se
from budgeted_ads.engine import (
    RunTrace, extract_best_unexhausted, extract_last_exhausted, run_coupled, run_policy,
    write_trace_csv,
)
from budgeted_ads.model import generate_instance
from budgeted_ads.policy import (
    PolicySpec, PolicyState, confidence_radius, empirical_ctr, select_baseline,
    select_budgeted_ucb, select_greedy,
)
from budgeted_ads.realization import ClickSource, Mode

from conftest import make_instance

GREEDY = PolicySpec("greedy")
UCB = PolicySpec("budgeted_ucb")


def stack(instance, seed=0):
    return ClickSource.for_instance(instance, seed, Mode.STACK)


def test_greedy_certain_clicks(two_arm):
    tr = run_policy(two_arm, GREEDY, stack(two_arm))
    assert tr.chosen.tolist() == [1, 1, 2, 2, 2]
    assert tr.impressions.tolist() == [2, 3]
    assert tr.total_reward == 5.0
    assert tr.exhausted == {1}
    assert tr.last_exhausted == 1


def test_greedy_never_clicked():
    inst = make_instance((0, 0), (2.5, 1), (3, 3), 4)
    tr = run_policy(inst, GREEDY, stack(inst))
    assert tr.chosen.tolist() == [1, 1, 1, 1]
    assert tr.total_reward == 0.0
    assert tr.exhausted == frozenset()
    assert tr.last_exhausted == 0


def test_single_arm_idles_after_budget():
    inst = make_instance((1,), (1,), (3,), 5)
    tr = run_policy(inst, UCB, stack(inst))
    assert tr.chosen.tolist() == [1, 1, 1, 0, 0]
    assert tr.idle_rounds == 2
    assert tr.total_reward == 3.0


def _trace_with(instance, clicks, remaining):
    k = instance.k
    return RunTrace(instance, GREEDY, 0, Mode.STACK, np.zeros(instance.horizon, np.int32),
                    np.zeros(instance.horizon, np.uint8), np.zeros(instance.horizon),
                    np.array(clicks), np.array(clicks), np.array(remaining, dtype=float),
                    np.zeros(k, np.int64), 0.0, None)


@pytest.mark.parametrize("exhausted,last,best", [
    ({1, 2}, 2, 3), (set(), 0, 1), ({3}, 3, 1), ({1}, 1, 2), ({1, 2, 3}, 3, 4),
])
def test_extractors(exhausted, last, best):
    inst = make_instance((0.5, 0.4, 0.3), (1, 1, 1), (5, 5, 5), 10)
    clicks = [5 if i in exhausted else 1 for i in (1, 2, 3)]
    remaining = [0.0 if i in exhausted else 4.0 for i in (1, 2, 3)]
    tr = _trace_with(inst, clicks, remaining)
    assert tr.exhausted == exhausted
    assert extract_last_exhausted(tr) == last
    assert extract_best_unexhausted(tr) == best


def test_unaffordable_arm_is_not_exhausted():
    # budget below one click from the start: never shown, never exhausted
    inst = make_instance((0.9, 0.5), (1, 1), (0.5, 10), 6)
    tr = run_policy(inst, GREEDY, stack(inst))
    assert tr.impressions.tolist() == [0, 6]
    assert tr.exhausted == frozenset()


def reference_run(instance, policy, source):
    """Plain-Python replay of the round loop using the policy module."""
    state = PolicyState.fresh(instance, policy.ucb_constant)
    T = instance.horizon
    chosen, istar, violations = [], [0] * instance.k, 0
    for t in range(1, T + 1):
        for i, est in enumerate(state.estimates):
            if est.impressions:
                nu = empirical_ctr(est.clicks, est.impressions)
                if abs(instance.ctr[i] - nu) > confidence_radius(est.impressions, T, policy.ucb_constant):
                    violations += 1
        avail = state.available()
        if policy.kind == "budgeted_ucb":
            a = select_budgeted_ucb(state, avail)
        elif policy.kind == "greedy":
            a = select_greedy(avail)
        else:
            a = select_baseline(policy.kind, avail, source.seed, t, policy.fixed_arm)
        chosen.append(a or 0)
        if a is None:
            continue
        istar[a - 1] = min(avail)
        est = state.estimates[a - 1]
        if source.mode is Mode.STACK:
            click = source.stack_click(a, est.impressions + 1)
        else:
            click = source.per_round_click(a, t)
        state.record(a, click)
    return chosen, istar, violations, state


@pytest.mark.parametrize("policy", [UCB, PolicySpec("budgeted_ucb", 0.2), GREEDY,
                                    PolicySpec("random_available"), PolicySpec("fixed_arm", 1.0, 2)])
@pytest.mark.parametrize("mode", list(Mode))
@pytest.mark.parametrize("seed", [0, 17])
def test_kernel_matches_reference(policy, mode, seed):
    inst = generate_instance({"family": "uniform", "k": 4, "horizon": 400, "B_lo": 1, "B_hi": 40}, seed)
    src = ClickSource.for_instance(inst, seed, mode)
    tr = run_policy(inst, policy, src)
    chosen, istar, violations, state = reference_run(inst, policy, src)
    assert tr.chosen.tolist() == chosen
    assert tr.istar.tolist() == istar
    assert tr.confidence_violations == violations
    assert tr.impressions.tolist() == [e.impressions for e in state.estimates]
    assert tr.remaining_budget.tolist() == [e.remaining_budget for e in state.estimates]


def test_run_policy_rejects_foreign_source(two_arm):
    other = make_instance((0.5, 0.5), (1, 1), (2, 10), 5)
    with pytest.raises(ValueError):
        run_policy(two_arm, UCB, stack(other))
    with pytest.raises(ValueError):
        run_policy(two_arm, UCB, stack(two_arm.with_horizon(6)))
    with pytest.raises(ValueError):
        run_policy(two_arm, PolicySpec("fixed_arm", 1.0, 3), stack(two_arm))


instances = st.builds(
    lambda k, T, hi, seed: generate_instance(
        {"family": "uniform", "k": k, "horizon": T, "B_lo": 0, "B_hi": hi}, seed),
    st.integers(1, 6), st.integers(1, 300), st.sampled_from([2.0, 20.0, 1e6]), st.integers(0, 10**6),
)


@settings(max_examples=150, deadline=None)
@given(instances, st.integers(0, 2**63), st.sampled_from([UCB, GREEDY, PolicySpec("random_available")]))
def test_trace_invariants(inst, seed, policy):
    tr = run_policy(inst, policy, stack(inst, seed))
    T = inst.horizon
    assert tr.impressions.sum() + tr.idle_rounds == T
    assert np.all(tr.click_counts <= tr.impressions)
    charged = tr.click_counts * inst.payment
    assert tr.total_reward == pytest.approx(charged.sum(), rel=1e-12, abs=1e-9)
    assert np.all(charged <= inst.budget * (1 + 1e-12))
    assert tr.remaining_budget == pytest.approx(inst.budget - charged, rel=1e-9, abs=1e-9)
    for t in range(T):
        if tr.chosen[t] == 0:
            assert tr.clicks[t] == 0


@settings(max_examples=150, deadline=None)
@given(instances, st.integers(0, 2**63))
def test_greedy_plays_in_canonical_order(inst, seed):
    tr = run_policy(inst, GREEDY, stack(inst, seed))
    played = [a for a in tr.chosen.tolist() if a]
    assert played == sorted(played)
    for j in set(played):
        first = tr.chosen.tolist().index(j)
        for i in range(1, j):
            # every better arm is already unaffordable when greedy moves on to j
            shown = int(np.count_nonzero(tr.chosen[:first] == i))
            spent = inst.payment[i - 1] * int(tr.clicks[:first][tr.chosen[:first] == i].sum())
            assert inst.budget[i - 1] - spent < inst.payment[i - 1] or shown == 0 and inst.budget[i - 1] < inst.payment[i - 1]


@settings(max_examples=150, deadline=None)
@given(instances, st.integers(0, 2**63))
def test_coupled_outcome_structure(inst, seed):
    o = run_coupled(inst, seed)
    m, n = o.greedy_trace.impressions, o.ucb_trace.impressions
    assert o.regret_sample == pytest.approx(float((m - n) @ inst.w), abs=1e-9 * inst.horizon)
    assert o.greedy_trace.seed == o.ucb_trace.seed == o.seed
    assert o.greedy_trace.mode is o.ucb_trace.mode is Mode.STACK
    i_b = o.last_exhausted
    assert np.all(n[:i_b] <= m[:i_b])
    assert m.sum() + o.greedy_trace.idle_rounds == inst.horizon


def test_single_arm_coupling_zero():
    inst = make_instance((0.4,), (2.0,), (30.0,), 300)
    for seed in range(50):
        o = run_coupled(inst, seed)
        assert o.regret_sample == 0.0
        assert o.greedy_trace.chosen.tolist() == o.ucb_trace.chosen.tolist()


def test_identical_arms_zero_regret():
    inst = make_instance((0.3,) * 4, (2.0,) * 4, (1e9,) * 4, 500)
    assert {run_coupled(inst, s).regret_sample for s in range(30)} == {0.0}


# frozen from tests/oracles/coupled_regret_oracle.py (independent numpy-drawn
# stacks, plain-Python greedy and BudgetedUCB, 1000 seeds)
ORACLE_MEAN = 13.737200000000001
ORACLE_SE = 0.1636898608055201


def test_coupled_regret_matches_oracle():
    inst = make_instance((0.9, 0.5), (1, 1), (1e6, 1e6), 2000)
    est = empirical_regret([run_coupled(inst, s, record_diagnostics=False) for s in range(1000)])
    assert abs(est.mean - ORACLE_MEAN) <= 3 * math.hypot(est.standard_error, ORACLE_SE)


def test_reward_identity_small():
    inst = make_instance((0.7, 0.4, 0.2), (1.0, 2.0, 3.0), (50, 60, 1e9), 300)
    diffs = []
    for s in range(2000):
        tr = run_policy(inst, UCB, ClickSource.for_instance(inst, s, Mode.PER_ROUND), False)
        diffs.append(tr.total_reward - tr.expected_value)
    mean, se = mean_and_se(diffs)
    assert abs(mean) <= 3 * se


def test_trace_csv(tmp_path, two_arm):
    tr = run_policy(two_arm, GREEDY, stack(two_arm))
    write_trace_csv(tr, tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "round,chosen_arm,click,remaining_budget_of_chosen,reward_so_far"
    assert lines[1:] == ["1,1,1,1.0,1.0", "2,1,1,0.0,2.0", "3,2,1,9.0,3.0",
                         "4,2,1,8.0,4.0", "5,2,1,7.0,5.0"]
