import math
from collections import Counter

import pytest
from hypothesis import given
from hypothesis import strategies as st

from budgeted_ads.policy import (
    ArmEstimate, PolicySpec, PolicyState, argmax_available, confidence_radius, empirical_ctr,
    is_available, select_baseline, select_budgeted_ucb, select_greedy, ucb_index,
)

from conftest import make_instance


def test_confidence_radius_examples():
    assert confidence_radius(35, math.exp(9), 2.0) == pytest.approx(1.0)
    assert confidence_radius(7, 1, 1.0) == 0.0
    assert confidence_radius(0, math.exp(4), 1.0) == pytest.approx(2.0)


@given(st.integers(0, 10**6), st.integers(2, 10**7), st.floats(0.01, 100))
def test_radius_strictly_decreasing(n, T, C):
    assert confidence_radius(n + 1, T, C) < confidence_radius(n, T, C)


@pytest.mark.parametrize("c,n,expected", [(3, 10, 0.3), (0, 0, 0.0), (5, 5, 1.0)])
def test_empirical_ctr(c, n, expected):
    assert empirical_ctr(c, n) == expected


def test_empirical_ctr_contract():
    with pytest.raises(ValueError):
        empirical_ctr(4, 3)


def test_ucb_index_examples():
    assert ucb_index(2, 0.3, 0.2) == pytest.approx(1.0)
    assert ucb_index(1, 0.0, 0.0) == 0.0
    # above b * 1: the index is not clipped
    assert ucb_index(0.5, 0.9, 0.4) == pytest.approx(0.65)


@given(st.floats(0.01, 100), st.floats(0, 1), st.floats(0, 10), st.floats(1e-3, 1))
def test_index_monotone(b, nu, r, d):
    assert ucb_index(b, nu, r + d) > ucb_index(b, nu, r)
    assert ucb_index(b, nu + d, r) > ucb_index(b, nu, r)


def test_argmax_examples():
    idx = [0.5, 0.9, 0.9]
    assert argmax_available(idx, {2, 3}) == 2
    assert argmax_available(idx, set()) is None
    assert argmax_available(idx, {3}) == 3


@given(st.lists(st.floats(0, 10), min_size=1, max_size=8), st.data(), st.floats(0.01, 100))
def test_argmax_scale_invariant(idx, data, s):
    avail = data.draw(st.sets(st.integers(1, len(idx))))
    scaled = [s * x for x in idx]
    if len({s * x for x in idx}) == len(set(idx)):
        assert argmax_available(scaled, avail) == argmax_available(idx, avail)


def test_select_greedy():
    assert select_greedy({2, 3}) == 2
    assert select_greedy({1, 2, 3}) == 1
    assert select_greedy(set()) is None


@pytest.mark.parametrize("rem,b,expected", [(1.0, 1.0, True), (0.5, 1.0, False), (0.0, 0.1, False)])
def test_is_available(rem, b, expected):
    assert is_available(rem, b) is expected


@given(st.floats(0, 1e6), st.floats(0, 1e6), st.floats(1e-3, 1e3))
def test_is_available_monotone(x, extra, b):
    if is_available(x, b):
        assert is_available(x + extra, b)


def test_fixed_arm_baseline():
    assert select_baseline("fixed_arm", {1, 3}, fixed_arm=2) is None
    assert select_baseline("fixed_arm", {2}, fixed_arm=2) == 2
    with pytest.raises(ValueError):
        select_baseline("thompson", {1})


def test_random_available_uniform():
    counts = Counter(select_baseline("random_available", {1, 2, 3}, seed=9, round_=t)
                     for t in range(1, 30_001))
    for arm in (1, 2, 3):
        assert counts[arm] / 30_000 == pytest.approx(1 / 3, abs=0.01)
    assert select_baseline("random_available", set(), seed=9) is None


def test_cold_start_picks_largest_payment():
    inst = make_instance((0.1, 0.9, 0.2, 0.6), (3.0, 1.0, 3.0, 2.0), (10, 10, 10, 10), 100)
    state = PolicyState.fresh(inst, ucb_constant=1.0)
    expected = [b * math.sqrt(math.log(100)) for b in inst.payment]
    assert state.indices() == pytest.approx(expected)
    top = max(inst.payment)
    first_top = min(i for i in range(1, 5) if inst.payment[i - 1] == top)
    assert select_budgeted_ucb(state, state.available()) == first_top


def test_policy_state_updates():
    inst = make_instance((0.5,), (2.0,), (5.0,), 10)
    state = PolicyState.fresh(inst)
    state.record(1, 1)
    state.record(1, 0)
    est = state.estimates[0]
    assert (est.impressions, est.clicks, est.remaining_budget) == (2, 1, 3.0)
    state.record(1, 1)
    assert state.available() == set()


@given(st.lists(st.tuples(st.integers(0, 50), st.integers(0, 50)), min_size=1, max_size=6),
       st.integers(2, 10_000))
def test_reduces_to_classic_index_with_unit_payments(counts, T):
    ests = [ArmEstimate(n + c, c, 1e12) for n, c in counts]
    state = PolicyState([1.0] * len(ests), 1.0, T, ests)
    avail = set(range(1, len(ests) + 1))
    chosen = select_budgeted_ucb(state, avail)
    classic = [
        (e.clicks / e.impressions if e.impressions else 0.0)
        + math.sqrt(math.log(T) / (1 + e.impressions))
        for e in ests
    ]
    assert classic[chosen - 1] == max(classic)


def test_policy_spec_parse():
    assert PolicySpec.parse("fixed_arm:2") == PolicySpec("fixed_arm", 1.0, 2)
    assert PolicySpec.parse("budgeted_ucb", 10).ucb_constant == 10
    for bad in ("fixed_arm", "greedy:3", "nope"):
        with pytest.raises(ValueError):
            PolicySpec.parse(bad)
    with pytest.raises(ValueError):
        PolicySpec("budgeted_ucb", 0.0)
