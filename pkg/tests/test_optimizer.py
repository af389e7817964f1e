import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from conftest import brute_force_knapsack
from oswitch.optimizer import KnapsackInstance, KnapsackItem, build_instance, solve


def items(ws, values=None):
    values = ws if values is None else values
    return tuple(KnapsackItem(i, w, v) for i, (w, v) in enumerate(zip(ws, values)))


def test_build_instance_rounding():
    inst = build_instance(198.7, 0.2, {0: 60.2, 1: 99.9})
    assert inst.capacity == 158
    assert [it.weight for it in inst.items] == [61, 100]
    assert build_instance(198.7, 0.0, {}).capacity == 198
    assert build_instance(300, 0.1, {0: 5, 1: 6}, eligible=[]).items == ()
    with pytest.raises(ValueError):
        build_instance(100, 1.0, {})


def test_zero_draw_outlet_gets_weight_one_value_zero():
    (it,) = build_instance(100, 0, {4: 0.0}).items
    assert (it.weight, it.value) == (1, 0)


def test_solve_examples():
    assert solve(KnapsackInstance(0, items([3, 4]))).selected == frozenset()
    sol = solve(KnapsackInstance(7, tuple(KnapsackItem(w, w, w) for w in (3, 4, 5))))
    assert sol.total_value == 7 and sol.selected == {3, 4}
    assert solve(KnapsackInstance(10)).total_value == 0


def test_instance_validation():
    with pytest.raises(ValueError):
        KnapsackInstance(-1)
    with pytest.raises(ValueError):
        KnapsackInstance(5, (KnapsackItem(0, 0, 0),))
    with pytest.raises(ValueError):
        KnapsackInstance(5, (KnapsackItem(0, 1, 1), KnapsackItem(0, 2, 2)))


def test_keep_breaks_ties_toward_current_pv():
    inst = KnapsackInstance(5, items([5, 5]))
    assert solve(inst).selected == {0}
    assert solve(inst, keep={1}).selected == {1}


def test_zero_value_items_are_not_kept():
    inst = build_instance(50, 0, {0: 0.0, 1: 40.0})
    assert solve(inst, keep={0, 1}).selected == {1}


@settings(max_examples=200)
@given(st.lists(st.integers(1, 30), max_size=10), st.integers(0, 100), st.data())
def test_matches_exhaustive_search(ws, cap, data):
    vals = data.draw(st.lists(st.integers(0, 40), min_size=len(ws), max_size=len(ws)))
    keep = data.draw(st.sets(st.integers(0, max(len(ws) - 1, 0))))
    best, optimal = brute_force_knapsack(ws, vals, cap)
    sol = solve(KnapsackInstance(cap, items(ws, vals)), keep=keep)
    assert sol.total_value == best
    assert sol.total_weight <= cap
    assert tuple(sorted(sol.selected)) in optimal
    assert sol.total_weight == sum(ws[i] for i in sol.selected)


@given(st.dictionaries(st.integers(0, 9), st.floats(0, 400), max_size=8), st.floats(0, 800),
       st.floats(0, 0.95), st.floats(0, 0.95))
def test_capacity_monotone_in_margin(readings, production, m1, m2):
    lo, hi = sorted((m1, m2))
    a = solve(build_instance(production, lo, readings))
    b = solve(build_instance(production, hi, readings))
    assert b.total_weight <= build_instance(production, hi, readings).capacity
    assert b.total_value <= a.total_value
    assert sum(readings[o] for o in b.selected) <= production * (1 - hi) + 1e-9


def test_table_bound_is_small():
    rng = np.random.default_rng(0)
    readings = {i: float(rng.uniform(1, 200)) for i in range(40)}
    sol = solve(build_instance(800, 0, readings))
    assert 790 <= sol.total_value <= 800
