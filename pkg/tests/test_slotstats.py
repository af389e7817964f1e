import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from sklearn.base import clone

from oswitch.slotstats import ColdStart, SlotStatistics, slot_of


def test_slot_of():
    assert slot_of(0) == 0
    assert slot_of(1800) == 1
    assert slot_of(86399) == 47
    assert slot_of(86400 + 1800) == 1
    assert list(slot_of(np.array([0, 3600, 7200]), 24)) == [0, 1, 2]
    with pytest.raises(ValueError):
        slot_of(0, 0)


def test_record_examples():
    s = SlotStatistics()
    for _ in range(3):
        s.record(0, 60, 100)
    assert s.mean_[0, 0] == 100 and s.variance_[0, 0] == 0
    s = SlotStatistics().record(0, 0, 90).record(0, 10, 110)
    assert s.mean_[0, 0] == 100 and s.variance_[0, 0] == pytest.approx(100)
    s = SlotStatistics().record(0, 600, 5).record(0, 2400, 7)
    assert s.count_[0, 0] == 1 and s.count_[0, 1] == 1
    with pytest.raises(ValueError):
        s.record(0, 0, -1)


def test_metric_examples():
    s = SlotStatistics().record(0, 0, 80).record(0, 0, 120)
    assert s.metric(0, 0) == pytest.approx(400)
    assert s.metric(0, 0, "variance_over_mean") == pytest.approx(4.0)
    dead = SlotStatistics().record(0, 0, 0).record(0, 1, 0)
    assert dead.metric(0, 0, "variance_over_mean") == 0
    with pytest.raises(ColdStart):
        s.metric(0, 5)
    with pytest.raises(ColdStart):
        s.metric(3, 0)
    with pytest.raises(ValueError):
        s.metric_table("median")


def test_cold_cells_are_nan():
    s = SlotStatistics().record(1, 0, 10)
    table = s.metric_table("variance_over_mean")
    assert np.isnan(table[0, 0]) and np.isnan(table[1, 3]) and table[1, 0] == 0


def two_pass(times, outlets, watts, slots=48):
    """Oracle: mean and population variance grouped by (outlet, slot) with numpy."""
    cells = {}
    for t, o, w in zip(times, outlets, watts):
        cells.setdefault((o, slot_of(t, slots)), []).append(w)
    return {k: (np.mean(v), np.var(v)) for k, v in cells.items()}


obs = st.lists(st.tuples(st.floats(0, 3 * 86400), st.integers(0, 3), st.floats(0, 3000)),
               min_size=1, max_size=60)


@settings(max_examples=60)
@given(obs, st.randoms(use_true_random=False))
def test_order_and_chunking_do_not_matter(rows, rnd):
    t, o, w = map(list, zip(*rows))
    oracle = two_pass(t, o, w)
    X = np.column_stack([t, o])
    batch = SlotStatistics().fit(X, w)
    perm = list(range(len(rows)))
    rnd.shuffle(perm)
    single = SlotStatistics()
    for i in perm:
        single.record(o[i], t[i], w[i])
    cut = rnd.randint(0, len(rows))
    a = SlotStatistics().fit(X[:cut], w[:cut])
    b = SlotStatistics().fit(X[cut:], w[cut:])
    merged = a.merge(b)
    for s in (batch, single, merged):
        for (oo, sl), (m, v) in oracle.items():
            assert s.mean_[oo, sl] == pytest.approx(m, rel=1e-9, abs=1e-6)
            assert s.variance_[oo, sl] == pytest.approx(v, rel=1e-6, abs=1e-4)
        assert s.count_.sum() == len(rows)


@settings(max_examples=30)
@given(st.integers(1, 3), st.integers(1, 400), st.sampled_from([1.0, 7.5, 60.0]),
       st.floats(0, 86400), st.integers(0, 2**31))
def test_series_equals_rowwise(n_out, n, dt, t0, seed):
    vals = np.random.default_rng(seed).uniform(0, 500, size=(n_out, n))
    a = SlotStatistics().partial_fit_series(t0, dt, vals)
    times = np.repeat((t0 + dt * np.arange(n) + 1e-9)[None, :], n_out, axis=0)
    outlets = np.repeat(np.arange(n_out)[:, None], n, axis=1)
    b = SlotStatistics().fit(np.column_stack([times.ravel(), outlets.ravel()]), vals.ravel())
    assert np.array_equal(a.count_, b.count_)
    assert np.allclose(a.mean_, b.mean_)
    assert np.allclose(a.m2_, b.m2_, rtol=1e-7, atol=1e-5)


def test_estimator_api():
    s = SlotStatistics(slots_per_day=24)
    assert clone(s).get_params() == {"slots_per_day": 24, "n_outlets": None}
    s.fit([[0, 0], [3600, 1]], [5, 6])
    out = s.transform([[0, 0], [3600, 1]])
    assert out.shape == (2, 2) and out[1, 0] == 6
    with pytest.raises(ValueError):
        s.partial_fit([[0, 0]], [-1])
    with pytest.raises(ValueError):
        SlotStatistics(slots_per_day=48).merge(s)
