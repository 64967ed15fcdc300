import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from relm.environment import ReplayWindow, SampleSpec, WindowError


def _tagged(period, n, labels=None):
    """States whose first coordinate records the period they were pushed at."""
    states = np.column_stack([np.full(n, float(period)), np.arange(n, dtype=float)])
    labels = np.arange(n) % 2 if labels is None else labels
    return states, labels


def test_push_into_empty_window():
    w = ReplayWindow()
    w.push_batch(*_tagged(0, 10), period=0)
    assert len(w) == 10 and w.current_period == 0


def test_period_regression_rejected():
    w = ReplayWindow()
    w.push_batch(*_tagged(3, 2), period=3)
    with pytest.raises(WindowError, match="period 2"):
        w.push_batch(*_tagged(2, 2), period=2)


def test_dimension_mismatch_rejected():
    w = ReplayWindow().push_batch(*_tagged(0, 4), period=0)
    with pytest.raises(WindowError, match="dimension"):
        w.push_batch(np.zeros((2, 3)), [0, 1], period=1)


def test_capacity_two_evicts_oldest():
    w = ReplayWindow(2)
    for p in range(3):
        w.push_batch(*_tagged(p, 5), period=p)
    assert w.periods == [1, 2]


def test_capacity_one_keeps_only_current():
    w = ReplayWindow(1)
    for p in range(4):
        w.push_batch(*_tagged(p, 3), period=p)
    assert w.periods == [3]


def test_evict_fresh_and_idempotent():
    w = ReplayWindow(3)
    w.push_batch(*_tagged(5, 4), period=5)
    w.evict_stale()
    assert len(w) == 4
    for p in range(6, 10):
        w.push_batch(*_tagged(p, 2), period=p)
    once = w.entries
    w.evict_stale().evict_stale()
    assert [(p, s.tolist(), y) for p, s, y in w.entries] == [(p, s.tolist(), y) for p, s, y in once]


def test_empty_window_sampling_fails():
    with pytest.raises(WindowError):
        ReplayWindow().sample_batch(SampleSpec(8))


def test_sample_spec_validation():
    with pytest.raises(WindowError):
        SampleSpec(0)
    with pytest.raises(WindowError):
        SampleSpec(8, new_fraction=1.5)


def test_single_period_fallback():
    w = ReplayWindow().push_batch(*_tagged(0, 6), period=0)
    s, _ = w.sample_batch(SampleSpec(8, 0.5, seed=1))
    assert len(s) == 8 and np.all(s[:, 0] == 0)


def test_new_fraction_statistics():
    w = ReplayWindow()
    w.push_batch(*_tagged(0, 100), period=0)
    w.push_batch(*_tagged(1, 100), period=1)
    s, _ = w.sample_batch(SampleSpec(10_000, 0.5, seed=3))
    assert np.mean(s[:, 0] == 1) == pytest.approx(0.5, abs=0.02)


def test_stratified_balance_on_skewed_labels():
    w = ReplayWindow()
    w.push_batch(*_tagged(0, 200, (np.arange(200) < 20).astype(int)), period=0)
    w.push_batch(*_tagged(1, 200, (np.arange(200) < 180).astype(int)), period=1)
    _, y = w.sample_batch(SampleSpec(2000, 0.5, stratify=True, seed=2))
    assert y.mean() == pytest.approx(0.5, abs=0.05)


def test_sampling_deterministic():
    w = ReplayWindow()
    w.push_batch(*_tagged(0, 30), period=0)
    w.push_batch(*_tagged(1, 30), period=1)
    a = w.sample_batch(SampleSpec(50, 0.3, seed=9))
    b = w.sample_batch(SampleSpec(50, 0.3, seed=9))
    np.testing.assert_array_equal(a[0], b[0])
    np.testing.assert_array_equal(a[1], b[1])


def test_replace_states_requires_raw():
    w = ReplayWindow().push_batch(*_tagged(0, 3), period=0)
    with pytest.raises(WindowError):
        w.replace_states(lambda raw: raw)
    w2 = ReplayWindow().push_batch(np.zeros((3, 2)), [0, 1, 0], 0, raw=np.ones((3, 4)))
    w2.replace_states(lambda raw: raw * 2)
    assert w2.dim == 4
    np.testing.assert_array_equal(w2.arrays()[0], np.full((3, 4), 2.0))


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 5), st.lists(st.tuples(st.integers(0, 2), st.integers(0, 12)), min_size=1,
                                   max_size=30), st.integers(0, 2**31))
def test_window_invariants(capacity, ops, seed):
    w = ReplayWindow(capacity)
    period = 0
    pushed = {}
    for step, n in ops:
        period += step
        states, labels = _tagged(period, n)
        w.push_batch(states, labels, period)
        pushed[period] = pushed.get(period, 0) + n
        assert w.current_period == period
        assert all(period - p < capacity for p, _, _ in w.entries)
        recent = sum(c for p, c in pushed.items() if period - p < capacity)
        assert len(w) == recent
        if len(w):
            spec = SampleSpec(1 + seed % 64, (seed % 11) / 10, bool(seed % 2), seed)
            s, y = w.sample_batch(spec)
            assert len(s) == len(y) == spec.batch_size
