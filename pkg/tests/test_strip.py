import numpy as np
from hypothesis import given, strategies as st

from umeit.strip import advance_intervals, characteristic_speeds, intersect_intervals, runs_from_mask


@st.composite
def interval_lists(draw):
    pts = sorted(draw(st.lists(st.floats(0, 100, allow_nan=False), min_size=0, max_size=8, unique=True)))
    pts = pts[: len(pts) // 2 * 2]
    return [(pts[i], pts[i + 1]) for i in range(0, len(pts), 2)]


def _covered(ivs, x):
    return any(lo - 1e-9 <= x <= hi + 1e-9 for lo, hi in ivs)


@given(interval_lists(), interval_lists(), st.lists(st.floats(0, 100), max_size=20))
def test_intersection_is_pointwise_and(a, b, probes):
    c = intersect_intervals(a, b)
    assert c == intersect_intervals(b, a)
    for x in probes:
        assert _covered(c, x) == (_covered(a, x) and _covered(b, x))


@given(interval_lists())
def test_intersection_with_full_ring(a):
    assert intersect_intervals(None, a) == a
    assert intersect_intervals(a, None) == a


@given(st.lists(st.booleans(), min_size=3, max_size=40), st.booleans())
def test_runs_rebuild_mask(bits, periodic):
    mask = np.array(bits)
    runs = runs_from_mask(mask, periodic)
    if runs is None:
        assert periodic and mask.all()
        return
    back = np.zeros_like(mask)
    for lo, hi in runs:
        back[np.arange(int(lo), int(hi) + 1) % mask.size] = True
    np.testing.assert_array_equal(back, mask)


@given(st.floats(-2, 2), st.floats(0.0, 2.0), st.floats(0.01, 0.5))
def test_advance_never_grows(lo_speed, width, step):
    n = 50
    lam_lo = np.full(n, lo_speed - width)
    lam_hi = np.full(n, lo_speed + width)
    ivs = [(5.0, 44.0)]
    out = advance_intervals(ivs, lam_lo, lam_hi, np.zeros(n, bool), step, n, False)
    for lo, hi in out:
        assert lo >= 5.0 and hi <= 44.0


def test_advance_splits_at_bad_cells():
    n = 30
    bad = np.zeros(n, bool)
    bad[15] = True
    out = advance_intervals([(0.0, 29.0)], np.zeros(n), np.zeros(n), bad, 0.1, n, False)
    assert out == [(0.0, 14.0), (16.0, 29.0)]


def test_wave_speeds():
    lo, hi = characteristic_speeds(np.array([1.0, 2.0]), np.array([0.0, 1.0]), np.array([-1.0, 0.0]))
    np.testing.assert_allclose(lo, [-1.0, 0.0])
    np.testing.assert_allclose(hi, [1.0, 1.0])
    lo, _ = characteristic_speeds(np.array([1.0]), np.array([0.0]), np.array([1.0]))
    assert np.isnan(lo).all()
