"""Poisson point tools: splicing and the memorylessness facts behind it."""

import math

import numpy as np
import pytest

from branch_contour import RngStream, last_point_before, poisson_points, splice
from branch_contour.stats import ks_critical_value, ks_two_sample

CRIT_LEVEL = 1e-3


def test_points_land_in_window():
    rng = RngStream(seed=1, stream_id=0)
    pts = poisson_points(3.0, 10.0, rng)
    assert (pts > 0).all() and (pts <= 10.0).all()
    assert (np.diff(pts) > 0).all()


def test_point_count_mean():
    rng = RngStream(seed=2, stream_id=0)
    counts = [len(poisson_points(2.0, 5.0, rng)) for _ in range(4000)]
    mean = np.mean(counts)
    se = math.sqrt(10.0 / 4000)  # Poisson(10) count variance
    assert abs(mean - 10.0) < 5 * se


def test_gaps_are_exponential():
    rng = RngStream(seed=3, stream_id=0)
    pts = poisson_points(1.5, 4000.0, rng)
    gaps = np.diff(pts)
    ref = RngStream(seed=3, stream_id=1).exponential(1.5, size=len(gaps))
    res = ks_two_sample(gaps, ref)
    assert res.statistic < res.critical_value(CRIT_LEVEL)


def test_last_point_before():
    pts = np.array([0.4, 1.1, 2.0])
    assert last_point_before(pts, 1.5) == (1.1, 2)
    assert last_point_before(pts, 2.0) == (2.0, 3)   # points exactly at m count
    assert last_point_before(pts, 0.3) == (0.0, 0)
    assert last_point_before(np.array([]), 1.0) == (0.0, 0)


def test_splice_worked_example():
    """Keep strictly-before-R_M points, then restart the stream at R_M."""
    pts = np.array([1.0, 2.0, 3.0])
    out = splice(pts, 2.5, np.array([0.4, 0.9]))
    # R_M = 2.0 is dropped: the first regenerated gap must start from R_M itself,
    # otherwise the gap straddling m would be counted twice.
    assert np.array_equal(out, np.array([1.0, 2.4, 2.9]))


def test_splice_without_prior_points():
    out = splice(np.array([5.0]), 2.0, np.array([0.25]))
    assert np.array_equal(out, np.array([0.25]))


def test_splice_validation():
    with pytest.raises(ValueError):
        splice(np.array([2.0, 1.0]), 1.5, np.array([0.5]))
    with pytest.raises(ValueError):
        splice(np.array([1.0]), -1.0, np.array([0.5]))
    with pytest.raises(ValueError):
        splice(np.array([1.0]), 2.0, np.array([-0.5]))
    # m = 0 keeps nothing and passes fresh through untouched
    assert np.array_equal(splice(np.array([1.0]), 0.0, np.array([0.5])),
                          np.array([0.5]))


def test_overshoot_is_truncated_exponential():
    """m - R_M matches an independent Exp(rate) capped at m."""
    rate, m, reps = 1.2, 1.0, 6000
    rng = RngStream(seed=4, stream_id=0)
    overshoot = np.empty(reps)
    for i in range(reps):
        pts = poisson_points(rate, m, rng)
        r, _ = last_point_before(pts, m)
        overshoot[i] = m - r
    ref_rng = RngStream(seed=4, stream_id=1)
    ref = np.minimum(ref_rng.exponential(rate, size=reps), m)
    res = ks_two_sample(overshoot, ref)
    assert res.statistic < ks_critical_value(reps, reps, CRIT_LEVEL)


def test_spliced_stream_is_poisson():
    """Gap laws and prefix independence of the spliced stream."""
    rate, m, reps = 1.0, 1.5, 6000
    rng = RngStream(seed=5, stream_id=0)
    fresh_rng = RngStream(seed=5, stream_id=1)
    first_gap = np.empty(reps)
    second_gap = np.empty(reps)
    restart = np.empty(reps)
    for i in range(reps):
        pts = poisson_points(rate, m + 30.0, rng)
        fresh = poisson_points(rate, 40.0, fresh_rng)
        out = splice(pts, m, fresh)
        first_gap[i] = out[0]
        second_gap[i] = out[1] - out[0]
        restart[i] = last_point_before(pts, m)[0]
    ref_rng = RngStream(seed=5, stream_id=2)
    for gaps in (first_gap, second_gap):
        res = ks_two_sample(gaps, ref_rng.exponential(rate, size=reps))
        assert res.statistic < ks_critical_value(reps, reps, CRIT_LEVEL)
    # splice point and first regenerated arrival are uncorrelated
    rho = np.corrcoef(restart, first_gap)[0, 1]
    assert abs(rho) < 4.0 / math.sqrt(reps)


def test_splice_keeps_prefix_bitwise():
    rng = RngStream(seed=6, stream_id=0)
    pts = poisson_points(2.0, 8.0, rng)
    fresh = poisson_points(2.0, 8.0, rng)
    m = 4.0
    out = splice(pts, m, fresh)
    r, k = last_point_before(pts, m)
    kept = pts[: max(k - 1, 0)]
    assert np.array_equal(out[: len(kept)], kept)
    assert np.allclose(out[len(kept):], r + fresh)
