"""KS and chi-square helpers, moment summaries, sample pools."""

import math

import numpy as np
import pytest
import scipy.stats

from branch_contour import (
    OffspringLaw,
    RngStream,
    SamplePool,
    chi2_gof,
    ks_critical_value,
    ks_two_sample,
    moments_with_se,
)


def ecdf_statistic(a, b):
    """Brute-force sup |F_a - F_b| over all pooled points."""
    pooled = np.concatenate([a, b])
    d = 0.0
    for x in pooled:
        fa = np.mean(a <= x)
        fb = np.mean(b <= x)
        d = max(d, abs(fa - fb))
    return d


def test_ks_worked_example():
    res = ks_two_sample([1.0, 2.0, 3.0], [1.5, 2.5, 3.5])
    assert res.statistic == pytest.approx(1.0 / 3.0)
    assert res.n == 3 and res.m == 3


def test_ks_extremes():
    same = ks_two_sample([1.0, 2.0], [1.0, 2.0])
    assert same.statistic == 0.0
    apart = ks_two_sample([0.0, 1.0], [5.0, 6.0])
    assert apart.statistic == 1.0


def test_ks_matches_brute_force():
    rng = RngStream(seed=21, stream_id=0)
    for trial in range(20):
        a = rng.uniform(size=int(rng.integers(40) + 5))
        b = rng.uniform(size=int(rng.integers(40) + 5)) ** 2
        res = ks_two_sample(a, b)
        assert res.statistic == pytest.approx(ecdf_statistic(a, b), abs=1e-14)


def test_ks_handles_ties():
    a = np.array([1.0, 1.0, 1.0, 2.0])
    b = np.array([1.0, 2.0, 2.0, 2.0])
    # F_a(1)=3/4, F_b(1)=1/4; F at 2 equal
    res = ks_two_sample(a, b)
    assert res.statistic == pytest.approx(0.5)


def test_ks_symmetric_and_rank_invariant():
    rng = RngStream(seed=22, stream_id=0)
    a = rng.normal(size=80)
    b = rng.normal(size=120) * 1.5
    d1 = ks_two_sample(a, b).statistic
    assert ks_two_sample(b, a).statistic == d1
    assert ks_two_sample(np.exp(a), np.exp(b)).statistic == pytest.approx(d1, abs=1e-15)


def test_ks_against_scipy():
    rng = RngStream(seed=23, stream_id=0)
    a = rng.exponential(1.0, size=500)
    b = rng.exponential(1.3, size=700)
    ours = ks_two_sample(a, b)
    ref = scipy.stats.ks_2samp(a, b, method="asymp")
    assert ours.statistic == pytest.approx(ref.statistic, abs=1e-12)
    # scipy's asymp p applies a finite-sample correction to the series argument;
    # ours is the plain limit law, so agreement is approximate
    assert ours.pvalue == pytest.approx(ref.pvalue, rel=0.25)
    assert scipy.stats.kstwobign.sf(
        ours.statistic * math.sqrt(500 * 700 / 1200)) == pytest.approx(ours.pvalue, rel=1e-10)


def test_ks_critical_value_matches_asymptotic_level():
    # crossing the critical value should push the asymptotic p below the level
    n, m = 4000, 5000
    crit = ks_critical_value(n, m, alpha=1e-3)
    assert crit == pytest.approx(math.sqrt(-0.5 * math.log(5e-4)) * math.sqrt((n + m) / (n * m)), rel=1e-12)
    just_above = ks_two_sample(np.linspace(0, 1, n), np.linspace(0, 1, m) + crit * 1.05)
    assert just_above.pvalue < 1e-3


def test_chi2_accepts_true_law():
    law = OffspringLaw({1: 0.5, 3: 0.5})
    rng = RngStream(seed=24, stream_id=0)
    draws = law.sample(rng, 10000)
    counts = {1: int((draws == 1).sum()), 3: int((draws == 3).sum())}
    res = chi2_gof(counts, law)
    assert res.dof == 1
    assert res.pvalue > 1e-3


def test_chi2_rejects_wrong_law():
    rng = RngStream(seed=25, stream_id=0)
    draws = OffspringLaw({1: 0.5, 3: 0.5}).sample(rng, 10000)
    counts = {1: int((draws == 1).sum()), 3: int((draws == 3).sum())}
    res = chi2_gof(counts, OffspringLaw({1: 0.8, 3: 0.2}))
    assert res.pvalue < 1e-10


def test_chi2_single_cell_is_vacuous():
    res = chi2_gof({2: 500}, OffspringLaw.deterministic(2))
    assert res.vacuous
    assert res.dof == 0 and res.pvalue == 1.0


def test_chi2_pools_sparse_tail():
    law = OffspringLaw({1: 0.9, 2: 0.05, 3: 0.04, 9: 0.01})
    counts = {1: 92, 2: 4, 3: 3, 9: 1}
    res = chi2_gof(counts, law, min_expected=5)
    # tail cells pooled until every expected count clears the floor
    assert res.dof >= 1
    assert res.pvalue > 1e-6


def test_chi2_unpoolable_raises():
    law = OffspringLaw({1: 0.5, 2: 0.5})
    with pytest.raises(ValueError):
        chi2_gof({1: 2, 2: 1}, law, min_expected=5)
    # pooling that swallows everything is vacuous, not an error
    assert chi2_gof({1: 2, 2: 3}, law, min_expected=5).vacuous


def test_chi2_rejects_foreign_counts():
    law = OffspringLaw({1: 0.5, 2: 0.5})
    with pytest.raises(ValueError):
        chi2_gof({1: 10, 7: 3}, law)


def test_moments_match_numpy():
    rng = RngStream(seed=26, stream_id=0)
    xs = rng.normal(size=5000) * 2.0 + 1.0
    s = moments_with_se(xs)
    assert s.n == 5000
    assert s.mean == pytest.approx(float(np.mean(xs)), rel=1e-14)
    assert s.variance == pytest.approx(float(np.var(xs, ddof=1)), rel=1e-12)
    assert s.se_mean == pytest.approx(math.sqrt(s.variance / 5000), rel=1e-12)
    # for a normal sample, sd(s^2) ~ sigma^2 sqrt(2/n)
    assert s.se_variance == pytest.approx(4.0 * math.sqrt(2.0 / 5000), rel=0.15)


def test_moment_ses_shrink():
    rng = RngStream(seed=27, stream_id=0)
    small = moments_with_se(rng.uniform(size=100))
    big = moments_with_se(rng.uniform(size=10000))
    assert big.se_mean < small.se_mean
    assert big.se_variance < small.se_variance


def test_sample_pool_roundtrip(tmp_path):
    pool = SamplePool("endpoint", np.array([0.5, 1.25, 3.0]),
                      meta={"seed": "7", "t": "1.0"})
    fp = tmp_path / "pool.csv"
    pool.to_csv(fp)
    back = SamplePool.from_csv(fp)
    assert back.label == "endpoint"
    assert back.meta["seed"] == "7"
    assert np.array_equal(back.values, pool.values)
    # bit-exact floats survive the text roundtrip
    assert back.values.dtype == np.float64
