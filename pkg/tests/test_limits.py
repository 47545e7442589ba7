"""Limit objects (Feller transition, reflected BM) and the experiment drivers."""

import json
import math

import numpy as np
import pytest

from branch_contour import (
    FellerSpec,
    OffspringLaw,
    ReflectedBMSpec,
    RescaledFamily,
    RngStream,
    ScalingParams,
    feller_euler_endpoint,
    feller_exact_sample,
    feller_limit,
    h_convergence_experiment,
    height_limit,
    poisson_points,
    rayknight_experiment,
    reflected_bm_sample,
    time_change_exponential_check,
    x_convergence_experiment,
)
from branch_contour.stats import ks_critical_value, ks_two_sample, moments_with_se

TWO_POINT = OffspringLaw({1: 0.5, 3: 0.5})
BINARY = OffspringLaw.deterministic(1)


def test_feller_spec_validation():
    with pytest.raises(ValueError):
        FellerSpec(x0=-1.0, drift=0.0, kappa=1.0)
    with pytest.raises(ValueError):
        FellerSpec(x0=1.0, drift=math.inf, kappa=1.0)
    with pytest.raises(ValueError):
        FellerSpec(x0=1.0, drift=0.0, kappa=0.0)


def test_feller_moment_formulas():
    spec = FellerSpec(x0=1.0, drift=-0.5, kappa=1.0)
    assert spec.mean(1.0) == pytest.approx(math.exp(-0.5), rel=1e-15)
    assert spec.variance(1.0) == pytest.approx(
        2.0 * math.exp(-0.5) * (1.0 - math.exp(-0.5)), rel=1e-12)
    flat = FellerSpec(x0=2.0, drift=0.0, kappa=1.5)
    assert flat.variance(2.0) == pytest.approx(2.0 * 1.5**2 * 2.0, rel=1e-15)
    assert flat.transition_scale(2.0) == pytest.approx(1.5**2, rel=1e-15)
    # the critical branch is the limit of the drifted one
    near = FellerSpec(x0=2.0, drift=1e-10, kappa=1.5)
    assert near.variance(2.0) == pytest.approx(flat.variance(2.0), rel=1e-6)
    assert near.transition_scale(2.0) == pytest.approx(flat.transition_scale(2.0), rel=1e-6)


def test_exact_sampler_hits_the_moments():
    spec = FellerSpec(x0=1.0, drift=-0.5, kappa=1.0)
    draws = feller_exact_sample(spec, 1.0, RngStream(seed=81, stream_id=0), size=20000)
    s = moments_with_se(draws)
    assert abs(s.mean - spec.mean(1.0)) < 5 * s.se_mean
    assert abs(s.variance - spec.variance(1.0)) < 5 * s.se_variance


def test_exact_sampler_atom_at_zero():
    spec = FellerSpec(x0=1.0, drift=-0.5, kappa=1.0)
    t = 1.0
    draws = feller_exact_sample(spec, t, RngStream(seed=82, stream_id=0), size=20000)
    p0 = math.exp(-spec.x0 * math.exp(spec.drift * t) / spec.transition_scale(t))
    freq = float(np.mean(draws == 0.0))
    se = math.sqrt(p0 * (1 - p0) / draws.size)
    assert abs(freq - p0) < 5 * se
    assert (draws >= 0).all()


def test_exact_sampler_edges():
    spec = FellerSpec(x0=0.7, drift=0.3, kappa=1.0)
    assert feller_exact_sample(spec, 0.0, RngStream(seed=83, stream_id=0)) == 0.7
    dead = FellerSpec(x0=0.0, drift=0.3, kappa=1.0)
    out = feller_exact_sample(dead, 1.0, RngStream(seed=83, stream_id=1), size=5)
    assert np.array_equal(out, np.zeros(5))
    with pytest.raises(ValueError):
        feller_exact_sample(spec, -1.0, RngStream(seed=83, stream_id=2))


def test_euler_agrees_with_exact_transition():
    spec = FellerSpec(x0=1.0, drift=-0.5, kappa=1.0)
    reps = 4000
    exact = feller_exact_sample(spec, 1.0, RngStream(seed=84, stream_id=0), size=reps)
    euler = feller_euler_endpoint(spec, 1.0, 1e-3, RngStream(seed=84, stream_id=1),
                                  size=reps)
    res = ks_two_sample(exact, euler)
    assert res.statistic < ks_critical_value(reps, reps, 1e-3)
    with pytest.raises(ValueError):
        feller_euler_endpoint(spec, 1.0, 0.3, RngStream(seed=84, stream_id=2), size=5)


def test_feller_limit_mapping():
    sp = ScalingParams(n_scale=100, x=1.3, sigma=1.0, alpha=0.5, beta=1.0,
                       offspring=TWO_POINT)
    spec = feller_limit(sp)
    assert spec.x0 == sp.initial_level
    assert spec.drift == -0.5
    assert spec.kappa == pytest.approx(math.sqrt(1.75), rel=1e-15)


def test_reflected_spec_validation_and_mapping():
    with pytest.raises(ValueError):
        ReflectedBMSpec(drift=0.0, scale=0.0)
    with pytest.raises(ValueError):
        ReflectedBMSpec(drift=0.0, scale=1.0, upper=-1.0)
    sp = ScalingParams(n_scale=50, x=1.0, sigma=1.0, alpha=0.25, beta=1.25,
                       offspring=TWO_POINT)
    spec = height_limit(sp, gamma=2.0)
    assert spec.drift == pytest.approx(2.0 * (-1.0) / 1.75, rel=1e-12)
    assert spec.scale == pytest.approx(2.0 / math.sqrt(1.75), rel=1e-12)
    assert spec.upper == 2.0


def test_reflected_bm_driftless_is_folded_normal():
    spec = ReflectedBMSpec(drift=0.0, scale=1.3)
    reps, s = 5000, 0.8
    draws = reflected_bm_sample(spec, s, 1e-3, RngStream(seed=85, stream_id=0), reps)
    ref = np.abs(RngStream(seed=85, stream_id=1).normal(size=reps)) * 1.3 * math.sqrt(s)
    res = ks_two_sample(draws, ref)
    assert res.statistic < ks_critical_value(reps, reps, 1e-3)
    assert (draws >= 0).all()


def test_reflected_bm_negative_drift_reaches_exponential_stationarity():
    # the reflecting boundary carries an O(sqrt(ds)) layer, so ds must be
    # well below the KS resolution of 5000 samples
    spec = ReflectedBMSpec(drift=-1.0, scale=1.0)
    reps = 5000
    draws = reflected_bm_sample(spec, 5.0, 2.5e-4, RngStream(seed=86, stream_id=0), reps)
    ref = RngStream(seed=86, stream_id=1).exponential(2.0, size=reps)
    res = ks_two_sample(draws, ref)
    assert res.statistic < ks_critical_value(reps, reps, 1e-3)


def test_two_sided_reflection_stays_inside_and_mixes_to_uniform():
    spec = ReflectedBMSpec(drift=0.0, scale=1.0, upper=0.8)
    reps = 5000
    draws = reflected_bm_sample(spec, 6.0, 1e-3, RngStream(seed=87, stream_id=0), reps)
    assert (draws >= 0).all() and (draws <= 0.8).all()
    ref = RngStream(seed=87, stream_id=1).uniform(size=reps) * 0.8
    res = ks_two_sample(draws, ref)
    assert res.statistic < ks_critical_value(reps, reps, 1e-3)


def test_reflected_bm_validates_window():
    spec = ReflectedBMSpec(drift=0.0, scale=1.0)
    with pytest.raises(ValueError):
        reflected_bm_sample(spec, 1.0, 0.3, RngStream(seed=88, stream_id=0), 5)
    with pytest.raises(ValueError):
        reflected_bm_sample(spec, -1.0, 0.1, RngStream(seed=88, stream_id=1), 5)


def test_rayknight_experiment_smoke():
    sp = ScalingParams(n_scale=5, x=1.0, sigma=1.0, alpha=0.5, beta=1.0,
                       offspring=TWO_POINT)
    report = rayknight_experiment(sp, gamma=2.0, t_grid=[0.5, 1.0], reps=600,
                                  rng=RngStream(seed=89, stream_id=0),
                                  meta={"seed": 89})
    assert len(report.rows) == 2
    assert report.all_passed(), report.to_csv_summary()
    for row in report.rows:
        # both sides target E L_t = x e^{bt} * unit-scaled mass; just sanity here
        assert row.details["mean_a"] > 0 and row.details["mean_b"] > 0
    parsed = json.loads(report.to_json())
    assert parsed["name"] == "rayknight"
    assert parsed["meta"] == {"seed": 89}
    assert report.to_csv_summary().splitlines()[0].startswith("experiment,")


def test_rayknight_grid_must_sit_inside_horizon():
    sp = ScalingParams(n_scale=5, x=1.0, sigma=1.0, alpha=0.5, beta=1.0,
                       offspring=TWO_POINT)
    with pytest.raises(ValueError):
        rayknight_experiment(sp, gamma=2.0, t_grid=[0.5, 2.0], reps=10,
                             rng=RngStream(seed=90, stream_id=0))


def test_rayknight_is_thread_invariant():
    sp = ScalingParams(n_scale=4, x=1.0, sigma=1.0, alpha=0.5, beta=1.0,
                       offspring=TWO_POINT)
    reports = [
        rayknight_experiment(sp, gamma=1.5, t_grid=[0.6], reps=200,
                             rng=RngStream(seed=91, stream_id=0), threads=k)
        for k in (1, 4)
    ]
    assert reports[0].to_json() == reports[1].to_json()


def test_x_convergence_experiment_smoke():
    family = RescaledFamily(x=1.0, sigma=1.0, alpha=0.0, beta=0.0, offspring=BINARY)
    report = x_convergence_experiment(
        family, n_list=[10, 50], t=1.0, reps=1500,
        rng=RngStream(seed=92, stream_id=0), ks_threshold_final=0.2)
    names = [r.statistic_name for r in report.rows]
    assert names == ["ks", "ks", "ks_max_increase", "ks_final"]
    assert report.rows[-1].passed
    by_n = report.rows[2].details["ks_by_n"]
    assert set(by_n) == {"10", "50"}
    # the critical limit keeps the mean at x
    assert report.rows[0].details["mean_limit"] == pytest.approx(1.0)


def test_x_convergence_is_thread_invariant():
    family = RescaledFamily(x=1.0, sigma=1.0, alpha=0.0, beta=0.0, offspring=BINARY)
    reports = [
        x_convergence_experiment(family, n_list=[10], t=0.5, reps=400,
                                 rng=RngStream(seed=93, stream_id=0),
                                 ks_threshold_final=0.5, threads=k)
        for k in (1, 3)
    ]
    assert reports[0].to_json() == reports[1].to_json()


def test_h_convergence_experiment_smoke():
    family = RescaledFamily(x=1.0, sigma=1.0, alpha=0.0, beta=0.0, offspring=BINARY)
    report = h_convergence_experiment(
        family, n_list=[10], s=0.5, gamma=1.5, reps=1200,
        rng=RngStream(seed=94, stream_id=0), modes=("tree", "paper_sde"),
        ds=2e-3, ks_threshold_final=None)
    assert len(report.rows) == 2
    for row in report.rows:
        assert 0.0 <= row.statistic <= 1.0
        assert row.passed is None  # ungated smoke
        # binary offspring: the two clocks are literally the same rates
        assert row.details["birth_hazard_ratio"] == pytest.approx(1.0, rel=1e-12)
        assert row.details["death_hazard_ratio"] == pytest.approx(1.0, rel=1e-12)
    modes = [r.mode for r in report.rows]
    assert modes == ["tree", "paper_sde"]


def test_h_convergence_hazard_ratios_nonbinary():
    family = RescaledFamily(x=1.0, sigma=1.0, alpha=0.0, beta=0.0,
                            offspring=TWO_POINT)
    report = h_convergence_experiment(
        family, n_list=[8], s=0.3, gamma=1.0, reps=300,
        rng=RngStream(seed=95, stream_id=0), modes=("paper_sde",),
        ds=5e-3, ks_threshold_final=None)
    delta = TWO_POINT.constants.delta
    row = report.rows[0]
    assert row.details["birth_hazard_ratio"] == pytest.approx(delta**2, rel=1e-12)
    assert row.details["death_hazard_ratio"] == pytest.approx(delta**2, rel=1e-12)


def test_h_convergence_is_thread_invariant():
    family = RescaledFamily(x=1.0, sigma=1.0, alpha=0.0, beta=0.0, offspring=BINARY)
    reports = [
        h_convergence_experiment(family, n_list=[6], s=0.4, gamma=1.2, reps=300,
                                 rng=RngStream(seed=96, stream_id=0),
                                 ds=5e-3, ks_threshold_final=None, threads=k)
        for k in (1, 5)
    ]
    assert reports[0].to_json() == reports[1].to_json()


def test_time_change_homogeneous():
    rate = 2.0
    pts = poisson_points(rate, 3000.0, RngStream(seed=97, stream_id=0))
    gaps, res = time_change_exponential_check(pts, rate,
                                              RngStream(seed=97, stream_id=1))
    assert gaps.size == pts.size
    assert abs(gaps.mean() - 1.0) < 5.0 / math.sqrt(gaps.size)
    assert res.statistic < res.critical_value(1e-3)


def test_time_change_piecewise():
    breaks = np.array([0.0, 2.0, 5.0])
    values = np.array([2.0, 0.5])
    # invert the cumulative intensity map over a long run of unit-rate points
    total = np.concatenate([[0.0], np.cumsum(values * np.diff(breaks))])
    blocks = []
    offset = 0.0
    rng = RngStream(seed=98, stream_id=0)
    for _ in range(1200):
        unit_pts = poisson_points(1.0, float(total[-1]), rng)
        blocks.append(offset + np.interp(unit_pts, total, breaks))
        offset += breaks[-1]
    tiled_breaks = np.concatenate(
        [[0.0]] + [k * breaks[-1] + breaks[1:] for k in range(1200)])
    tiled_values = np.tile(values, 1200)
    events = np.concatenate(blocks)
    gaps, res = time_change_exponential_check(
        events, (tiled_breaks, tiled_values), RngStream(seed=98, stream_id=1))
    assert res.statistic < res.critical_value(1e-3)


def test_time_change_validation():
    rng = RngStream(seed=99, stream_id=0)
    with pytest.raises(ValueError):
        time_change_exponential_check(np.array([1.0]), 1.0, rng)
    with pytest.raises(ValueError):
        time_change_exponential_check(np.array([2.0, 1.0]), 1.0, rng)
    with pytest.raises(ValueError):
        time_change_exponential_check(np.array([1.0, 2.0]), -1.0, rng)
    with pytest.raises(ValueError):
        time_change_exponential_check(
            np.array([1.0, 2.0]),
            (np.array([0.0, 1.0]), np.array([1.0, 2.0])), rng)
    with pytest.raises(ValueError):
        # both events sit in a zero-rate cell: compensator gaps vanish
        time_change_exponential_check(
            np.array([1.0, 2.0]),
            (np.array([0.0, 3.0, 4.0]), np.array([0.0, 1.0])), rng)
