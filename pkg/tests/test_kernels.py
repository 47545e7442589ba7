"""Compiled simulation kernels against their pure-Python references."""

import math

import numpy as np
import pytest

from branch_contour import (
    ModelParams,
    OffspringLaw,
    RngStream,
    ScalingParams,
    exploration_params,
    explore_direct,
    gillespie_population,
    mean_population,
    parametrize,
)
from branch_contour._kernels import gillespie_grid_block, height_marginal_block
from branch_contour.stats import ks_critical_value, ks_two_sample

TWO_POINT = OffspringLaw({1: 0.5, 3: 0.5})


def run_grid_kernel(seeds, z0, lam, mu, law, horizon, t_grid):
    out = np.empty((len(seeds), len(t_grid)), dtype=np.float64)
    gillespie_grid_block(np.asarray(seeds, dtype=np.int64), z0, lam, mu,
                         law.support.astype(np.int64), law._cum, horizon,
                         np.asarray(t_grid, dtype=np.float64), out)
    return out


def test_grid_kernel_matches_python_chain_in_law():
    lam, mu, z0, horizon = 0.6, 2.0, 10, 1.0
    t_grid = np.array([0.25, 0.6, 1.0])
    reps = 4000
    seeds = RngStream(seed=71, stream_id=0).kernel_seed_block(reps)
    kern = run_grid_kernel(seeds, z0, lam, mu, TWO_POINT, horizon, t_grid)

    params = ModelParams(TWO_POINT, birth_rate=lam, death_rate=mu)
    rng = RngStream(seed=71, stream_id=1)
    ref = np.empty((reps, len(t_grid)))
    for i in range(reps):
        path = gillespie_population(params, z0, rng, t_end=horizon)
        ref[i] = path.values_at(t_grid)

    crit = ks_critical_value(reps, reps, 1e-3)
    for j, t in enumerate(t_grid):
        res = ks_two_sample(kern[:, j], ref[:, j])
        assert res.statistic < crit, f"t={t}: {res.statistic} vs {crit}"
        exact = mean_population(params, z0, float(t))
        se = kern[:, j].std(ddof=1) / math.sqrt(reps)
        assert abs(kern[:, j].mean() - exact) < 5 * se


def test_grid_kernel_is_deterministic_and_chunkable():
    lam, mu, z0 = 0.9, 1.8, 6
    t_grid = np.array([0.3, 0.8])
    seeds = RngStream(seed=72, stream_id=0).kernel_seed_block(64)
    whole = run_grid_kernel(seeds, z0, lam, mu, TWO_POINT, 0.8, t_grid)
    again = run_grid_kernel(seeds, z0, lam, mu, TWO_POINT, 0.8, t_grid)
    assert np.array_equal(whole, again)
    # row i depends on seeds[i] alone, so any split reproduces the block
    parts = np.vstack([
        run_grid_kernel(seeds[:20], z0, lam, mu, TWO_POINT, 0.8, t_grid),
        run_grid_kernel(seeds[20:45], z0, lam, mu, TWO_POINT, 0.8, t_grid),
        run_grid_kernel(seeds[45:], z0, lam, mu, TWO_POINT, 0.8, t_grid),
    ])
    assert np.array_equal(whole, parts)


def test_grid_kernel_absorbs_at_zero():
    seeds = RngStream(seed=73, stream_id=0).kernel_seed_block(200)
    out = run_grid_kernel(seeds, 1, 0.1, 30.0, TWO_POINT, 2.0, np.array([1.0, 2.0]))
    # death rate dwarfs births: nearly every path is absorbed, and stays there
    assert (out[:, 1][out[:, 0] == 0.0] == 0.0).all()
    assert (out >= 0).all()


def python_height_marginal(scaling, gamma, s_target, reps, rng):
    """Reference: run the pure explorer excursion by excursion to time s."""
    params, clock = exploration_params(scaling, "tree", gamma)
    out = np.empty(reps)
    for i in range(reps):
        sub = rng.substream(i)
        elapsed = 0.0
        while True:
            path = explore_direct(params, 1, sub, clock=clock)
            verts = parametrize(path)
            span = float(verts[-1, 0])
            if elapsed + span >= s_target:
                out[i] = float(np.interp(s_target - elapsed, verts[:, 0], verts[:, 1]))
                break
            elapsed += span
    return out


def test_height_kernel_matches_python_explorer_in_law():
    sp = ScalingParams(n_scale=4, x=1.0, sigma=1.0, alpha=0.3, beta=0.8,
                       offspring=TWO_POINT)
    gamma, s_target, reps = 1.5, 0.7, 3000
    lam, mu = sp.birth_rate, sp.death_rate
    seeds = RngStream(seed=74, stream_id=0).kernel_seed_block(reps)
    kern = np.empty(reps)
    height_marginal_block(seeds, lam, mu, gamma, sp.slope, s_target,
                          TWO_POINT.support.astype(np.int64), TWO_POINT._cum, kern)
    ref = python_height_marginal(sp, gamma, s_target, reps,
                                 RngStream(seed=74, stream_id=1))
    res = ks_two_sample(kern, ref)
    assert res.statistic < ks_critical_value(reps, reps, 1e-3)
    assert (kern >= 0).all() and kern.max() <= gamma
    assert (ref >= 0).all() and ref.max() <= gamma


def test_height_kernel_deterministic():
    sp = ScalingParams(n_scale=3, x=1.0, sigma=1.0, alpha=0.0, beta=0.5,
                       offspring=TWO_POINT)
    seeds = RngStream(seed=75, stream_id=0).kernel_seed_block(50)
    a = np.empty(50)
    b = np.empty(50)
    for out in (a, b):
        height_marginal_block(seeds, sp.birth_rate, sp.death_rate, 2.0, sp.slope,
                              0.5, TWO_POINT.support.astype(np.int64),
                              TWO_POINT._cum, out)
    assert np.array_equal(a, b)


def test_ziggurat_table_geometry():
    # every layer carries area ZIG_V; the base strip is rectangle plus tail
    from branch_contour._kernels import ZIG_R, ZIG_V, build_exp_ziggurat

    ke, we, fe = build_exp_ziggurat()
    xs = we * 2.0**53
    assert xs[255] == ZIG_R
    areas = xs[1:] * (fe[:-1] - fe[1:])
    assert np.max(np.abs(areas - ZIG_V)) < 1e-9 * ZIG_V
    base = ZIG_R * math.exp(-ZIG_R) + math.exp(-ZIG_R)
    assert abs(base - ZIG_V) < 1e-9 * ZIG_V
    assert np.all(np.diff(xs[1:]) > 0)
    assert np.all(np.diff(fe) < 0)
    assert fe[0] == 1.0 and ke[1] == 0


def test_kernel_exponential_law():
    from scipy import stats

    from branch_contour._kernels import ZIG_R, exponential_block

    n = 1_000_000
    out = np.empty(n)
    exponential_block(987654321, out)
    ks = stats.kstest(out, "expon")
    assert ks.statistic < 1.9495 / math.sqrt(n)  # 0.1% one-sample asymptotic
    assert abs(out.mean() - 1.0) < 5.0 / math.sqrt(n)
    assert abs(out.var() - 1.0) < 5.0 * math.sqrt(8.0 / n)  # Var((X-1)^2)=8
    assert out.min() > 0.0
    # the tail branch beyond the last layer boundary is exercised and correct
    p_tail = math.exp(-ZIG_R)
    emp = (out > ZIG_R).mean()
    assert abs(emp - p_tail) < 5.0 * math.sqrt(p_tail * (1 - p_tail) / n)


def test_kernel_uniform_law():
    from scipy import stats

    from branch_contour._kernels import uniform_block

    n = 500_000
    out = np.empty(n)
    uniform_block(13579, out)
    ks = stats.kstest(out, "uniform")
    assert ks.statistic < 1.9495 / math.sqrt(n)
    assert 0.0 <= out.min() and out.max() < 1.0


def test_kernel_streams_differ_by_seed():
    from branch_contour._kernels import exponential_block

    a = np.empty(1000)
    b = np.empty(1000)
    exponential_block(1, a)
    exponential_block(2, b)
    assert not np.array_equal(a, b)
    c = np.empty(1000)
    exponential_block(1, c)
    assert np.array_equal(a, c)
