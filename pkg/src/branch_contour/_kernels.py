"""Compiled Monte Carlo kernels for the two replicate-heavy simulations.

These duplicate, for speed only, laws that also have pure-Python reference
implementations (gillespie_population and explore_direct); the test suite
pins the kernels to the references by distribution. Each replicate runs its
own splitmix64 stream started from its entry of a caller-supplied seed
array, so results cannot depend on how replicates are chunked over threads.
Exponentials come from a 256-layer Marsaglia-Tsang ziggurat whose tables are
built here at import; the sampler and the table geometry have their own
tests.
"""
from __future__ import annotations

import math

import numpy as np
from numba import njit

STACK_CAP = 1 << 16

_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_S3 = np.uint64(3)
_S8 = np.uint64(8)
_IDX_MASK = np.uint64(0xFF)
_INV53 = 1.0 / 9007199254740992.0
_M53 = 9007199254740992.0

ZIG_R = 7.697117470131487
ZIG_V = 0.0039496598225815571993


def build_exp_ziggurat() -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(ke, we, fe) tables, m = 2^53; layer i has area ZIG_V by construction."""
    ke = np.zeros(256, dtype=np.uint64)
    we = np.zeros(256, dtype=np.float64)
    fe = np.zeros(256, dtype=np.float64)
    de = ZIG_R
    te = ZIG_R
    q = ZIG_V / math.exp(-de)
    ke[0] = np.uint64((de / q) * _M53)
    ke[1] = 0
    we[0] = q / _M53
    we[255] = de / _M53
    fe[0] = 1.0
    fe[255] = math.exp(-de)
    for i in range(254, 0, -1):
        de = -math.log(ZIG_V / de + math.exp(-de))
        ke[i + 1] = np.uint64((de / te) * _M53)
        te = de
        fe[i] = math.exp(-de)
        we[i] = de / _M53
    return ke, we, fe


_KE, _WE, _FE = build_exp_ziggurat()


@njit(inline="always")
def _next_u64(state):
    state += _GAMMA
    z = (state ^ (state >> _S30)) * _MIX1
    z = (z ^ (z >> _S27)) * _MIX2
    return z ^ (z >> _S31), state


@njit(inline="always")
def _next_double(state):
    z, state = _next_u64(state)
    return float(z >> _S11) * _INV53, state


@njit(inline="always")
def _next_exp(state):
    while True:
        z, state = _next_u64(state)
        ri = z >> _S3
        idx = int(ri & _IDX_MASK)
        ri = ri >> _S8
        x = float(ri) * _WE[idx]
        if ri < _KE[idx]:
            return x, state
        if idx == 0:
            u, state = _next_double(state)
            return ZIG_R - math.log1p(-u), state
        u, state = _next_double(state)
        if (_FE[idx - 1] - _FE[idx]) * u + _FE[idx] < math.exp(-x):
            return x, state


@njit(cache=True, nogil=True)
def exponential_block(seed, out):
    """Unit-rate exponentials from one splitmix64 stream, for law tests."""
    state = np.uint64(seed)
    for i in range(out.size):
        e, state = _next_exp(state)
        out[i] = e


@njit(cache=True, nogil=True)
def uniform_block(seed, out):
    """Uniform [0, 1) doubles from one splitmix64 stream, for law tests."""
    state = np.uint64(seed)
    for i in range(out.size):
        u, state = _next_double(state)
        out[i] = u


@njit(cache=True, nogil=True)
def gillespie_grid_block(seeds, z0, lam, mu, support, cumprobs, horizon, t_grid, out):
    """Population values at the grid times for each seed; row i from seeds[i].

    State k waits Exp(k (lam + mu)); a birth (probability lam/(lam+mu)) adds
    a batch from the law (support, cumprobs), a death removes one. The walk
    stops at absorption or horizon; grid times get the state holding there.
    """
    total = lam + mu
    p_birth = lam / total
    n_grid = t_grid.size
    single = support.size == 1
    for i in range(seeds.size):
        state = np.uint64(seeds[i])
        k = z0
        t = 0.0
        gi = 0
        while k > 0:
            e, state = _next_exp(state)
            t_next = t + e / (k * total)
            while gi < n_grid and t_grid[gi] < t_next and t_grid[gi] < horizon:
                out[i, gi] = k
                gi += 1
            if t_next >= horizon:
                break
            u, state = _next_double(state)
            if u < p_birth:
                if single:
                    k += support[0]
                else:
                    ub, state = _next_double(state)
                    j = 0
                    while cumprobs[j] <= ub:
                        j += 1
                    k += support[j]
            else:
                k -= 1
            t = t_next
        while gi < n_grid:
            out[i, gi] = k
            gi += 1


@njit(cache=True, nogil=True)
def height_marginal_block(seeds, lam, mu, gamma, slope, s_target, support,
                          cumprobs, out):
    """H at path time s_target for an endless forest exploration, per seed.

    Same stack algorithm as the reference explorer (climb Exp(mu) capped at
    gamma, descend Exp(lam), land on the deepest pending-sibling level or at
    0), but tracking only elapsed s; the marginal is read off mid-segment.
    """
    stack_levels = np.empty(STACK_CAP, dtype=np.float64)
    stack_rem = np.empty(STACK_CAP, dtype=np.int64)
    single = support.size == 1
    for i in range(seeds.size):
        state = np.uint64(seeds[i])
        s = 0.0
        current = 0.0
        sp = 0
        while True:
            e, state = _next_exp(state)
            peak = current + e / mu
            if peak > gamma:
                peak = gamma
            ds = (peak - current) / slope
            if s + ds >= s_target:
                out[i] = current + (s_target - s) * slope
                break
            s += ds
            e, state = _next_exp(state)
            drop = e / lam
            floor = stack_levels[sp - 1] if sp > 0 else 0.0
            candidate = peak - drop
            if candidate > floor:
                land = candidate
                theta = 1
                if single:
                    theta = support[0]
                else:
                    u, state = _next_double(state)
                    j = 0
                    while cumprobs[j] <= u:
                        j += 1
                    theta = support[j]
                if theta > 1:
                    if sp >= STACK_CAP:
                        raise RuntimeError("pending-sibling stack overflow")
                    stack_levels[sp] = candidate
                    stack_rem[sp] = theta - 1
                    sp += 1
            else:
                land = floor
                if sp > 0:
                    if stack_rem[sp - 1] == 1:
                        sp -= 1
                    else:
                        stack_rem[sp - 1] -= 1
            ds = (peak - land) / slope
            if s + ds >= s_target:
                out[i] = peak - (s_target - s) * slope
                break
            s += ds
            current = land
