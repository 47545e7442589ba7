"""Deterministic stream behavior."""

import math

import numpy as np
from numpy.random import Generator, Philox

from branch_contour.rng import RngStream, exp_inverse_cdf


def test_same_key_same_draws():
    a = RngStream(seed=7, stream_id=3)
    b = RngStream(seed=7, stream_id=3)
    assert np.array_equal(a.uniform(size=100), b.uniform(size=100))
    assert np.array_equal(a.exponential(2.0, size=50), b.exponential(2.0, size=50))


def test_distinct_streams_differ():
    a = RngStream(seed=7, stream_id=0)
    b = RngStream(seed=7, stream_id=1)
    assert not np.array_equal(a.uniform(size=100), b.uniform(size=100))


def test_substream_is_stateless():
    root = RngStream(seed=11, stream_id=0)
    first = root.substream(5).uniform(size=10)
    root.uniform(size=1000)  # consuming the parent must not shift children
    second = root.substream(5).uniform(size=10)
    assert np.array_equal(first, second)
    assert not np.array_equal(first, root.substream(6).uniform(size=10))


def test_substream_indices_do_not_collide():
    root = RngStream(seed=0, stream_id=2)
    seen = {tuple(root.substream(i).uniform(size=4)) for i in range(200)}
    assert len(seen) == 200


def test_adjacent_large_stream_ids_differ():
    """Mixed substream ids exceed 2**63; the key must not round through float."""
    base = 2 ** 63 + 11
    a = RngStream(seed=74, stream_id=base).uniform(size=6)
    b = RngStream(seed=74, stream_id=base + 1).uniform(size=6)
    assert not np.array_equal(a, b)
    root = RngStream(seed=74, stream_id=1)
    kids = {tuple(root.substream(i).uniform(size=4)) for i in range(64)}
    assert len(kids) == 64


def test_exponential_is_inverse_cdf_of_uniform():
    """The exponential channel is pinned to -log1p(-U)/rate, not a ziggurat."""
    raw = Generator(Philox(key=[13, 4])).random(1000)
    stream = RngStream(seed=13, stream_id=4)
    got = stream.exponential(2.5, size=1000)
    assert np.allclose(got, -np.log1p(-raw) / 2.5, rtol=0, atol=0)


def test_exp_inverse_cdf_midpoint():
    assert exp_inverse_cdf(0.5, 1.0) == -math.log1p(-0.5)
    assert exp_inverse_cdf(0.5, 1.0) == math.log(2.0)


def test_kernel_seed_block_deterministic():
    a = RngStream(seed=42, stream_id=9).kernel_seed_block(16)
    b = RngStream(seed=42, stream_id=9).kernel_seed_block(16)
    assert np.array_equal(a, b)
    assert a.dtype == np.int64
    assert (a >= 0).all() and (a < 2 ** 63).all()
    assert len(set(a.tolist())) == 16


def test_gamma_and_poisson_channels():
    s = RngStream(seed=3, stream_id=0)
    g = s.gamma(shape=np.array([2.0, 3.0]), scale=0.5)
    assert g.shape == (2,) and (g > 0).all()
    p = RngStream(seed=3, stream_id=1).poisson(4.0, size=10000)
    assert abs(p.mean() - 4.0) < 5 * math.sqrt(4.0 / 10000)
