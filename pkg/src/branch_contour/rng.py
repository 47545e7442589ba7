"""Counter-based random streams.

Every stochastic routine in this package draws from an explicit RngStream.
A stream is keyed by (seed, stream_id) and its draw sequence is a pure
function of that key, so replicate fan-out is order-independent: worker
count and scheduling cannot change results.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

_U64 = np.uint64


def _as_u64(value: int, name: str) -> int:
    if not isinstance(value, (int, np.integer)):
        raise ValueError(f"{name} must be an integer, got {value!r}")
    if not 0 <= int(value) < 2**64:
        raise ValueError(f"{name} must fit in an unsigned 64-bit word, got {value}")
    return int(value)


@dataclass
class RngStream:
    """A Philox-4x64 generator keyed by (seed, stream_id).

    Philox is counter-based: the state is (key, counter), so the k-th draw
    of stream (seed, i) is the same in every run and in every worker.
    """

    seed: int
    stream_id: int = 0
    _gen: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self) -> None:
        # the explicit dtype matters: a plain list with a word above 2**63
        # would be inferred as float64 and collapse nearby stream ids
        key = np.array([_as_u64(self.seed, "seed"),
                        _as_u64(self.stream_id, "stream_id")], dtype=np.uint64)
        self._gen = np.random.Generator(np.random.Philox(key=key))

    def substream(self, index: int) -> "RngStream":
        """Child stream keyed off this one; used for per-replicate fan-out.

        Children of distinct (seed, stream_id, index) never collide: the new
        stream_id mixes the parent id and index through a fixed odd multiplier.
        """
        idx = _as_u64(index, "index")
        mixed = (int(self.stream_id) * 0x9E3779B97F4A7C15 + idx + 1) % 2**64
        return RngStream(self.seed, mixed)

    # -- raw draws ---------------------------------------------------------

    def uniform(self, size=None):
        """U[0, 1) draws (scalar for size=None)."""
        return self._gen.random(size)

    def exponential(self, rate: float, size=None):
        """Exp(rate) via inverse CDF -log(1-U)/rate; scripted uniforms test this."""
        if not rate > 0:
            raise ValueError(f"rate must be positive, got {rate}")
        return -np.log1p(-self._gen.random(size)) / rate

    def poisson(self, mean: float, size=None):
        return self._gen.poisson(mean, size)

    def normal(self, size=None):
        return self._gen.standard_normal(size)

    def gamma(self, shape, scale, size=None):
        return self._gen.gamma(shape, scale, size)

    def integers(self, high: int, size=None):
        return self._gen.integers(0, high, size=size)

    def kernel_seed(self) -> int:
        """A 63-bit seed for a compiled kernel, consumed from this stream."""
        return int(self._gen.integers(0, 2**63))

    def kernel_seed_block(self, count: int) -> np.ndarray:
        """count 63-bit kernel seeds; one sequential block, order-independent use."""
        return self._gen.integers(0, 2**63, size=count, dtype=np.int64)


def exp_inverse_cdf(u: float, rate: float) -> float:
    """The transform behind RngStream.exponential, exposed for scripted draws."""
    if not rate > 0:
        raise ValueError(f"rate must be positive, got {rate}")
    return -np.log1p(-u) / rate
