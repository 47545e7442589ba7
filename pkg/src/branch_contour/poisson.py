"""Poisson point sets on the half-line and the memoryless splice.

Point sets are sorted 1-d arrays of strictly positive reals T_1 < T_2 < ...
with an implicit origin T_0 = 0. The splice below is what lets the direct
excursion sampler redraw a fresh descent duration at every peak: the points
of the original process strictly before the last point R_M at or below an
independent level M, continued by fresh points translated to start at R_M,
form a Poisson process again, independent of R_M.
"""
from __future__ import annotations

import math

import numpy as np

from .rng import RngStream


def _validate_points(points: np.ndarray, name: str = "points") -> np.ndarray:
    pts = np.asarray(points, dtype=np.float64)
    if pts.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    if pts.size:
        if not np.all(np.isfinite(pts)):
            raise ValueError(f"{name} must be finite")
        if pts[0] <= 0.0:
            raise ValueError(f"{name} must be strictly positive")
        if np.any(np.diff(pts) <= 0.0):
            raise ValueError(f"{name} must be strictly increasing")
    return pts


def poisson_points(rate: float, horizon: float, rng: RngStream) -> np.ndarray:
    """Points of a rate-`rate` Poisson process on (0, horizon].

    Gaps are drawn as exponentials until the running sum leaves the window,
    so the draw count is itself random but the sequence is reproducible for
    a given stream.
    """
    if not rate >= 0:
        raise ValueError(f"rate must be >= 0, got {rate}")
    if not (math.isfinite(horizon) and horizon >= 0):
        raise ValueError(f"horizon must be finite and >= 0, got {horizon}")
    if rate == 0.0 or horizon == 0.0:
        return np.empty(0, dtype=np.float64)
    out: list[float] = []
    t = 0.0
    # draw in blocks; a single block almost always suffices
    block = max(8, int(rate * horizon * 1.5) + 8)
    while True:
        gaps = rng.exponential(rate, size=block)
        for g in gaps:
            t += g
            if t > horizon:
                return np.array(out, dtype=np.float64)
            out.append(t)


def last_point_before(points: np.ndarray, m: float) -> tuple[float, int]:
    """(R_M, K): the largest point <= m and its 1-based index.

    With no point at or below m the implicit origin wins: returns (0.0, 0).
    """
    pts = _validate_points(points)
    if not (math.isfinite(m) and m >= 0):
        raise ValueError(f"m must be finite and >= 0, got {m}")
    k = int(np.searchsorted(pts, m, side="right"))
    if k == 0:
        return 0.0, 0
    return float(pts[k - 1]), k


def splice(points: np.ndarray, m: float, fresh: np.ndarray) -> np.ndarray:
    """Splice fresh points onto the original ones at R_M.

    Returns the set {T_k : k < K} union {T_K + T'_j : j >= 1} where K is the
    1-based index of R_M (K = 0 keeps nothing and leaves fresh untranslated).
    R_M itself is dropped: keeping it would plant an atom at R_M and break
    the exponential law of the spliced gaps.
    """
    pts = _validate_points(points)
    fr = _validate_points(np.asarray(fresh, dtype=np.float64), "fresh")
    r, k = last_point_before(pts, m)
    return np.concatenate([pts[: max(k - 1, 0)], r + fr])
