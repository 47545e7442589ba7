"""Deterministic replicate fan-out.

Workers get contiguous index chunks and write into caller-owned arrays;
every replicate is keyed by its own index, so the split (and hence the
thread count) cannot affect any result byte.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable

ENV_THREADS = "BRANCH_CONTOUR_THREADS"


def resolve_threads(threads: int | None) -> int:
    """Explicit argument, else the environment variable, else 1."""
    if threads is not None:
        value = threads
    else:
        value = int(os.environ.get(ENV_THREADS, "1"))
    if value < 1:
        raise ValueError(f"thread count must be >= 1, got {value}")
    return value


def run_chunked(worker: Callable[[int, int], None], n_items: int,
                threads: int | None = None) -> None:
    """Call worker(lo, hi) over a partition of range(n_items)."""
    threads = resolve_threads(threads)
    if n_items <= 0:
        return
    if threads == 1:
        worker(0, n_items)
        return
    bounds = [round(i * n_items / threads) for i in range(threads + 1)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(worker, lo, hi)
                   for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]
        for fut in futures:
            fut.result()
