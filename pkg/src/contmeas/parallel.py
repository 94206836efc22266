"""Deterministic chunked execution.

Work is split into chunks whose boundaries depend only on the problem size
and ``chunk_size``, never on the worker count; results come back in chunk
order.  Every reduction downstream therefore sees identical inputs in an
identical order whether one or many threads ran the chunks.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor


def chunk_bounds(n: int, chunk_size: int) -> list[tuple[int, int]]:
    if chunk_size < 1:
        raise ValueError("chunk_size must be >= 1")
    return [(lo, min(lo + chunk_size, n)) for lo in range(0, n, chunk_size)]


def map_chunks(fn, n: int, chunk_size: int, threads: int = 1) -> list:
    """Apply ``fn(lo, hi)`` to each chunk; results are returned in chunk order."""
    bounds = chunk_bounds(n, chunk_size)
    if threads <= 1 or len(bounds) <= 1:
        return [fn(lo, hi) for lo, hi in bounds]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        futures = [pool.submit(fn, lo, hi) for lo, hi in bounds]
        return [f.result() for f in futures]
