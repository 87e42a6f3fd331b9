"""Seeded, counter-indexed random streams.

Every stochastic routine draws from fixed-size blocks; block ``b`` of stream
``key`` always gets the generator seeded by ``(seed, *key, b)``.  The result of
a computation therefore depends only on the seed, never on how many workers
processed the blocks.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

import numpy as np

BLOCK = 1024

T = TypeVar("T")

_threads: int | None = None


def set_threads(k: int | None) -> None:
    """Set the worker count used by :func:`map_blocks` (``None`` = auto)."""
    global _threads
    _threads = None if k is None else max(1, int(k))


def n_threads() -> int:
    if _threads is not None:
        return _threads
    return min(8, os.cpu_count() or 1)


def stream(seed: int, *key: int) -> np.random.Generator:
    """Generator for the substream addressed by ``seed`` and integer ``key``."""
    entropy = [int(seed) & 0xFFFFFFFFFFFFFFFF] + [int(k) & 0xFFFFFFFFFFFFFFFF for k in key]
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy)))


def blocks(total: int, block: int = BLOCK) -> list[tuple[int, int]]:
    """Split ``range(total)`` into ``(start, stop)`` pairs of at most ``block``."""
    return [(s, min(s + block, total)) for s in range(0, total, block)]


def map_blocks(
    fn: Callable[[int, int, int], T],
    total: int,
    parallel: bool = True,
    block: int = BLOCK,
) -> list[T]:
    """Apply ``fn(block_index, start, stop)`` over all blocks, in order.

    Work is threaded when ``parallel`` is set; the returned list is ordered by
    block index either way.
    """
    spans = blocks(total, block)
    jobs: Sequence[tuple[int, tuple[int, int]]] = list(enumerate(spans))
    workers = n_threads() if parallel else 1
    if workers <= 1 or len(jobs) <= 1:
        return [fn(i, s, e) for i, (s, e) in jobs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda job: fn(job[0], *job[1]), jobs))
