"""Worker-count policy and deterministic block seeding."""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Sequence, TypeVar

import numpy as np

T = TypeVar("T")
THREADS_ENV = "KPZ_LDP_THREADS"


def worker_count(requested: int | None = None) -> int:
    if requested is not None and requested > 0:
        return int(requested)
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


def block_rng(seed: int, block: int) -> np.random.Generator:
    """Generator for one block of samples, keyed only by (seed, block)."""
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(block)]))


def map_blocks(fn: Callable[[int], T], n_blocks: int, workers: int | None = None) -> list[T]:
    """Evaluate fn on every block index; the output order never depends on the pool."""
    workers = min(worker_count(workers), max(n_blocks, 1))
    if workers == 1:
        return [fn(b) for b in range(n_blocks)]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, range(n_blocks)))


def block_sizes(total: int, block: int) -> Sequence[int]:
    full, rest = divmod(total, block)
    return [block] * full + ([rest] if rest else [])
