"""Deterministic fan-out over independent work items.

Kernels release the GIL, so a thread pool gives real parallelism.  Items are
split into contiguous chunks whose boundaries depend only on the item count,
and results are concatenated in item order: the output never depends on the
number of workers.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, TypeVar

T = TypeVar("T")

CHUNK = 64
_workers: int | None = None


def set_workers(n: int | None) -> None:
    global _workers
    _workers = None if n is None else max(1, int(n))


def get_workers() -> int:
    if _workers is not None:
        return _workers
    env = os.environ.get("RWRE_LAB_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def chunks(n_items: int, chunk: int = CHUNK) -> list[tuple[int, int]]:
    return [(a, min(a + chunk, n_items)) for a in range(0, n_items, chunk)]


def map_chunks(fn: Callable[[int, int], T], n_items: int, chunk: int = CHUNK,
               workers: int | None = None) -> list[T]:
    """Apply ``fn(start, stop)`` to fixed chunks of ``range(n_items)``."""
    spans = chunks(n_items, chunk)
    w = workers or get_workers()
    if w == 1 or len(spans) <= 1:
        return [fn(a, b) for a, b in spans]
    with ThreadPoolExecutor(max_workers=w) as pool:
        return list(pool.map(lambda ab: fn(*ab), spans))
