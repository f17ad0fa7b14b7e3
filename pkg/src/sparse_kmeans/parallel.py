"""Fan object ranges out to worker threads.

The range split depends only on N, never on the thread count, and each
range writes a disjoint output slice, so results are identical for any
number of workers.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from functools import lru_cache

CHUNK = 256
THREADS_ENV = "SPARSE_KMEANS_THREADS"


def default_threads() -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        n = int(env)
        if n < 1:
            raise ValueError(f"{THREADS_ENV} must be >= 1, got {n}")
        return n
    return os.cpu_count() or 1


@lru_cache(maxsize=None)
def _pool(threads: int) -> ThreadPoolExecutor:
    return ThreadPoolExecutor(max_workers=threads, thread_name_prefix="skm")


def ranges(n: int, chunk: int = CHUNK) -> list[tuple[int, int]]:
    return [(lo, min(lo + chunk, n)) for lo in range(0, n, chunk)]


def for_ranges(kernel, n: int, threads: int, *args) -> None:
    """Call ``kernel(lo, hi, *args)`` over fixed chunks of ``range(n)``."""
    spans = ranges(n)
    if threads <= 1 or len(spans) == 1:
        for lo, hi in spans:
            kernel(lo, hi, *args)
        return
    futures = [_pool(threads).submit(kernel, lo, hi, *args) for lo, hi in spans]
    for f in futures:
        f.result()
