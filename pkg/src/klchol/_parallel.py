"""Deterministic thread-pool map.

Work is split into fixed-size chunks that do not depend on the worker count,
and results come back in submission order, so outputs are identical for any
number of threads.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

CHUNK = 256


def chunks(n: int, size: int = CHUNK):
    return [(a, min(a + size, n)) for a in range(0, n, size)]


def pmap(fn, items, threads: int = 1):
    items = list(items)
    if threads <= 1 or len(items) <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(fn, items))
