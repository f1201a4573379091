"""Order-preserving parallel map.

``FEDBV_THREADS`` sets the worker count (default 1, i.e. serial).  Results
are returned in input order so exact reductions stay deterministic.
"""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor


def workers() -> int:
    raw = os.environ.get("FEDBV_THREADS", "1")
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"FEDBV_THREADS must be an integer, got {raw!r}") from None
    return max(1, n)


def pmap(fn, items):
    items = list(items)
    n = workers()
    if n == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=n) as ex:
        return list(ex.map(fn, items))
